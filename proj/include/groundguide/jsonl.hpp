#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace groundguide {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

std::string read_text_file(const std::filesystem::path& path);

// One JSON value per non-blank line. Errors carry "path:line".
std::vector<Json> read_jsonl(const std::filesystem::path& path);
std::vector<Json> parse_jsonl(const std::string& text,
                              const std::string& source_name);

Json read_json_file(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path,
                     const std::string& contents);

}  // namespace groundguide
