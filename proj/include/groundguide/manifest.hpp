#pragma once

// Reproducibility manifest written next to every output file.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "groundguide/decode.hpp"
#include "groundguide/guidance.hpp"
#include "groundguide/jsonl.hpp"

namespace groundguide {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

struct RunSettings {
  GenerationConfig generation;
  GuidanceOptions guidance;
  std::optional<DynamicGammaConfig> dynamic_gamma;
  std::optional<std::string> backend;
  std::string query = std::string(kDefaultQuery);
  std::optional<std::size_t> sample;

  OrderedJson to_json() const;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// UTC, second resolution: 2026-01-31T12:00:00Z
std::string utc_timestamp();

class RunManifest {
 public:
  RunManifest(std::string command, RunSettings settings);

  void add_input(const std::filesystem::path& path);
  void set_extra(const std::string& key, OrderedJson value);
  void finish();

  const RunSettings& settings() const { return settings_; }
  RunSettings& settings() { return settings_; }
  OrderedJson config_snapshot() const { return settings_.to_json(); }
  OrderedJson to_json() const;

  // Writes `<output>.manifest.json`.
  std::filesystem::path write_beside(const std::filesystem::path& output) const;

 private:
  std::string command_;
  RunSettings settings_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  OrderedJson extra_ = OrderedJson::object();
  std::string started_at_;
  std::string finished_at_;
};

}  // namespace groundguide
