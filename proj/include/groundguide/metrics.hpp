#pragma once

// CHAIR hallucination metrics over generated captions.

#include <cstddef>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "groundguide/guidance.hpp"
#include "groundguide/jsonl.hpp"

namespace groundguide {

struct CaptionRecord {
  std::string image_id;
  std::string text;
};

struct AnnotationRecord {
  std::string image_id;
  std::set<std::string> objects;
};

std::vector<CaptionRecord> load_captions(const std::filesystem::path& path);
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path);

struct ChairReport {
  double chair_s = 0.0;
  double chair_i = 0.0;
  double recall = 0.0;
  std::size_t hallucinated_instances = 0;
  std::size_t mentioned_instances = 0;
  std::size_t hallucinated_captions = 0;
  std::size_t total_captions = 0;
  std::size_t matched_objects = 0;
  std::size_t existing_objects = 0;

  OrderedJson to_json() const;
};

// Lowercased words of `text`, split on every non-alphanumeric character.
std::vector<std::string> tokenize_words(std::string_view text);

// Phrase index over a synonym map. Matching walks the caption left to
// right, tries the longest phrase first at each position and consumes the
// matched words, so "hot dog" never also yields "dog".
class MentionExtractor {
 public:
  explicit MentionExtractor(const SynonymMap& map);

  std::set<std::string> extract(std::string_view text) const;

 private:
  std::unordered_map<std::string, std::string> phrases_;
  std::size_t max_words_ = 1;
};

std::set<std::string> extract_mentioned_objects(std::string_view text,
                                                const SynonymMap& map);

// Throws MissingAnnotation when a caption's image has no annotation.
ChairReport score_chair(std::span<const CaptionRecord> captions,
                        std::span<const AnnotationRecord> annotations,
                        const SynonymMap& map);

}  // namespace groundguide
