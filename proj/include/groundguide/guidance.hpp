#pragma once

// Detection ingestion, canonicalization, multi-model aggregation and
// rendering of the guidance prompt fed to the conditional branch.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "groundguide/jsonl.hpp"

namespace groundguide {

struct DetectionRecord {
  std::string image_id;
  std::string model_id;
  std::string label;
  double confidence = 0.0;
};

// Throws InvalidArgument when the confidence is outside [0, 1] or the label
// is blank.
void validate(const DetectionRecord& record);

DetectionRecord detection_from_json(const Json& j);
std::vector<DetectionRecord> load_detections(const std::filesystem::path& path);

using ThresholdMap = std::map<std::string, double, std::less<>>;

inline constexpr std::string_view kDetrModel = "detr";
inline constexpr std::string_view kRamppModel = "rampp";
inline constexpr double kDefaultDetrThreshold = 0.95;
inline constexpr double kDefaultRamppThreshold = 0.68;

ThresholdMap default_thresholds();

// Keeps records with confidence >= the threshold of their model, in input
// order. Throws UnknownModelId for a model without a threshold.
std::vector<DetectionRecord> threshold_detections(
    std::span<const DetectionRecord> records, const ThresholdMap& thresholds);

// Lowercase, trim, and collapse internal whitespace runs to one space.
std::string normalize_label(std::string_view label);

class SynonymMap {
 public:
  SynonymMap() = default;

  // Keys are normalized; every canonical label is added as a self-mapping.
  // Throws InvalidArgument when a value is outside the vocabulary.
  SynonymMap(const std::map<std::string, std::string>& entries,
             const std::set<std::string>& vocabulary);

  // `{ "phrase": "canonical", ..., "__vocabulary__": [ ... ] }`
  static SynonymMap from_json(const Json& j);
  static SynonymMap load(const std::filesystem::path& path);

  // 80 MSCOCO categories with common surface synonyms.
  static const SynonymMap& coco_default();

  // Exact lookup of an already-normalized phrase.
  std::optional<std::string> find(std::string_view phrase) const;

  const std::map<std::string, std::string, std::less<>>& entries() const {
    return entries_;
  }
  const std::set<std::string, std::less<>>& vocabulary() const {
    return vocabulary_;
  }

  Json to_json() const;

 private:
  std::map<std::string, std::string, std::less<>> entries_;
  std::set<std::string, std::less<>> vocabulary_;
};

// Normalized lookup with a single trailing-"s" strip as fallback.
std::optional<std::string> canonicalize(std::string_view label,
                                        const SynonymMap& map);

enum class AggregationMode { Intersection, Union };

std::string_view to_string(AggregationMode mode);
AggregationMode parse_aggregation_mode(std::string_view name);

// Result is sorted lexicographically. Throws EmptyInput for no sets.
std::vector<std::string> aggregate(
    const std::vector<std::set<std::string>>& per_model_sets,
    AggregationMode mode);

enum class TemplateSet { Intersec, Pope, Union };

std::string_view to_string(TemplateSet set);
TemplateSet parse_template_set(std::string_view name);

inline constexpr std::string_view kObjectSlot = "<OBJECT_GROUNDING>";
inline constexpr std::string_view kQuerySlot = "<QUERY>";

std::span<const std::string_view> prompt_templates(TemplateSet set);

struct RenderedPrompt {
  std::string text;
  std::size_t template_index = 0;
};

// Picks a template uniformly with a generator seeded by `seed` and renders
// the object list into it. The query slot is left in place.
// Throws EmptyObjects for an empty list.
RenderedPrompt build_guidance_prompt(const std::vector<std::string>& objects,
                                     TemplateSet set, std::uint64_t seed);

// Grouped form: the union templates render one comma-separated line per
// group; the other sets flatten the groups (first occurrence wins).
RenderedPrompt build_guidance_prompt(
    const std::vector<std::vector<std::string>>& groups, TemplateSet set,
    std::uint64_t seed);

// Replaces the query slot, or appends the query after a space when the
// guidance text has no slot.
std::string fill_query(std::string_view guidance_text, std::string_view query);

// 0 for empty input.
double mean_confidence(std::span<const DetectionRecord> records);

enum class EmptyGuidancePolicy { Degrade, Error };

struct GuidanceOptions {
  ThresholdMap thresholds = default_thresholds();
  AggregationMode mode = AggregationMode::Intersection;
  TemplateSet template_set = TemplateSet::Intersec;
  std::uint64_t seed = 242;
  EmptyGuidancePolicy empty_policy = EmptyGuidancePolicy::Degrade;
  // Labels outside the synonym map are kept in normalized surface form.
  bool keep_unmapped = true;
  // Models taking part in aggregation. Empty means every model seen in the
  // records handed to the builder.
  std::vector<std::string> models;
};

struct GuidanceBundle {
  std::string image_id;
  std::vector<std::string> objects;  // descending max confidence, then name
  double mean_confidence = 0.0;
  std::string guidance_text;         // empty when nothing survived
  std::optional<std::size_t> template_index;
};

// Per-image template seed derived from the run seed and the image id.
std::uint64_t image_prompt_seed(std::uint64_t seed, std::string_view image_id);

GuidanceBundle build_bundle(std::string_view image_id,
                            std::span<const DetectionRecord> records,
                            const SynonymMap& map,
                            const GuidanceOptions& options);

// One bundle per image id, in the order given. Images without records get
// an empty bundle (or EmptyObjects under the error policy).
std::vector<GuidanceBundle> build_bundles(
    std::span<const DetectionRecord> records,
    const std::vector<std::string>& image_ids, const SynonymMap& map,
    const GuidanceOptions& options);

}  // namespace groundguide
