#include "groundguide/guidance.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <unordered_map>

#include "groundguide/error.hpp"
#include "groundguide/random.hpp"

namespace groundguide {

namespace {

constexpr std::string_view kVocabularyKey = "__vocabulary__";

constexpr std::array<std::string_view, 4> kIntersecTemplates = {
    "This image contains <OBJECT_GROUNDING>. Based on this, <QUERY>",
    "The image contains the following objects: <OBJECT_GROUNDING>. Given "
    "these detected objects, <QUERY>",
    "This image shows the following objects: <OBJECT_GROUNDING>. Using this "
    "information, <QUERY>",
    "The objects found in this image are: <OBJECT_GROUNDING>. Considering "
    "this list of objects, <QUERY>",
};

constexpr std::array<std::string_view, 4> kPopeTemplates = {
    "This image contains only the following objects: <OBJECT_GROUNDING>. Do "
    "not assume anything beyond these objects. Based solely on this list, "
    "<QUERY>",
    "The detected objects in the image are: <OBJECT_GROUNDING>. Answer based "
    "only on these objects. <QUERY>",
    "This image shows the following objects: <OBJECT_GROUNDING>. You must "
    "answer using only the objects in this list. Given these detected "
    "objects, <QUERY>",
    "The objects found in this image are limited to: <OBJECT_GROUNDING>. You "
    "should rely strictly on this list of objects and make no other guesses. "
    "Based on this, <QUERY>",
};

// The object slot expands to one line per detector.
constexpr std::array<std::string_view, 4> kUnionTemplates = {
    "List of detected objects in the image:\n<OBJECT_GROUNDING>\nBased on the "
    "detected objects above, <QUERY>",
    "The most prominent objects detected are:\n<OBJECT_GROUNDING>\nGiven "
    "these findings, <QUERY>",
    "The following objects were detected in the image:\n<OBJECT_GROUNDING>\n"
    "With this information, <QUERY>",
    "Here is a list of all objects detected in the image:\n"
    "<OBJECT_GROUNDING>\nDo not infer or hallucinate any additional objects. "
    "Using only the detected objects, <QUERY>",
};

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

void replace_first(std::string& text, std::string_view slot,
                   std::string_view value) {
  const auto pos = text.find(slot);
  if (pos != std::string::npos) text.replace(pos, slot.size(), value);
}

}  // namespace

void validate(const DetectionRecord& record) {
  if (!(record.confidence >= 0.0 && record.confidence <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument,
                "detection confidence outside [0,1] for image '" +
                    record.image_id + "'");
  }
  if (normalize_label(record.label).empty()) {
    throw Error(ErrorCode::InvalidArgument,
                "blank detection label for image '" + record.image_id + "'");
  }
}

DetectionRecord detection_from_json(const Json& j) {
  DetectionRecord r;
  try {
    r.image_id = j.at("image_id").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.label = j.at("label").get<std::string>();
    r.confidence = j.at("confidence").get<double>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseFailure,
                std::string("bad detection record: ") + e.what());
  }
  validate(r);
  return r;
}

std::vector<DetectionRecord> load_detections(
    const std::filesystem::path& path) {
  std::vector<DetectionRecord> out;
  const auto rows = read_jsonl(path);
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      out.push_back(detection_from_json(rows[i]));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseFailure,
                  path.string() + ": record " + std::to_string(i + 1) + ": " +
                      e.what());
    }
  }
  return out;
}

ThresholdMap default_thresholds() {
  return {{std::string(kDetrModel), kDefaultDetrThreshold},
          {std::string(kRamppModel), kDefaultRamppThreshold}};
}

std::vector<DetectionRecord> threshold_detections(
    std::span<const DetectionRecord> records, const ThresholdMap& thresholds) {
  for (const auto& [model, t] : thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument,
                  "threshold for '" + model + "' outside [0,1]");
    }
  }
  std::vector<DetectionRecord> kept;
  for (const auto& r : records) {
    const auto it = thresholds.find(r.model_id);
    if (it == thresholds.end()) {
      throw Error(ErrorCode::UnknownModelId,
                  "no threshold configured for model '" + r.model_id + "'");
    }
    if (r.confidence >= it->second) kept.push_back(r);
  }
  return kept;
}

std::string normalize_label(std::string_view label) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : label) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

SynonymMap::SynonymMap(const std::map<std::string, std::string>& entries,
                       const std::set<std::string>& vocabulary) {
  for (const auto& label : vocabulary) {
    auto canonical = normalize_label(label);
    if (canonical.empty()) {
      throw Error(ErrorCode::InvalidArgument, "blank canonical label");
    }
    vocabulary_.insert(canonical);
    entries_[canonical] = canonical;
  }
  for (const auto& [phrase, label] : entries) {
    auto key = normalize_label(phrase);
    auto value = normalize_label(label);
    if (key.empty()) continue;
    if (!vocabulary_.contains(value)) {
      throw Error(ErrorCode::InvalidArgument,
                  "synonym '" + phrase + "' maps to '" + label +
                      "', which is not in the vocabulary");
    }
    if (vocabulary_.contains(key) && key != value) {
      throw Error(ErrorCode::InvalidArgument,
                  "canonical label '" + key + "' cannot be remapped");
    }
    entries_[key] = value;
  }
}

SynonymMap SynonymMap::from_json(const Json& j) {
  if (!j.is_object()) {
    throw Error(ErrorCode::ParseFailure, "synonym map must be a JSON object");
  }
  std::map<std::string, std::string> entries;
  std::set<std::string> vocabulary;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == kVocabularyKey) {
        for (const auto& v : value) vocabulary.insert(v.get<std::string>());
      } else {
        entries[key] = value.get<std::string>();
      }
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseFailure,
                std::string("bad synonym map: ") + e.what());
  }
  if (vocabulary.empty()) {
    for (const auto& [_, v] : entries) vocabulary.insert(v);
  }
  return SynonymMap(entries, vocabulary);
}

SynonymMap SynonymMap::load(const std::filesystem::path& path) {
  try {
    return from_json(read_json_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) throw;
    throw Error(ErrorCode::ParseFailure, path.string() + ": " + e.what());
  }
}

std::optional<std::string> SynonymMap::find(std::string_view phrase) const {
  const auto it = entries_.find(phrase);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

Json SynonymMap::to_json() const {
  Json j = Json::object();
  for (const auto& [k, v] : entries_) {
    if (k != v) j[k] = v;
  }
  j[std::string(kVocabularyKey)] = Json(std::vector<std::string>(
      vocabulary_.begin(), vocabulary_.end()));
  return j;
}

std::optional<std::string> canonicalize(std::string_view label,
                                        const SynonymMap& map) {
  const auto key = normalize_label(label);
  if (key.empty()) return std::nullopt;
  if (auto hit = map.find(key)) return hit;
  if (key.size() > 1 && key.back() == 's') {
    return map.find(std::string_view(key).substr(0, key.size() - 1));
  }
  return std::nullopt;
}

std::string_view to_string(AggregationMode mode) {
  return mode == AggregationMode::Intersection ? "intersection" : "union";
}

AggregationMode parse_aggregation_mode(std::string_view name) {
  if (name == "intersection") return AggregationMode::Intersection;
  if (name == "union") return AggregationMode::Union;
  throw Error(ErrorCode::InvalidArgument,
              "unknown aggregation mode '" + std::string(name) + "'");
}

std::vector<std::string> aggregate(
    const std::vector<std::set<std::string>>& per_model_sets,
    AggregationMode mode) {
  if (per_model_sets.empty()) {
    throw Error(ErrorCode::EmptyInput, "aggregate needs at least one set");
  }
  std::set<std::string> acc = per_model_sets.front();
  for (std::size_t i = 1; i < per_model_sets.size(); ++i) {
    const auto& next = per_model_sets[i];
    if (mode == AggregationMode::Union) {
      acc.insert(next.begin(), next.end());
    } else {
      std::erase_if(acc, [&](const std::string& s) { return !next.contains(s); });
    }
  }
  return {acc.begin(), acc.end()};
}

std::string_view to_string(TemplateSet set) {
  switch (set) {
    case TemplateSet::Intersec: return "intersec";
    case TemplateSet::Pope: return "pope";
    case TemplateSet::Union: return "union";
  }
  return "intersec";
}

TemplateSet parse_template_set(std::string_view name) {
  if (name == "intersec" || name == "intersection") return TemplateSet::Intersec;
  if (name == "pope") return TemplateSet::Pope;
  if (name == "union") return TemplateSet::Union;
  throw Error(ErrorCode::InvalidArgument,
              "unknown template set '" + std::string(name) + "'");
}

std::span<const std::string_view> prompt_templates(TemplateSet set) {
  switch (set) {
    case TemplateSet::Intersec: return kIntersecTemplates;
    case TemplateSet::Pope: return kPopeTemplates;
    case TemplateSet::Union: return kUnionTemplates;
  }
  return kIntersecTemplates;
}

RenderedPrompt build_guidance_prompt(const std::vector<std::string>& objects,
                                     TemplateSet set, std::uint64_t seed) {
  return build_guidance_prompt(std::vector<std::vector<std::string>>{objects},
                               set, seed);
}

RenderedPrompt build_guidance_prompt(
    const std::vector<std::vector<std::string>>& groups, TemplateSet set,
    std::uint64_t seed) {
  std::vector<std::vector<std::string>> nonempty;
  for (const auto& g : groups) {
    if (!g.empty()) nonempty.push_back(g);
  }
  if (nonempty.empty()) {
    throw Error(ErrorCode::EmptyObjects, "no objects to render");
  }

  std::string grounding;
  if (set == TemplateSet::Union) {
    std::vector<std::string> lines;
    for (const auto& g : nonempty) lines.push_back(join(g, ", "));
    grounding = join(lines, "\n");
  } else {
    std::vector<std::string> flat;
    std::set<std::string> seen;
    for (const auto& g : nonempty) {
      for (const auto& o : g) {
        if (seen.insert(o).second) flat.push_back(o);
      }
    }
    grounding = join(flat, ", ");
  }

  const auto templates = prompt_templates(set);
  Rng rng(seed);
  RenderedPrompt out;
  out.template_index = static_cast<std::size_t>(uniform_index(rng, templates.size()));
  out.text = std::string(templates[out.template_index]);
  replace_first(out.text, kObjectSlot, grounding);
  return out;
}

std::string fill_query(std::string_view guidance_text, std::string_view query) {
  std::string out(guidance_text);
  const auto pos = out.find(kQuerySlot);
  if (pos != std::string::npos) {
    out.replace(pos, kQuerySlot.size(), query);
  } else if (out.empty()) {
    out = std::string(query);
  } else {
    out += ' ';
    out += query;
  }
  return out;
}

double mean_confidence(std::span<const DetectionRecord> records) {
  if (records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : records) sum += r.confidence;
  return sum / static_cast<double>(records.size());
}

std::uint64_t image_prompt_seed(std::uint64_t seed, std::string_view image_id) {
  return mix_seed(seed, image_id);
}

GuidanceBundle build_bundle(std::string_view image_id,
                            std::span<const DetectionRecord> records,
                            const SynonymMap& map,
                            const GuidanceOptions& options) {
  std::vector<std::string> models = options.models;
  if (models.empty()) {
    std::set<std::string> seen;
    for (const auto& r : records) {
      if (seen.insert(r.model_id).second) models.push_back(r.model_id);
    }
  }

  const auto kept = threshold_detections(records, options.thresholds);

  // Per-model canonical sets plus the max confidence per canonical label.
  std::map<std::string, std::set<std::string>> per_model;
  std::map<std::string, double> best;
  std::vector<DetectionRecord> used;
  for (const auto& r : kept) {
    auto canonical = canonicalize(r.label, map);
    if (!canonical) {
      if (!options.keep_unmapped) continue;
      canonical = normalize_label(r.label);
    }
    per_model[r.model_id].insert(*canonical);
    auto [it, inserted] = best.emplace(*canonical, r.confidence);
    if (!inserted) it->second = std::max(it->second, r.confidence);
    used.push_back(r);
  }

  GuidanceBundle bundle;
  bundle.image_id = std::string(image_id);
  bundle.mean_confidence = mean_confidence(used);

  if (!models.empty()) {
    std::vector<std::set<std::string>> sets;
    sets.reserve(models.size());
    for (const auto& m : models) sets.push_back(per_model[m]);
    bundle.objects = aggregate(sets, options.mode);
  }

  std::stable_sort(bundle.objects.begin(), bundle.objects.end(),
                   [&](const std::string& a, const std::string& b) {
                     const double ca = best[a];
                     const double cb = best[b];
                     if (ca != cb) return ca > cb;
                     return a < b;
                   });

  if (bundle.objects.empty()) {
    if (options.empty_policy == EmptyGuidancePolicy::Error) {
      throw Error(ErrorCode::EmptyObjects,
                  "no guidance objects for image '" + bundle.image_id + "'");
    }
    return bundle;
  }

  std::vector<std::vector<std::string>> groups;
  if (options.template_set == TemplateSet::Union) {
    for (const auto& m : models) {
      std::vector<std::string> group;
      for (const auto& o : bundle.objects) {
        if (per_model[m].contains(o)) group.push_back(o);
      }
      groups.push_back(std::move(group));
    }
  } else {
    groups.push_back(bundle.objects);
  }
  auto rendered = build_guidance_prompt(
      groups, options.template_set, image_prompt_seed(options.seed, image_id));
  bundle.guidance_text = std::move(rendered.text);
  bundle.template_index = rendered.template_index;
  return bundle;
}

std::vector<GuidanceBundle> build_bundles(
    std::span<const DetectionRecord> records,
    const std::vector<std::string>& image_ids, const SynonymMap& map,
    const GuidanceOptions& options) {
  GuidanceOptions opts = options;
  if (opts.models.empty()) {
    std::set<std::string> seen;
    for (const auto& r : records) {
      if (seen.insert(r.model_id).second) opts.models.push_back(r.model_id);
    }
  }
  std::unordered_map<std::string, std::vector<DetectionRecord>> by_image;
  for (const auto& r : records) by_image[r.image_id].push_back(r);

  std::vector<GuidanceBundle> out;
  out.reserve(image_ids.size());
  for (const auto& id : image_ids) {
    const auto it = by_image.find(id);
    if (it == by_image.end()) {
      out.push_back(build_bundle(id, {}, map, opts));
    } else {
      out.push_back(build_bundle(id, it->second, map, opts));
    }
  }
  return out;
}

}  // namespace groundguide
