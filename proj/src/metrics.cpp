#include "groundguide/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "groundguide/error.hpp"

namespace groundguide {

namespace {

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::vector<CaptionRecord> load_captions(const std::filesystem::path& path) {
  std::vector<CaptionRecord> out;
  const auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      CaptionRecord r{rows[i].at("image_id").get<std::string>(),
                      rows[i].at("text").get<std::string>()};
      if (r.image_id.empty()) throw Error(ErrorCode::ParseFailure, "empty image_id");
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::ParseFailure, path.string() + ": record " +
                                               std::to_string(i + 1) + ": " +
                                               e.what());
    }
  }
  return out;
}

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
  std::vector<AnnotationRecord> out;
  const auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      AnnotationRecord r;
      r.image_id = rows[i].at("image_id").get<std::string>();
      for (const auto& o : rows[i].at("objects")) r.objects.insert(o.get<std::string>());
      if (r.image_id.empty()) throw Error(ErrorCode::ParseFailure, "empty image_id");
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::ParseFailure, path.string() + ": record " +
                                               std::to_string(i + 1) + ": " +
                                               e.what());
    }
  }
  return out;
}

OrderedJson ChairReport::to_json() const {
  OrderedJson j;
  j["schema_version"] = 1;
  j["chair_s"] = chair_s;
  j["chair_i"] = chair_i;
  j["recall"] = recall;
  j["hallucinated_instances"] = hallucinated_instances;
  j["mentioned_instances"] = mentioned_instances;
  j["hallucinated_captions"] = hallucinated_captions;
  j["total_captions"] = total_captions;
  j["matched_objects"] = matched_objects;
  j["existing_objects"] = existing_objects;
  return j;
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

MentionExtractor::MentionExtractor(const SynonymMap& map) {
  for (const auto& [phrase, canonical] : map.entries()) {
    const auto words = tokenize_words(phrase);
    if (words.empty()) continue;
    max_words_ = std::max(max_words_, words.size());
    phrases_.emplace(join_words(words), canonical);
  }
}

std::set<std::string> MentionExtractor::extract(std::string_view text) const {
  const auto words = tokenize_words(text);
  std::set<std::string> found;
  std::size_t i = 0;
  while (i < words.size()) {
    std::size_t matched = 0;
    const std::size_t longest = std::min(max_words_, words.size() - i);
    for (std::size_t n = longest; n >= 1 && matched == 0; --n) {
      std::span<const std::string> window(words.data() + i, n);
      auto key = join_words(window);
      auto it = phrases_.find(key);
      if (it == phrases_.end() && key.size() > 1 && key.back() == 's') {
        key.pop_back();
        it = phrases_.find(key);
      }
      if (it != phrases_.end()) {
        found.insert(it->second);
        matched = n;
      }
    }
    i += matched == 0 ? 1 : matched;
  }
  return found;
}

std::set<std::string> extract_mentioned_objects(std::string_view text,
                                                const SynonymMap& map) {
  return MentionExtractor(map).extract(text);
}

ChairReport score_chair(std::span<const CaptionRecord> captions,
                        std::span<const AnnotationRecord> annotations,
                        const SynonymMap& map) {
  std::map<std::string, std::set<std::string>, std::less<>> truth;
  for (const auto& a : annotations) {
    auto& objs = truth[a.image_id];
    for (const auto& o : a.objects) {
      objs.insert(canonicalize(o, map).value_or(normalize_label(o)));
    }
  }

  const MentionExtractor extractor(map);
  ChairReport r;
  for (const auto& c : captions) {
    const auto it = truth.find(c.image_id);
    if (it == truth.end()) {
      throw Error(ErrorCode::MissingAnnotation,
                  "no annotation for image '" + c.image_id + "'");
    }
    const auto& gt = it->second;
    const auto mentioned = extractor.extract(c.text);
    std::size_t hallucinated = 0;
    std::size_t matched = 0;
    for (const auto& m : mentioned) {
      if (gt.contains(m)) {
        ++matched;
      } else {
        ++hallucinated;
      }
    }
    r.mentioned_instances += mentioned.size();
    r.hallucinated_instances += hallucinated;
    r.matched_objects += matched;
    r.existing_objects += gt.size();
    r.hallucinated_captions += hallucinated > 0 ? 1 : 0;
    ++r.total_captions;
  }
  r.chair_i = ratio(r.hallucinated_instances, r.mentioned_instances);
  r.chair_s = ratio(r.hallucinated_captions, r.total_captions);
  r.recall = ratio(r.matched_objects, r.existing_objects);
  return r;
}

}  // namespace groundguide
