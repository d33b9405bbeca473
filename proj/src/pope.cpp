#include "groundguide/pope.hpp"

#include <algorithm>
#include <set>

#include "groundguide/error.hpp"
#include "groundguide/random.hpp"

namespace groundguide {

void CooccurrenceStats::add_image(const std::set<std::string>& objects) {
  for (auto a = objects.begin(); a != objects.end(); ++a) {
    ++freq_[*a];
    for (auto b = std::next(a); b != objects.end(); ++b) {
      ++pairs_[{*a, *b}];
    }
  }
}

std::size_t CooccurrenceStats::pair_count(std::string_view a,
                                          std::string_view b) const {
  if (a == b) return 0;
  std::pair<std::string, std::string> key{std::string(std::min(a, b)),
                                          std::string(std::max(a, b))};
  const auto it = pairs_.find(key);
  return it == pairs_.end() ? 0 : it->second;
}

std::size_t CooccurrenceStats::frequency(std::string_view label) const {
  const auto it = freq_.find(label);
  return it == freq_.end() ? 0 : it->second;
}

CooccurrenceStats build_cooccurrence(std::span<const AnnotationRecord> annotations) {
  CooccurrenceStats stats;
  for (const auto& a : annotations) stats.add_image(a.objects);
  return stats;
}

std::string_view to_string(PopeSetting setting) {
  switch (setting) {
    case PopeSetting::Random: return "random";
    case PopeSetting::Popular: return "popular";
    case PopeSetting::Adversarial: return "adversarial";
  }
  return "random";
}

PopeSetting parse_pope_setting(std::string_view name) {
  if (name == "random") return PopeSetting::Random;
  if (name == "popular") return PopeSetting::Popular;
  if (name == "adversarial") return PopeSetting::Adversarial;
  throw Error(ErrorCode::InvalidArgument,
              "unknown POPE setting '" + std::string(name) + "'");
}

std::string_view to_string(Answer answer) {
  switch (answer) {
    case Answer::Yes: return "yes";
    case Answer::No: return "no";
    case Answer::Invalid: return "invalid";
  }
  return "invalid";
}

std::string pope_question_text(std::string_view object) {
  return "Is there a " + std::string(object) + " in this image?";
}

OrderedJson PopeQuestion::to_json() const {
  OrderedJson j;
  j["image_id"] = image_id;
  j["object"] = object;
  j["expected"] = to_string(expected);
  j["setting"] = to_string(setting);
  j["question_text"] = question_text;
  return j;
}

PopeQuestion PopeQuestion::from_json(const Json& j) {
  PopeQuestion q;
  try {
    q.image_id = j.at("image_id").get<std::string>();
    q.object = j.at("object").get<std::string>();
    const auto expected = j.at("expected").get<std::string>();
    if (expected == "yes") {
      q.expected = Answer::Yes;
    } else if (expected == "no") {
      q.expected = Answer::No;
    } else {
      throw Error(ErrorCode::ParseFailure, "expected must be yes or no");
    }
    q.setting = parse_pope_setting(j.at("setting").get<std::string>());
    q.question_text = j.value("question_text", pope_question_text(q.object));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseFailure, std::string("bad question: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseFailure, std::string("bad question: ") + e.what());
  }
  return q;
}

namespace {

std::vector<std::string> sample_without_replacement(std::vector<std::string> pool,
                                                    std::size_t n, Rng& rng) {
  // Partial Fisher-Yates over a sorted pool keeps results independent of
  // container iteration order.
  std::sort(pool.begin(), pool.end());
  n = std::min(n, pool.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  return pool;
}

// Highest score first, ties by name.
std::vector<std::string> top_by_score(std::vector<std::pair<std::size_t, std::string>> scored,
                                      std::size_t n) {
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(n, scored.size()); ++i) {
    out.push_back(scored[i].second);
  }
  return out;
}

}  // namespace

PopeBuildResult build_questions(std::span<const AnnotationRecord> annotations,
                                const CooccurrenceStats& stats, PopeSetting setting,
                                std::size_t questions_per_image, std::uint64_t seed,
                                const std::optional<std::vector<std::string>>& vocabulary) {
  if (questions_per_image % 2 != 0) {
    throw Error(ErrorCode::InvalidArgument, "questions_per_image must be even");
  }
  std::set<std::string> vocab;
  if (vocabulary) {
    vocab.insert(vocabulary->begin(), vocabulary->end());
  } else {
    for (const auto& [label, _] : stats.object_freq()) vocab.insert(label);
  }
  if (vocab.empty()) {
    throw Error(ErrorCode::EmptyVocabulary, "no candidate objects for POPE questions");
  }

  const std::size_t half = questions_per_image / 2;
  Rng rng(seed);
  PopeBuildResult result;
  for (const auto& ann : annotations) {
    std::vector<std::string> present(ann.objects.begin(), ann.objects.end());
    std::vector<std::string> absent;
    for (const auto& v : vocab) {
      if (!ann.objects.contains(v)) absent.push_back(v);
    }
    const std::size_t n = std::min({half, present.size(), absent.size()});
    if (n < half) result.shortfalls.emplace_back(ann.image_id, n);
    if (n == 0) continue;

    const auto yes = sample_without_replacement(present, n, rng);
    std::vector<std::string> no;
    switch (setting) {
      case PopeSetting::Random:
        no = sample_without_replacement(absent, n, rng);
        break;
      case PopeSetting::Popular: {
        std::vector<std::pair<std::size_t, std::string>> scored;
        for (const auto& a : absent) scored.emplace_back(stats.frequency(a), a);
        no = top_by_score(std::move(scored), n);
        break;
      }
      case PopeSetting::Adversarial: {
        std::vector<std::pair<std::size_t, std::string>> scored;
        for (const auto& a : absent) {
          std::size_t score = 0;
          for (const auto& p : present) score += stats.pair_count(p, a);
          scored.emplace_back(score, a);
        }
        no = top_by_score(std::move(scored), n);
        break;
      }
    }

    for (const auto& o : yes) {
      result.questions.push_back({ann.image_id, o, Answer::Yes, setting,
                                  pope_question_text(o)});
    }
    for (const auto& o : no) {
      result.questions.push_back({ann.image_id, o, Answer::No, setting,
                                  pope_question_text(o)});
    }
  }
  return result;
}

Answer parse_answer(std::string_view text) {
  const auto end = text.find_first_of(".!?\n");
  const auto sentence = text.substr(0, end);
  bool yes = false;
  bool no = false;
  for (const auto& w : tokenize_words(sentence)) {
    yes = yes || w == "yes";
    no = no || w == "no";
  }
  if (yes == no) return Answer::Invalid;
  return yes ? Answer::Yes : Answer::No;
}

OrderedJson PopeReport::to_json() const {
  OrderedJson j;
  j["schema_version"] = 1;
  j["accuracy"] = accuracy;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["yes_ratio"] = yes_ratio;
  j["invalid_ratio"] = invalid_ratio;
  j["tp"] = tp;
  j["fp"] = fp;
  j["tn"] = tn;
  j["fn"] = fn;
  j["invalid"] = invalid;
  return j;
}

PopeReport score_pope(std::span<const PopeQuestion> questions,
                      const std::map<std::size_t, std::string>& answers) {
  PopeReport r;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const auto it = answers.find(i);
    if (it == answers.end()) {
      throw Error(ErrorCode::MissingAnswer,
                  "no answer for question " + std::to_string(i));
    }
    const Answer given = parse_answer(it->second);
    const bool positive = questions[i].expected == Answer::Yes;
    switch (given) {
      case Answer::Yes: ++(positive ? r.tp : r.fp); break;
      case Answer::No: ++(positive ? r.fn : r.tn); break;
      case Answer::Invalid: ++r.invalid; break;
    }
  }
  const auto total = static_cast<double>(questions.size());
  if (questions.empty()) return r;
  auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  r.accuracy = static_cast<double>(r.tp + r.tn) / total;
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  r.yes_ratio = static_cast<double>(r.tp + r.fp) / total;
  r.invalid_ratio = static_cast<double>(r.invalid) / total;
  return r;
}

std::vector<PopeQuestion> load_questions(const std::filesystem::path& path) {
  std::vector<PopeQuestion> out;
  const auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      out.push_back(PopeQuestion::from_json(rows[i]));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseFailure, path.string() + ": record " +
                                               std::to_string(i + 1) + ": " +
                                               e.what());
    }
  }
  return out;
}

std::map<std::size_t, std::string> load_answers(const std::filesystem::path& path) {
  std::map<std::size_t, std::string> out;
  const auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      const auto id = rows[i].at("question_id").get<std::size_t>();
      out[id] = rows[i].at("text").get<std::string>();
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseFailure, path.string() + ": record " +
                                               std::to_string(i + 1) + ": " +
                                               e.what());
    }
  }
  return out;
}

}  // namespace groundguide
