#pragma once

// Polling-based object probing: balanced yes/no existence questions and
// their scoring.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "groundguide/jsonl.hpp"
#include "groundguide/metrics.hpp"

namespace groundguide {

class CooccurrenceStats {
 public:
  void add_image(const std::set<std::string>& objects);

  // Symmetric; 0 for unseen pairs and for a == b.
  std::size_t pair_count(std::string_view a, std::string_view b) const;
  std::size_t frequency(std::string_view label) const;

  const std::map<std::pair<std::string, std::string>, std::size_t>& pairs() const {
    return pairs_;
  }
  const std::map<std::string, std::size_t, std::less<>>& object_freq() const {
    return freq_;
  }

 private:
  // Keys are stored with first < second.
  std::map<std::pair<std::string, std::string>, std::size_t> pairs_;
  std::map<std::string, std::size_t, std::less<>> freq_;
};

CooccurrenceStats build_cooccurrence(std::span<const AnnotationRecord> annotations);

enum class PopeSetting { Random, Popular, Adversarial };
enum class Answer { Yes, No, Invalid };

std::string_view to_string(PopeSetting setting);
PopeSetting parse_pope_setting(std::string_view name);
std::string_view to_string(Answer answer);

struct PopeQuestion {
  std::string image_id;
  std::string object;
  Answer expected = Answer::No;  // Yes or No only
  PopeSetting setting = PopeSetting::Random;
  std::string question_text;

  OrderedJson to_json() const;
  static PopeQuestion from_json(const Json& j);
};

std::string pope_question_text(std::string_view object);

inline constexpr std::size_t kDefaultQuestionsPerImage = 6;

struct PopeBuildResult {
  std::vector<PopeQuestion> questions;
  // Images that could not supply questions_per_image / 2 of each polarity,
  // with the number of questions per polarity they did supply.
  std::vector<std::pair<std::string, std::size_t>> shortfalls;
};

// Half of each image's questions probe present objects (expected yes), half
// probe absent ones chosen per the setting. `vocabulary` defaults to every
// object in the stats. Throws EmptyVocabulary when that is empty and
// InvalidArgument for an odd questions_per_image.
PopeBuildResult build_questions(
    std::span<const AnnotationRecord> annotations, const CooccurrenceStats& stats,
    PopeSetting setting, std::size_t questions_per_image, std::uint64_t seed,
    const std::optional<std::vector<std::string>>& vocabulary = std::nullopt);

// First sentence, case-insensitive, standalone "yes"/"no" words. Both or
// neither is invalid.
Answer parse_answer(std::string_view text);

struct PopeReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double yes_ratio = 0.0;
  double invalid_ratio = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  std::size_t invalid = 0;

  OrderedJson to_json() const;
};

// answers[i] is the raw model output for questions[i]. Missing entries
// throw MissingAnswer.
PopeReport score_pope(std::span<const PopeQuestion> questions,
                      const std::map<std::size_t, std::string>& answers);

std::vector<PopeQuestion> load_questions(const std::filesystem::path& path);
// `{ "question_id": <line index>, "text": ... }` per line.
std::map<std::size_t, std::string> load_answers(const std::filesystem::path& path);

}  // namespace groundguide
