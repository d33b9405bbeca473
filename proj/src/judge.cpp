#include "groundguide/judge.hpp"

#include "groundguide/error.hpp"

namespace groundguide {

namespace {

constexpr std::string_view kPreamble =
    "You are required to score the performance of two AI assistants in "
    "describing a given image. You should pay extra attention to the "
    "hallucination, which refers to the part of descriptions that are "
    "inconsistent with the image content, such as claiming the existence of "
    "something not present in the image.\n"
    "\n"
    "Please rate the responses of the assistants on a scale of 1 to 10, where "
    "a higher score indicates better performance, according to the following "
    "criteria:\n"
    "1. Accuracy: whether the response is accurate with respect to the image "
    "content. Responses with fewer hallucinations should be given higher "
    "scores.\n"
    "2. Detailedness: whether the response is rich in necessary details. Note "
    "that hallucinated descriptions should not count as necessary details.\n"
    "\n"
    "Please output a single line for each criterion, containing only two "
    "values indicating the scores for Assistant 1 and 2, respectively. The "
    "two scores are separated by a space. Following the scores, please "
    "provide an explanation of your evaluation, avoiding any potential bias "
    "and ensuring that the order in which the responses were presented does "
    "not affect your judgment.\n"
    "\n";

constexpr std::string_view kOutputFormat =
    "\n"
    "Output format:\n"
    "Accuracy:\n"
    "Scores of the two answers:\n"
    "Reason:\n"
    "Detailedness:\n"
    "Scores of the two answers:\n"
    "Reason:\n";

}  // namespace

std::string render_judge_prompt(std::string_view question,
                                std::string_view answer1,
                                std::string_view answer2) {
  if (question.empty() || answer1.empty() || answer2.empty()) {
    throw Error(ErrorCode::InvalidArgument,
                "question and both answers must be non-empty");
  }
  // Built piecewise so slot-like text inside an argument is never expanded.
  std::string out(kPreamble);
  out += "Question: ";
  out += question;
  out += "\nAssistant 1: ";
  out += answer1;
  out += "\nAssistant 2: ";
  out += answer2;
  out += '\n';
  out += kOutputFormat;
  return out;
}

}  // namespace groundguide
