#pragma once

#include <string>
#include <string_view>

namespace groundguide {

// Pairwise judge prompt comparing an original answer (assistant 1) with a
// guided one (assistant 2). Throws InvalidArgument for an empty argument.
std::string render_judge_prompt(std::string_view question,
                                std::string_view answer1,
                                std::string_view answer2);

}  // namespace groundguide
