#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace selfcert {

// Renders the consistency-selection prompt: question header, enumerated
// "Response i:" blocks and the fixed closing instruction. A non-zero
// char_budget makes oversized prompts an error rather than clipping them,
// so context-overflow conditions surface instead of being masked.
std::string build_usc_prompt(const std::string & question,
                             const std::vector<std::string> & responses,
                             size_t char_budget = 0);

} // namespace selfcert
