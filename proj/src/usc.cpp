#include "selfcert/usc.hpp"

#include <sstream>

#include "selfcert/errors.hpp"

namespace selfcert {

std::string build_usc_prompt(const std::string & question,
                             const std::vector<std::string> & responses,
                             size_t char_budget) {
    if (responses.size() < 2) {
        throw UsageError("consistency selection needs at least 2 responses, got " +
                         std::to_string(responses.size()));
    }
    std::ostringstream out;
    out << "I have generated the following responses to the question: " << question << "\n";
    for (size_t i = 0; i < responses.size(); ++i) {
        out << "\nResponse " << i << ": " << responses[i] << "\n";
    }
    out << "\nEvaluate these responses.\n"
           "Select the most consistent response based on majority consensus.\n"
           "Format your answer as \"The most consistent response is Response X\" "
           "(without quotes).";
    std::string prompt = out.str();
    if (char_budget > 0 && prompt.size() > char_budget) {
        throw TruncationError("prompt of " + std::to_string(prompt.size()) +
                              " chars exceeds the budget of " + std::to_string(char_budget));
    }
    return prompt;
}

} // namespace selfcert
