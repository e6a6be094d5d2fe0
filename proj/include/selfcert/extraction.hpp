#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace selfcert {

enum class AnswerStatus {
    extracted,
    missing,
};

struct ExtractedAnswer {
    std::string raw;
    std::string canonical;
    std::optional<double> numeric_value;
    AnswerStatus status = AnswerStatus::missing;

    bool extracted() const { return status == AnswerStatus::extracted; }
};

// Pulls the final answer out of a structured model response: the last
// well-formed JSON object with an "answer" field wins; otherwise the last
// `answer:`-style tail. A response without either is missing, not an error.
ExtractedAnswer extract_answer(std::string_view response_text);

// Trims, strips quotes / a leading currency symbol / thousands separators,
// normalizes numbers to a canonical decimal form and lowercases text.
std::string canonicalize_answer(std::string_view raw);

// Builds an ExtractedAnswer directly from known answer text (gold answers).
ExtractedAnswer make_answer(std::string_view raw);

// Equality for voting: numeric within 1e-9 relative when both sides are
// numbers, canonical text otherwise. Missing never equals anything.
bool answers_equal(const ExtractedAnswer & a, const ExtractedAnswer & b);

} // namespace selfcert
