#include "selfcert/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include <json.hpp>

namespace selfcert {

namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
        ++b;
    }
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
        --e;
    }
    return std::string(s.substr(b, e - b));
}

std::string strip_surrounding_quotes(std::string s) {
    while (s.size() >= 2) {
        const char front = s.front();
        const char back = s.back();
        if ((front == '"' && back == '"') || (front == '\'' && back == '\'') ||
            (front == '`' && back == '`')) {
            s = trim(std::string_view(s).substr(1, s.size() - 2));
        } else {
            break;
        }
    }
    return s;
}

std::string strip_currency_prefix(std::string s) {
    static const char * symbols[] = {"$", "€", "£", "¥"};
    for (const char * sym : symbols) {
        const size_t len = std::char_traits<char>::length(sym);
        if (s.size() > len && s.compare(0, len, sym) == 0) {
            return trim(std::string_view(s).substr(len));
        }
    }
    return s;
}

std::string remove_thousands_separators(const std::string & s) {
    std::string out;
    out.reserve(s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == ',' && i > 0 && i + 1 < s.size() &&
            std::isdigit(static_cast<unsigned char>(s[i - 1])) &&
            std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
            continue;
        }
        out.push_back(s[i]);
    }
    return out;
}

struct DecimalParts {
    bool negative = false;
    std::string digits; // mantissa digits without the point
    int64_t point;      // digits before the decimal point, after exponent folding
};

// Accepts plain decimals with an optional exponent: [+-]?(d+(.d*)?|.d+)([eE][+-]?d+)?
bool parse_decimal(const std::string & s, DecimalParts * out) {
    size_t i = 0;
    DecimalParts parts;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
        parts.negative = s[i] == '-';
        ++i;
    }
    size_t int_digits = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
        parts.digits.push_back(s[i]);
        ++int_digits;
        ++i;
    }
    size_t frac_digits = 0;
    if (i < s.size() && s[i] == '.') {
        ++i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
            parts.digits.push_back(s[i]);
            ++frac_digits;
            ++i;
        }
    }
    if (int_digits + frac_digits == 0) {
        return false;
    }
    int64_t exponent = 0;
    if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
        ++i;
        bool neg_exp = false;
        if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
            neg_exp = s[i] == '-';
            ++i;
        }
        if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i]))) {
            return false;
        }
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
            if (exponent < 100000) {
                exponent = exponent * 10 + (s[i] - '0');
            }
            ++i;
        }
        if (neg_exp) {
            exponent = -exponent;
        }
    }
    if (i != s.size()) {
        return false;
    }
    parts.point = static_cast<int64_t>(int_digits) + exponent;
    *out = parts;
    return true;
}

// Renders the canonical decimal: no exponent, no leading/trailing zeros,
// "-0" normalized to "0".
std::string render_decimal(DecimalParts parts) {
    std::string & d = parts.digits;
    int64_t point = parts.point;
    // strip leading zeros (shifting the point)
    size_t lead = 0;
    while (lead < d.size() && d[lead] == '0') {
        ++lead;
    }
    d.erase(0, lead);
    point -= static_cast<int64_t>(lead);
    // strip trailing zeros
    while (!d.empty() && d.back() == '0') {
        d.pop_back();
    }
    if (d.empty()) {
        return "0";
    }
    std::string out;
    if (point <= 0) {
        out = "0.";
        out.append(static_cast<size_t>(-point), '0');
        out += d;
    } else if (static_cast<size_t>(point) >= d.size()) {
        out = d;
        out.append(static_cast<size_t>(point) - d.size(), '0');
    } else {
        out = d.substr(0, static_cast<size_t>(point)) + "." +
              d.substr(static_cast<size_t>(point));
    }
    if (parts.negative) {
        out.insert(out.begin(), '-');
    }
    return out;
}

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// Spans of balanced {...} regions, tracking JSON string literals so braces
// inside strings do not end a span.
std::vector<std::pair<size_t, size_t>> object_spans(std::string_view text) {
    std::vector<std::pair<size_t, size_t>> spans;
    for (size_t start = 0; start < text.size(); ++start) {
        if (text[start] != '{') {
            continue;
        }
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                --depth;
                if (depth == 0) {
                    spans.emplace_back(start, i + 1);
                    break;
                }
            }
        }
    }
    return spans;
}

std::optional<std::string> answer_from_json_object(std::string_view span) {
    const json parsed = json::parse(span.begin(), span.end(), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("answer")) {
        return std::nullopt;
    }
    const json & answer = parsed.at("answer");
    if (answer.is_string()) {
        return answer.get<std::string>();
    }
    if (answer.is_number() || answer.is_boolean()) {
        return answer.dump();
    }
    return std::nullopt;
}

// Fallback for unstructured tails such as "The answer is: 42" or a
// malformed JSON object that still carries "answer": "...".
std::optional<std::string> answer_from_delimiter(std::string_view text) {
    static const std::string needle = "answer";
    std::optional<std::string> found;
    size_t pos = 0;
    while (pos + needle.size() <= text.size()) {
        bool match = true;
        for (size_t i = 0; i < needle.size(); ++i) {
            if (std::tolower(static_cast<unsigned char>(text[pos + i])) != needle[i]) {
                match = false;
                break;
            }
        }
        if (!match) {
            ++pos;
            continue;
        }
        size_t i = pos + needle.size();
        while (i < text.size() && (text[i] == ' ' || text[i] == '"' || text[i] == '\'')) {
            ++i;
        }
        if (i < text.size() && (text[i] == ':' || text[i] == '=')) {
            ++i;
            const size_t eol = std::min(text.find('\n', i), text.size());
            std::string tail = trim(text.substr(i, eol - i));
            // drop surrounding object/quote debris
            while (!tail.empty() && (tail.back() == '}' || tail.back() == '"' ||
                                     tail.back() == '\'' || tail.back() == ',')) {
                tail.pop_back();
            }
            while (!tail.empty() && (tail.front() == '"' || tail.front() == '\'')) {
                tail.erase(tail.begin());
            }
            tail = trim(tail);
            if (!tail.empty()) {
                found = tail;
            }
        }
        pos += needle.size();
    }
    return found;
}

} // namespace

std::string canonicalize_answer(std::string_view raw) {
    std::string s = trim(raw);
    s = strip_surrounding_quotes(std::move(s));
    s = strip_currency_prefix(std::move(s));
    s = remove_thousands_separators(s);
    s = trim(s);
    DecimalParts parts;
    if (parse_decimal(s, &parts)) {
        return render_decimal(std::move(parts));
    }
    s = lowercase(std::move(s));
    while (!s.empty() && s.back() == '.') {
        s.pop_back();
    }
    return trim(s);
}

ExtractedAnswer make_answer(std::string_view raw) {
    ExtractedAnswer answer;
    answer.raw = std::string(raw);
    answer.canonical = canonicalize_answer(raw);
    if (answer.canonical.empty()) {
        answer.status = AnswerStatus::missing;
        return answer;
    }
    answer.status = AnswerStatus::extracted;
    DecimalParts parts;
    if (parse_decimal(answer.canonical, &parts)) {
        answer.numeric_value = std::strtod(answer.canonical.c_str(), nullptr);
    }
    return answer;
}

ExtractedAnswer extract_answer(std::string_view response_text) {
    std::optional<std::string> raw;
    for (const auto & [begin, end] : object_spans(response_text)) {
        // later spans win; nested objects start later than their parents
        if (auto candidate = answer_from_json_object(response_text.substr(begin, end - begin))) {
            raw = std::move(candidate);
        }
    }
    if (!raw) {
        raw = answer_from_delimiter(response_text);
    }
    if (!raw) {
        return ExtractedAnswer{};
    }
    return make_answer(*raw);
}

bool answers_equal(const ExtractedAnswer & a, const ExtractedAnswer & b) {
    if (!a.extracted() || !b.extracted()) {
        return false;
    }
    if (a.numeric_value && b.numeric_value) {
        const double x = *a.numeric_value;
        const double y = *b.numeric_value;
        if (x == y) {
            return true;
        }
        return std::abs(x - y) <= 1e-9 * std::max(std::abs(x), std::abs(y));
    }
    return a.canonical == b.canonical;
}

} // namespace selfcert
