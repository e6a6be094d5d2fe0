#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace selfcert {

// Error taxonomy. The CLI maps these onto exit codes:
//   UsageError -> 1, ValidationError (and subclasses) -> 2,
//   TransportError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string & msg) : std::runtime_error(msg) {}
};

// Bad arguments or unknown identifiers supplied by the caller.
class UsageError : public Error {
public:
    explicit UsageError(const std::string & msg) : Error(msg) {}
};

// Malformed or inconsistent input data (records, pools, configs).
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string & msg) : Error(msg) {}

    ValidationError(const std::string & msg, std::vector<std::string> violations)
        : Error(msg), violations_(std::move(violations)) {}

    const std::vector<std::string> & violations() const { return violations_; }

private:
    std::vector<std::string> violations_;
};

// Run configuration that cannot be satisfied by the data (e.g. N > pool size).
class ConfigError : public ValidationError {
public:
    explicit ConfigError(const std::string & msg) : ValidationError(msg) {}
};

// Content exceeds a hard budget and may not be silently clipped.
class TruncationError : public ValidationError {
public:
    explicit TruncationError(const std::string & msg) : ValidationError(msg) {}
};

// HTTP request failures that survived retries; carries the failed sample indices.
class TransportError : public Error {
public:
    explicit TransportError(const std::string & msg) : Error(msg) {}

    TransportError(const std::string & msg, std::vector<int> failed_indices)
        : Error(msg), failed_indices_(std::move(failed_indices)) {}

    const std::vector<int> & failed_indices() const { return failed_indices_; }

private:
    std::vector<int> failed_indices_;
};

// Numeric domain violations signalling corrupt data (NaN scores, zero probabilities).
class NumericError : public Error {
public:
    explicit NumericError(const std::string & msg) : Error(msg) {}
};

} // namespace selfcert
