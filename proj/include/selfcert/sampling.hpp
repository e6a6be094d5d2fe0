#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "selfcert/records.hpp"

namespace selfcert {

// Client configuration for an OpenAI-compatible completions endpoint with
// per-token logprobs. vocab_size is recorded on every distribution; token
// ids are interned from the returned token strings (opaque integers).
struct SamplingConfig {
    std::string endpoint;                          // scheme://host:port
    std::string completions_path = "/v1/completions";
    std::string model;
    std::string question_id = "q0";
    double temperature = 0.6;
    double top_p = 0.9;
    int max_tokens = 1024;
    int logprobs_k = 5;
    int32_t vocab_size = 0;
    int max_in_flight = 8;
    int max_attempts = 3;
    int backoff_ms = 250;
    std::optional<int64_t> seed; // request i is sent with seed + i
    std::string api_key;         // Authorization: Bearer <key>

    void validate() const;
};

struct SamplingResult {
    std::vector<ResponseRecord> records; // sorted by sample_index
    std::vector<int> failed_indices;     // requests that failed after retries
    std::vector<std::string> failures;   // one message per failed index

    bool complete() const { return failed_indices.empty(); }
};

// Issues n single-completion requests with bounded concurrency and
// exponential-backoff retries, then converts the responses into validated
// top-k records. Transport failures land in failed_indices; a response that
// violates the wire contract throws ValidationError.
SamplingResult sample_candidates(const SamplingConfig & config, const std::string & prompt,
                                 int n);

} // namespace selfcert
