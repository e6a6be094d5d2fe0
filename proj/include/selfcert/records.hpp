#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfcert/metrics.hpp"

namespace selfcert {

struct GenerationMeta {
    std::string model;
    double temperature = 0.0;
    double top_p = 0.0;
    std::optional<int64_t> seed;
};

// One sampled candidate response with its token-level evidence.
struct ResponseRecord {
    std::string question_id;
    int sample_index = 0;
    std::string text;
    ChosenTokenTrace chosen_trace;
    // Optional: only the perplexity-family metrics work without them.
    std::optional<std::vector<TokenDistribution>> distributions;
    GenerationMeta meta;
};

// All recorded candidates for one question plus the gold answer.
struct CandidatePool {
    std::string question_id;
    std::string prompt;
    std::string gold_answer;
    std::optional<int> level;  // difficulty tag for per-level reports
    std::optional<bool> complete; // sampling completeness flag
    std::string provenance;    // subsampling notes
    std::vector<ResponseRecord> records;

    int size() const { return static_cast<int>(records.size()); }
    void validate() const;
};

// Schema (format: 1), line-delimited JSON with canonical (alphabetical) key
// order and shortest round-trip number formatting.
//
// record line:
//   {"chosen_logprobs":[...], "distributions":[{"entries":[[id,logprob],...],
//    "kind":"full"|"top_k", "residual_logprob":<num|null>, "vocab_size":V}, ...]?,
//    "format":1, "model":"...", "question_id":"...", "sample_index":0,
//    "seed":<int>?, "temperature":0.6, "text":"...", "top_p":0.9}
// manifest line:
//   {"complete":<bool>?, "format":1, "gold_answer":"...", "level":<int>?,
//    "prompt":"...", "provenance":"..."?, "question_id":"...",
//    "records_file":"relative/path"}
// gold line:
//   {"format":1, "gold_answer":"...", "question_id":"..."}

// Parses and validates one record object; accumulates every violation.
ResponseRecord validate_record(const nlohmann::json & raw);
bool try_validate_record(const nlohmann::json & raw, ResponseRecord * out,
                         std::vector<std::string> * violations);

nlohmann::json record_to_json(const ResponseRecord & record);
std::string serialize_record(const ResponseRecord & record);

std::vector<CandidatePool> load_pools(const std::string & manifest_path);
// Writes manifest plus one shared records file (paths created/overwritten).
void save_pools(const std::vector<CandidatePool> & pools, const std::string & manifest_path,
                const std::string & records_path);

std::map<std::string, std::string> load_gold_answers(const std::string & path);

// Without-replacement draw of n positions from [0, pool_size), ascending.
std::vector<int> sample_indices(int pool_size, int n, std::mt19937_64 & rng);

// Seeded subset of n records; keeps original order, reindexes 0..n-1 and
// notes the source indices in the pool provenance.
CandidatePool subsample_pool(const CandidatePool & pool, int n, uint64_t seed);

// FNV-1a over the source indices of a subset; used for the identical-subset log.
uint64_t subset_hash(const std::vector<int> & indices);

} // namespace selfcert
