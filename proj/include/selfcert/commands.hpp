#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "selfcert/harness.hpp"
#include "selfcert/metrics.hpp"
#include "selfcert/sampling.hpp"

namespace selfcert {

// Command bodies behind the CLI. Each validates inputs, computes in memory,
// then writes its outputs plus a run manifest (<first output>.manifest.json
// or <out_dir>/manifest.json) capturing the resolved config, input digests
// and the tool version.

enum class OutputFormat {
    csv,
    line_records,
};

OutputFormat output_format_from_name(const std::string & name);

struct ScoreOptions {
    std::vector<std::string> pool_manifests;
    std::vector<std::string> metrics; // empty = every base-free metric
    std::string output;
    OutputFormat format = OutputFormat::csv;
    std::string base_file; // enables self-certainty-empirical
    bool strict_topk = false;
};
void cmd_score(const ScoreOptions & options);

struct SelectOptions {
    std::vector<std::string> pool_manifests;
    std::string strategy = "borda";
    double p = 1.2;
    std::string metric = "self-certainty-kl";
    std::string output;
    OutputFormat format = OutputFormat::line_records;
    std::string base_file;
    bool strict_topk = false;
};
void cmd_select(const SelectOptions & options);

struct EvalOptions {
    std::vector<std::string> pool_manifests;
    std::string gold_file; // optional; overrides manifest gold answers
    std::string out_dir;
    std::string dataset_id; // default: stem of the first manifest
    EvalConfig config;
    bool with_oracle = false; // strategies token "oracle" sets this
    std::string base_file;
};
void cmd_eval(const EvalOptions & options);

struct GridOptions {
    std::vector<std::string> pool_manifests;
    std::string gold_file;
    std::string out_dir;
    std::string dataset_id;
    EvalConfig config;
    std::string base_file;
};
void cmd_grid(const GridOptions & options);

struct SampleOptions {
    SamplingConfig sampling;
    std::string prompt;
    std::string prompt_file; // used when prompt is empty
    std::string gold_answer;
    int n = 64;
    std::string out_manifest;
    std::string out_records;
};
void cmd_sample(const SampleOptions & options);

struct UscPromptOptions {
    std::string pool_manifest;
    std::string question_id; // empty = first pool
    size_t char_budget = 0;
    std::string output; // empty = stdout
};
void cmd_usc_prompt(const UscPromptOptions & options);

struct TheoryOptions {
    int trials = 1000;
    double eta = 1e-5;
    uint64_t master_seed = 0;
    std::string out_csv; // empty = no per-trial dump
};
// Prints one summary line; throws NumericError when any trial fails.
void cmd_theory(const TheoryOptions & options);

// Shared helpers also used by tests.
BaseDistribution load_base_distribution(const std::string & path);
std::vector<CandidatePool> load_pool_files(const std::vector<std::string> & manifests,
                                           const std::string & gold_file);

} // namespace selfcert
