#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "selfcert/metrics.hpp"
#include "selfcert/records.hpp"
#include "selfcert/scoring.hpp"

namespace selfcert {

// Strategy tokens accepted by the harness:
//   first-answer | max-confidence | majority | borda | borda:<p> |
//   group-sum | group-average | nws | oracle
// A bare "borda" expands to one entry per p-grid value.
struct StrategySpec {
    std::string label; // e.g. "borda[p=0.3]"
    std::string kind;
    double p = 0.0;
};

std::vector<StrategySpec> expand_strategies(const std::vector<std::string> & tokens,
                                            const std::vector<double> & p_grid);

struct EvalConfig {
    std::vector<int> ns = {4, 8, 16, 32, 64};
    int trials = 5;
    std::vector<std::string> strategies = {"first-answer", "max-confidence", "majority",
                                           "borda"};
    std::vector<double> p_grid = {0.0, 0.3, 0.5, 0.7, 1.2, 2.0};
    uint64_t master_seed = 0;
    Metric metric = Metric::self_certainty_kl;
    bool strict_topk = false;
    int workers = 1;

    void validate() const;
};

struct AccuracyRow {
    std::string strategy;
    int n = 0;
    double mean_accuracy = 0.0;
    std::vector<double> per_trial;
};

struct AccuracyTable {
    std::string dataset_id;
    std::vector<AccuracyRow> rows; // sorted by (strategy, n)

    const AccuracyRow * find(const std::string & strategy, int n) const;
};

struct SubsetLogEntry {
    std::string question_id;
    int n = 0;
    int trial = 0;
    uint64_t seed = 0;
    uint64_t hash = 0;
};

struct EvalResult {
    AccuracyTable table;
    std::vector<SubsetLogEntry> subsets; // sorted by (question_id, n, trial)
};

// For every trial derives one seeded subset per (question, N) and evaluates
// every strategy on that identical subset. Accuracy is the fraction of
// questions whose winner answer equals gold; all-masked subsets count as
// incorrect. Questions are evaluated concurrently when workers > 1; output
// is independent of the worker count.
EvalResult evaluate(const std::vector<CandidatePool> & pools, const EvalConfig & config,
                    const std::string & dataset_id,
                    const BaseDistribution * base = nullptr);

struct GridSearchResult {
    std::map<double, AccuracyTable> per_p;
    std::map<int, double> best_p; // N -> argmax-accuracy p (ties to smaller p)
    std::string annotation;
    std::vector<SubsetLogEntry> subsets;
};

// Borda voting at every p of the grid on identical subsets.
GridSearchResult grid_search_p(const std::vector<CandidatePool> & pools,
                               const EvalConfig & config, const std::string & dataset_id,
                               const BaseDistribution * base = nullptr);

// Upper bound: a subset counts correct iff any member's answer equals gold.
EvalResult oracle_accuracy(const std::vector<CandidatePool> & pools, const EvalConfig & config,
                           const std::string & dataset_id);

struct HistogramRow {
    std::string label; // correct | incorrect | no-answer
    int bin = 0;
    double lo = 0.0;
    double hi = 0.0;
    int64_t count = 0;
};

// Fixed-width score histogram split by response outcome; plot-ready rows.
std::vector<HistogramRow> score_histogram(const std::vector<CandidatePool> & pools,
                                          Metric metric, int num_bins = 20,
                                          const BaseDistribution * base = nullptr);

struct LengthBiasReport {
    Metric metric = Metric::self_certainty_kl;
    double rank_correlation = 0.0; // Spearman between length and score
    struct Row {
        std::string question_id;
        int sample_index = 0;
        int64_t length_chars = 0;
        double score = 0.0;
    };
    std::vector<Row> rows;
};

std::vector<LengthBiasReport> length_bias_report(const std::vector<CandidatePool> & pools,
                                                 const std::vector<Metric> & metrics,
                                                 const BaseDistribution * base = nullptr);

struct DifficultyRow {
    int level = 0;
    std::string correctness; // correct | incorrect
    double mean_score = 0.0;
    int64_t count = 0;
};

// Per-level mean score split by correctness; requires level tags on pools.
std::vector<DifficultyRow> difficulty_report(const std::vector<CandidatePool> & pools,
                                             Metric metric,
                                             const BaseDistribution * base = nullptr);

// Spearman rank correlation with tie-averaged ranks; 0 when either side is constant.
double spearman_correlation(const std::vector<double> & x, const std::vector<double> & y);

// CSV emission (header + rows, deterministic formatting).
std::string accuracy_table_csv(const AccuracyTable & table);
std::string subsets_csv(const std::vector<SubsetLogEntry> & subsets);
std::string grid_search_csv(const GridSearchResult & result, const std::string & dataset_id);
std::string grid_best_csv(const GridSearchResult & result);
std::string histogram_csv(const std::vector<HistogramRow> & rows);
std::string length_bias_csv(const std::vector<LengthBiasReport> & reports);
std::string difficulty_csv(const std::vector<DifficultyRow> & rows);

} // namespace selfcert
