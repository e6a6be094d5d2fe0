#pragma once

#include <vector>

#include "selfcert/metrics.hpp"
#include "selfcert/records.hpp"
#include "selfcert/selection.hpp"

namespace selfcert {

struct ScoreRow {
    std::string question_id;
    int sample_index = 0;
    Metric metric = Metric::self_certainty_kl;
    double value = 0.0;
    bool clamped = false;
};

// Scores one record with one metric. strict_topk rejects top_k distributions
// instead of applying the uniform-tail completion.
double metric_score(const ResponseRecord & record, Metric metric,
                    const BaseDistribution * base = nullptr, bool strict_topk = false,
                    bool * clamped = nullptr);

// Extracts answers and scores every record; `score` carries `metric`,
// `avg_logprob` is always filled from the chosen trace.
std::vector<ScoredCandidate> score_pool(const CandidatePool & pool, Metric metric,
                                        const BaseDistribution * base = nullptr,
                                        bool strict_topk = false);

// One row per (record, metric), in pool order then metric order.
std::vector<ScoreRow> score_report(const CandidatePool & pool,
                                   const std::vector<Metric> & metrics,
                                   const BaseDistribution * base = nullptr,
                                   bool strict_topk = false);

} // namespace selfcert
