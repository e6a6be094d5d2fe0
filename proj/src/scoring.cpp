#include "selfcert/scoring.hpp"

#include "selfcert/errors.hpp"

namespace selfcert {

double metric_score(const ResponseRecord & record, Metric metric, const BaseDistribution * base,
                    bool strict_topk, bool * clamped) {
    if (clamped != nullptr) {
        *clamped = false;
    }
    if (!metric_needs_distributions(metric)) {
        if (metric == Metric::avg_logp) {
            return avg_logprob(record.chosen_trace);
        }
        return neg_perplexity(record.chosen_trace, clamped);
    }
    if (!record.distributions) {
        throw ValidationError("record " + record.question_id + "#" +
                              std::to_string(record.sample_index) +
                              " has no distributions; metric " + metric_name(metric) +
                              " needs them");
    }
    if (strict_topk) {
        for (const TokenDistribution & d : *record.distributions) {
            if (d.kind == DistKind::top_k &&
                d.entries.size() < static_cast<size_t>(d.vocab_size)) {
                throw ValidationError("strict top-k mode: record " + record.question_id +
                                      "#" + std::to_string(record.sample_index) +
                                      " contains truncated distributions");
            }
        }
    }
    return sequence_confidence(*record.distributions, metric, base);
}

std::vector<ScoredCandidate> score_pool(const CandidatePool & pool, Metric metric,
                                        const BaseDistribution * base, bool strict_topk) {
    std::vector<ScoredCandidate> scored;
    scored.reserve(pool.records.size());
    for (const ResponseRecord & record : pool.records) {
        ScoredCandidate cand;
        cand.index = record.sample_index;
        cand.answer = extract_answer(record.text);
        cand.score = metric_score(record, metric, base, strict_topk);
        cand.avg_logprob = avg_logprob(record.chosen_trace);
        scored.push_back(std::move(cand));
    }
    return scored;
}

std::vector<ScoreRow> score_report(const CandidatePool & pool,
                                   const std::vector<Metric> & metrics,
                                   const BaseDistribution * base, bool strict_topk) {
    std::vector<ScoreRow> rows;
    rows.reserve(pool.records.size() * metrics.size());
    for (const ResponseRecord & record : pool.records) {
        for (Metric metric : metrics) {
            ScoreRow row;
            row.question_id = record.question_id;
            row.sample_index = record.sample_index;
            row.metric = metric;
            row.value = metric_score(record, metric, base, strict_topk, &row.clamped);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

} // namespace selfcert
