#pragma once

// Independent best-of-N evaluator. Selection logic, scoring and accuracy
// aggregation are reimplemented naively from the definitions; only the
// subset derivation (seed + index sampling) is shared with the library,
// because evaluating every strategy on identical subsets is the contract
// under test.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "selfcert/extraction.hpp"
#include "selfcert/harness.hpp"
#include "selfcert/records.hpp"
#include "selfcert/rng.hpp"

namespace brute {

struct Strategy {
    std::string label;
    std::string kind; // first-answer | max-confidence | majority | borda | oracle
    double p = 0.0;
};

// strategy label -> N -> per-trial accuracy
using Accuracies = std::map<std::string, std::map<int, std::vector<double>>>;

inline double naive_metric(const selfcert::ResponseRecord & record, selfcert::Metric metric) {
    if (metric == selfcert::Metric::avg_logp || metric == selfcert::Metric::neg_perplexity) {
        double sum = 0.0;
        for (double lp : record.chosen_trace.logprobs) {
            sum += lp;
        }
        const double alp = sum / static_cast<double>(record.chosen_trace.logprobs.size());
        return metric == selfcert::Metric::avg_logp ? alp : -std::exp(-alp);
    }
    return oracles::sequence_score(*record.distributions, metric);
}

inline Accuracies evaluate(const std::vector<selfcert::CandidatePool> & pools,
                           const std::vector<Strategy> & strategies,
                           const std::vector<int> & ns, int trials, uint64_t master_seed,
                           selfcert::Metric metric) {
    using namespace selfcert;
    std::map<std::string, std::map<int, std::vector<int>>> counts;
    for (const Strategy & strategy : strategies) {
        for (int n : ns) {
            counts[strategy.label][n].assign(static_cast<size_t>(trials), 0);
        }
    }
    for (const CandidatePool & pool : pools) {
        const ExtractedAnswer gold = make_answer(pool.gold_answer);
        std::vector<ScoredCandidate> scored;
        for (const ResponseRecord & record : pool.records) {
            ScoredCandidate cand;
            cand.index = record.sample_index;
            cand.answer = extract_answer(record.text);
            cand.score = naive_metric(record, metric);
            scored.push_back(std::move(cand));
        }
        for (int n : ns) {
            for (int trial = 0; trial < trials; ++trial) {
                const uint64_t seed =
                    derive_subset_seed(master_seed, pool.question_id, n, trial);
                std::mt19937_64 rng(seed);
                const std::vector<int> picked = sample_indices(pool.size(), n, rng);
                std::vector<ScoredCandidate> subset;
                for (size_t j = 0; j < picked.size(); ++j) {
                    ScoredCandidate cand = scored[static_cast<size_t>(picked[j])];
                    cand.index = static_cast<int>(j);
                    subset.push_back(std::move(cand));
                }
                for (const Strategy & strategy : strategies) {
                    std::optional<std::string> winner;
                    bool correct = false;
                    if (strategy.kind == "first-answer") {
                        for (const ScoredCandidate & c : subset) {
                            if (c.answer.extracted()) {
                                winner = c.answer.canonical;
                                break;
                            }
                        }
                    } else if (strategy.kind == "max-confidence") {
                        const ScoredCandidate * best = nullptr;
                        for (const ScoredCandidate & c : subset) {
                            if (c.answer.extracted() &&
                                (best == nullptr || c.score > best->score)) {
                                best = &c;
                            }
                        }
                        if (best != nullptr) {
                            winner = best->answer.canonical;
                        }
                    } else if (strategy.kind == "majority") {
                        winner = oracles::majority_winner(subset);
                    } else if (strategy.kind == "borda") {
                        winner = oracles::borda_winner_unnormalized(subset, strategy.p);
                    } else if (strategy.kind == "oracle") {
                        for (const ScoredCandidate & c : subset) {
                            if (answers_equal(c.answer, gold)) {
                                correct = true;
                                break;
                            }
                        }
                    }
                    if (winner) {
                        correct = answers_equal(make_answer(*winner), gold);
                    }
                    if (correct) {
                        counts[strategy.label][n][static_cast<size_t>(trial)] += 1;
                    }
                }
            }
        }
    }
    Accuracies acc;
    for (const auto & [label, by_n] : counts) {
        for (const auto & [n, per_trial] : by_n) {
            for (int count : per_trial) {
                acc[label][n].push_back(static_cast<double>(count) /
                                        static_cast<double>(pools.size()));
            }
        }
    }
    return acc;
}

} // namespace brute
