#include "selfcert/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "selfcert/errors.hpp"

namespace selfcert {

namespace {

using nlohmann::json;

struct AnswerGroup {
    std::string canonical;
    std::vector<int> members; // positions in the pool vector
    double tally = 0.0;
    long double score_sum = 0.0L;
    int earliest_index = 0;
};

// Groups extracted responses by canonical answer, preserving first-seen order.
std::vector<AnswerGroup> group_by_answer(const std::vector<ScoredCandidate> & pool) {
    std::vector<AnswerGroup> groups;
    for (size_t i = 0; i < pool.size(); ++i) {
        const ScoredCandidate & cand = pool[i];
        if (!cand.answer.extracted()) {
            continue;
        }
        auto it = std::find_if(groups.begin(), groups.end(), [&](const AnswerGroup & g) {
            return g.canonical == cand.answer.canonical;
        });
        if (it == groups.end()) {
            groups.push_back({cand.answer.canonical, {}, 0.0, 0.0L, cand.index});
            it = std::prev(groups.end());
        }
        it->members.push_back(static_cast<int>(i));
        it->score_sum += cand.score;
        it->earliest_index = std::min(it->earliest_index, cand.index);
    }
    return groups;
}

// Highest-score member, ties to the earliest index.
int best_member(const std::vector<ScoredCandidate> & pool, const AnswerGroup & group) {
    int best = group.members.front();
    for (int m : group.members) {
        if (pool[static_cast<size_t>(m)].score > pool[static_cast<size_t>(best)].score ||
            (pool[static_cast<size_t>(m)].score == pool[static_cast<size_t>(best)].score &&
             pool[static_cast<size_t>(m)].index < pool[static_cast<size_t>(best)].index)) {
            best = m;
        }
    }
    return best;
}

// Argmax tally; ties broken by summed score, then earliest member index.
SelectionOutcome pick_group_winner(const std::vector<ScoredCandidate> & pool,
                                   const std::vector<AnswerGroup> & groups,
                                   std::string strategy) {
    SelectionOutcome outcome;
    outcome.strategy = std::move(strategy);
    for (const AnswerGroup & g : groups) {
        outcome.tallies[g.canonical] = g.tally;
    }
    if (groups.empty()) {
        outcome.diagnostics = "all responses masked; no votes cast";
        return outcome;
    }
    const AnswerGroup * winner = &groups.front();
    bool tally_tie = false;
    bool score_tie = false;
    for (size_t i = 1; i < groups.size(); ++i) {
        const AnswerGroup & g = groups[i];
        if (g.tally > winner->tally) {
            winner = &g;
            tally_tie = false;
            score_tie = false;
        } else if (g.tally == winner->tally) {
            tally_tie = true;
            if (g.score_sum > winner->score_sum) {
                winner = &g;
                score_tie = false;
            } else if (g.score_sum == winner->score_sum) {
                score_tie = true;
                if (g.earliest_index < winner->earliest_index) {
                    winner = &g;
                }
            }
        }
    }
    outcome.winner_answer = winner->canonical;
    const int member = best_member(pool, *winner);
    outcome.winner_index = pool[static_cast<size_t>(member)].index;
    if (tally_tie) {
        outcome.diagnostics = score_tie ? "tie-break: earliest index"
                                        : "tie-break: summed score";
    }
    return outcome;
}

} // namespace

std::vector<int> rank_candidates(const std::vector<double> & scores) {
    if (scores.empty()) {
        throw UsageError("cannot rank an empty score list");
    }
    for (double s : scores) {
        if (std::isnan(s)) {
            throw NumericError("NaN score cannot be ranked");
        }
    }
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    });
    std::vector<int> ranks(scores.size());
    for (size_t pos = 0; pos < order.size(); ++pos) {
        ranks[static_cast<size_t>(order[pos])] = static_cast<int>(pos) + 1;
    }
    return ranks;
}

SelectionOutcome select_first_answer(const std::vector<ScoredCandidate> & pool) {
    SelectionOutcome outcome;
    outcome.strategy = "first-answer";
    const ScoredCandidate * first = nullptr;
    for (const ScoredCandidate & cand : pool) {
        if (cand.answer.extracted() && (first == nullptr || cand.index < first->index)) {
            first = &cand;
        }
    }
    if (first == nullptr) {
        outcome.diagnostics = "all responses masked";
        return outcome;
    }
    outcome.winner_index = first->index;
    outcome.winner_answer = first->answer.canonical;
    outcome.tallies[first->answer.canonical] = 1.0;
    return outcome;
}

SelectionOutcome select_max_confidence(const std::vector<ScoredCandidate> & pool,
                                       const std::string & metric_id) {
    SelectionOutcome outcome;
    outcome.strategy = "max-confidence";
    if (!metric_id.empty()) {
        outcome.diagnostics = "metric: " + metric_id;
    }
    const ScoredCandidate * best = nullptr;
    for (const ScoredCandidate & cand : pool) {
        if (std::isnan(cand.score)) {
            throw NumericError("NaN score for response " + std::to_string(cand.index));
        }
        if (!cand.answer.extracted()) {
            continue;
        }
        if (best == nullptr || cand.score > best->score ||
            (cand.score == best->score && cand.index < best->index)) {
            best = &cand;
        }
    }
    if (best == nullptr) {
        outcome.diagnostics = "all responses masked";
        return outcome;
    }
    outcome.winner_index = best->index;
    outcome.winner_answer = best->answer.canonical;
    outcome.tallies[best->answer.canonical] = best->score;
    return outcome;
}

SelectionOutcome majority_vote(const std::vector<ScoredCandidate> & pool) {
    std::vector<AnswerGroup> groups = group_by_answer(pool);
    for (AnswerGroup & g : groups) {
        g.tally = static_cast<double>(g.members.size());
    }
    return pick_group_winner(pool, groups, "majority");
}

SelectionOutcome borda_vote(const std::vector<ScoredCandidate> & pool, double p) {
    if (p < 0.0) {
        throw UsageError("borda exponent p must be non-negative");
    }
    if (pool.empty()) {
        throw UsageError("cannot vote on an empty pool");
    }
    std::vector<double> scores;
    scores.reserve(pool.size());
    for (const ScoredCandidate & cand : pool) {
        scores.push_back(cand.score);
    }
    // Ranks cover all N responses; masked ones hold their slot but cast no votes.
    const std::vector<int> ranks = rank_candidates(scores);
    const double n = static_cast<double>(pool.size());
    // Tallies carry the normalized scale (N - r + 1)^p / N^p: argmax-identical
    // to the raw form at fixed N. While the raw sum fits in a double the
    // division happens once per group, which keeps raw-form ties exact; at
    // extreme p each weight is normalized before exponentiation instead.
    const bool raw_fits = (p + 1.0) * std::log(n) < 700.0;
    const double denom = raw_fits ? std::pow(n, p) : 1.0;
    std::vector<AnswerGroup> groups = group_by_answer(pool);
    for (AnswerGroup & g : groups) {
        for (int m : g.members) {
            const double r = static_cast<double>(ranks[static_cast<size_t>(m)]);
            g.tally += raw_fits ? std::pow(n - r + 1.0, p)
                                : std::pow((n - r + 1.0) / n, p);
        }
        g.tally /= denom;
    }
    return pick_group_winner(pool, groups, "borda");
}

SelectionOutcome group_score_vote(const std::vector<ScoredCandidate> & pool, GroupMode mode,
                                  const std::string & metric_id) {
    std::vector<AnswerGroup> groups = group_by_answer(pool);
    for (AnswerGroup & g : groups) {
        const double sum = static_cast<double>(g.score_sum);
        g.tally = mode == GroupMode::sum ? sum : sum / static_cast<double>(g.members.size());
    }
    SelectionOutcome outcome = pick_group_winner(
        pool, groups, mode == GroupMode::sum ? "group-sum" : "group-average");
    if (!metric_id.empty() && outcome.diagnostics.empty()) {
        outcome.diagnostics = "metric: " + metric_id;
    }
    return outcome;
}

SelectionOutcome normalized_weighted_sum_vote(const std::vector<ScoredCandidate> & pool) {
    std::vector<AnswerGroup> groups = group_by_answer(pool);
    for (AnswerGroup & g : groups) {
        long double sum = 0.0L;
        for (int m : g.members) {
            sum += std::exp(static_cast<long double>(pool[static_cast<size_t>(m)].avg_logprob));
        }
        g.tally = static_cast<double>(sum);
    }
    return pick_group_winner(pool, groups, "nws");
}

std::string serialize_outcome(const SelectionOutcome & outcome) {
    json j;
    j["strategy"] = outcome.strategy;
    j["winner_index"] = outcome.winner_index ? json(*outcome.winner_index) : json(nullptr);
    j["winner_answer"] = outcome.winner_answer ? json(*outcome.winner_answer) : json(nullptr);
    j["tallies"] = outcome.tallies;
    j["diagnostics"] = outcome.diagnostics;
    return j.dump();
}

} // namespace selfcert
