#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "selfcert/extraction.hpp"

namespace selfcert {

// One response of a pool, scored and ready for selection. `score` is the
// confidence used for ranking and for tie-breaks (self-certainty unless the
// caller scored the pool with another metric); `avg_logprob` feeds the
// normalized-weighted-sum strategy.
struct ScoredCandidate {
    int index = 0;
    ExtractedAnswer answer;
    double score = 0.0;
    double avg_logprob = 0.0;
    int rank = 0; // 1..N once assigned
};

struct SelectionOutcome {
    std::string strategy;
    std::optional<int> winner_index;
    std::optional<std::string> winner_answer; // canonical
    std::map<std::string, double> tallies;    // canonical answer -> votes
    std::string diagnostics;

    bool has_winner() const { return winner_index.has_value(); }
};

// Dense permutation ranks 1..N, descending by score, ties to the lower index.
std::vector<int> rank_candidates(const std::vector<double> & scores);

// Lowest-indexed response with an extractable answer.
SelectionOutcome select_first_answer(const std::vector<ScoredCandidate> & pool);

// Unmasked response with the highest score; metric_id only labels the outcome.
SelectionOutcome select_max_confidence(const std::vector<ScoredCandidate> & pool,
                                       const std::string & metric_id = "");

// One vote per extracted answer; ties broken by summed score, then earliest index.
SelectionOutcome majority_vote(const std::vector<ScoredCandidate> & pool);

// Rank-weighted voting: an extracted response of rank r among all N casts
// ((N - r + 1) / N)^p votes for its answer. Masked responses occupy rank
// slots but cast nothing. p = 0 reduces to majority voting.
SelectionOutcome borda_vote(const std::vector<ScoredCandidate> & pool, double p);

enum class GroupMode {
    sum,
    average,
};

// Tally per answer group = sum or mean of member scores.
SelectionOutcome group_score_vote(const std::vector<ScoredCandidate> & pool, GroupMode mode,
                                  const std::string & metric_id = "");

// Tally per answer group = sum of exp(avg_logprob) over members.
SelectionOutcome normalized_weighted_sum_vote(const std::vector<ScoredCandidate> & pool);

// Single line-record (JSON) serialization of an outcome.
std::string serialize_outcome(const SelectionOutcome & outcome);

} // namespace selfcert
