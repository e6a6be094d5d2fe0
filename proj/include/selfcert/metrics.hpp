#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

namespace selfcert {

// Probability floor applied before any log. Quantized logprob dumps contain
// exact zeros on which the divergence-style scores diverge.
inline constexpr double kProbFloor = 1e-12;

enum class DistKind {
    full,  // entries cover the whole vocabulary
    top_k, // entries list the k most likely tokens; the rest is residual mass
};

struct TokenEntry {
    int32_t token_id = 0;
    double logprob = 0.0; // base-e, <= 0
};

// One decoding step's probability mass over the vocabulary.
struct TokenDistribution {
    DistKind kind = DistKind::full;
    int32_t vocab_size = 0;
    std::vector<TokenEntry> entries;
    // top_k only: log of the unlisted mass; -inf when the listed entries
    // already account for everything.
    double residual_logprob = -std::numeric_limits<double>::infinity();

    // Throws ValidationError when any invariant fails:
    // logprobs <= 0, token ids unique and in [0, V), mass normalized
    // within 1e-6 in log-space, residual mass in [0, 1].
    void validate() const;
};

// Log-probabilities of the tokens actually chosen while decoding.
struct ChosenTokenTrace {
    std::vector<double> logprobs; // base-e, <= 0

    void validate() const;
};

enum class Metric {
    avg_logp,
    neg_perplexity,
    self_certainty_kl,
    self_certainty_ce,
    gini,
    entropy,
    dp,
    self_certainty_empirical,
};

const char * metric_name(Metric metric);
std::optional<Metric> metric_from_name(std::string_view name);
// Every metric computable without an empirical base distribution.
const std::vector<Metric> & default_metrics();
bool metric_needs_distributions(Metric metric);

struct ConfidenceScore {
    Metric metric = Metric::self_certainty_kl;
    double value = 0.0;
    bool clamped = false; // neg_perplexity overflow was clamped to -DBL_MAX
};

// Reference distribution for the empirical divergence variant.
struct BaseDistribution {
    std::vector<double> probs; // length V, strictly positive, sums to 1
    double smoothing_epsilon = 0.0;

    int32_t vocab_size() const { return static_cast<int32_t>(probs.size()); }
    void validate() const;
};

// Token-level confidences. Each validates its input and, for top_k inputs,
// spreads the residual mass uniformly over the unlisted tokens (closed form,
// identical to scoring the explicitly completed distribution).
double token_confidence_kl(const TokenDistribution & dist, double floor_eps = kProbFloor);
double token_confidence_gini(const TokenDistribution & dist, double floor_eps = kProbFloor);
double token_confidence_entropy(const TokenDistribution & dist, double floor_eps = kProbFloor);
double token_confidence_dp(const TokenDistribution & dist, double floor_eps = kProbFloor);

// Arithmetic mean of per-token scores; the only sentence aggregator.
double aggregate_mean(const std::vector<double> & token_scores);

double avg_logprob(const ChosenTokenTrace & trace);
// -exp(-avg_logprob); rank-equivalent to avg_logprob. Overflow clamps to
// -DBL_MAX and sets *clamped when provided.
double neg_perplexity(const ChosenTokenTrace & trace, bool * clamped = nullptr);

// Mean over steps of the divergence of each step distribution from uniform.
double self_certainty(const std::vector<TokenDistribution> & dists);
// Cross-entropy variant; equals self_certainty + log V for every input.
double self_certainty_ce(const std::vector<TokenDistribution> & dists);
// Divergence from an empirical base distribution instead of uniform.
double self_certainty_empirical(const std::vector<TokenDistribution> & dists,
                                const BaseDistribution & base);

// Sentence-level score for any distribution-based metric (mean over steps).
double sequence_confidence(const std::vector<TokenDistribution> & dists, Metric metric,
                           const BaseDistribution * base = nullptr);

// probs proportional to count + epsilon over all V token ids.
BaseDistribution build_empirical_base(const std::map<int32_t, double> & token_counts,
                                      int32_t vocab_size, double epsilon);

// Materializes a top_k summary as a full distribution: every unlisted token
// carries residual_mass / (V - k), floored at floor_eps.
TokenDistribution complete_topk_tail(const TokenDistribution & dist,
                                     double floor_eps = kProbFloor);

} // namespace selfcert
