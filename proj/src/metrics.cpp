#include "selfcert/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "selfcert/errors.hpp"

namespace selfcert {

namespace {

double log_sum_exp(const std::vector<double> & values) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : values) {
        m = std::max(m, v);
    }
    if (!std::isfinite(m)) {
        return m;
    }
    long double sum = 0.0L;
    for (double v : values) {
        sum += std::exp(static_cast<long double>(v - m));
    }
    return m + static_cast<double>(std::log(sum));
}

// Per-step sums over all V tokens with the probability floor applied.
// Long-double accumulation keeps the uniform fixed points and the repeated
// -step identity tight at large V.
struct StepSums {
    long double sum_log = 0.0L;   // sum of log p_j
    long double sum_sq = 0.0L;    // sum of p_j^2
    long double sum_plogp = 0.0L; // sum of p_j log p_j
};

StepSums accumulate_step(const TokenDistribution & dist, double floor_eps) {
    const double log_floor = floor_eps > 0.0 ? std::log(floor_eps)
                                             : -std::numeric_limits<double>::infinity();
    StepSums sums;
    for (const TokenEntry & entry : dist.entries) {
        double lp = entry.logprob;
        double p = 0.0;
        if (lp < log_floor) {
            lp = log_floor;
            p = floor_eps;
        } else {
            p = std::exp(lp);
        }
        if (!(p > 0.0) || !std::isfinite(lp)) {
            throw NumericError("zero probability after flooring (token id " +
                               std::to_string(entry.token_id) + "); input is corrupt");
        }
        sums.sum_log += lp;
        sums.sum_sq += static_cast<long double>(p) * p;
        sums.sum_plogp += static_cast<long double>(p) * lp;
    }
    const int64_t tail = static_cast<int64_t>(dist.vocab_size) -
                         static_cast<int64_t>(dist.entries.size());
    if (tail > 0) {
        const double mass = std::exp(dist.residual_logprob);
        double p = mass / static_cast<double>(tail);
        if (p < floor_eps) {
            p = floor_eps;
        }
        if (!(p > 0.0)) {
            throw NumericError("zero tail probability after flooring; input is corrupt");
        }
        const double lp = std::log(p);
        sums.sum_log += static_cast<long double>(tail) * lp;
        sums.sum_sq += static_cast<long double>(tail) * p * p;
        sums.sum_plogp += static_cast<long double>(tail) * p * lp;
    }
    return sums;
}

void check_same_vocab(const std::vector<TokenDistribution> & dists) {
    if (dists.empty()) {
        throw UsageError("empty distribution sequence");
    }
    const int32_t v = dists.front().vocab_size;
    for (const TokenDistribution & d : dists) {
        if (d.vocab_size != v) {
            throw ValidationError("inconsistent vocabulary size across steps: " +
                                  std::to_string(v) + " vs " + std::to_string(d.vocab_size));
        }
    }
}

double step_kl(const TokenDistribution & dist, double floor_eps) {
    const StepSums sums = accumulate_step(dist, floor_eps);
    return static_cast<double>(-sums.sum_log / dist.vocab_size) -
           std::log(static_cast<double>(dist.vocab_size));
}

double step_ce(const TokenDistribution & dist, double floor_eps) {
    const StepSums sums = accumulate_step(dist, floor_eps);
    return static_cast<double>(-sums.sum_log / dist.vocab_size);
}

// KL(base || p) for one step; skips base entries with zero probability.
double step_empirical(const TokenDistribution & dist, const BaseDistribution & base,
                      double floor_eps) {
    const double log_floor = std::log(floor_eps);
    const int32_t v = dist.vocab_size;
    const int64_t tail = static_cast<int64_t>(v) - static_cast<int64_t>(dist.entries.size());
    double tail_logp = log_floor;
    if (tail > 0) {
        const double p = std::exp(dist.residual_logprob) / static_cast<double>(tail);
        tail_logp = p < floor_eps ? log_floor : std::log(p);
    }
    std::vector<double> logp(static_cast<size_t>(v), tail_logp);
    for (const TokenEntry & entry : dist.entries) {
        logp[static_cast<size_t>(entry.token_id)] =
            entry.logprob < log_floor ? log_floor : entry.logprob;
    }
    long double sum = 0.0L;
    for (int32_t j = 0; j < v; ++j) {
        const double q = base.probs[static_cast<size_t>(j)];
        if (q > 0.0) {
            sum += static_cast<long double>(q) *
                   (std::log(q) - logp[static_cast<size_t>(j)]);
        }
    }
    return static_cast<double>(sum);
}

} // namespace

void TokenDistribution::validate() const {
    std::vector<std::string> violations;
    if (vocab_size <= 0) {
        throw ValidationError("distribution invalid: vocab_size must be positive",
                              {"vocab_size must be positive"});
    }
    const size_t k = entries.size();
    if (kind == DistKind::full && k != static_cast<size_t>(vocab_size)) {
        violations.push_back("full distribution must list exactly vocab_size entries");
    }
    if (k > static_cast<size_t>(vocab_size)) {
        violations.push_back("more entries than vocab_size");
    }
    std::vector<bool> seen(static_cast<size_t>(vocab_size), false);
    for (const TokenEntry & entry : entries) {
        if (entry.token_id < 0 || entry.token_id >= vocab_size) {
            violations.push_back("token id " + std::to_string(entry.token_id) +
                                 " outside [0, vocab_size)");
            continue;
        }
        if (seen[static_cast<size_t>(entry.token_id)]) {
            violations.push_back("duplicate token id " + std::to_string(entry.token_id));
        }
        seen[static_cast<size_t>(entry.token_id)] = true;
        if (!(entry.logprob <= 0.0)) { // also catches NaN
            violations.push_back("logprob for token id " + std::to_string(entry.token_id) +
                                 " is positive or not a number");
        }
    }
    std::vector<double> logprobs;
    logprobs.reserve(k + 1);
    for (const TokenEntry & entry : entries) {
        logprobs.push_back(entry.logprob);
    }
    if (kind == DistKind::top_k) {
        if (std::isnan(residual_logprob) || residual_logprob > 1e-6) {
            violations.push_back("residual logprob must be <= 0");
        }
        // Listed mass above 1 means the residual mass would be negative.
        if (log_sum_exp(logprobs) > 1e-6) {
            violations.push_back("negative residual mass: listed entries exceed total mass");
        }
        if (residual_logprob > -std::numeric_limits<double>::infinity()) {
            logprobs.push_back(residual_logprob);
        }
    }
    if (violations.empty()) {
        const double lse = log_sum_exp(logprobs);
        if (std::abs(lse) > 1e-6) {
            violations.push_back("distribution not normalized: log total mass " +
                                 std::to_string(lse));
        }
    }
    if (!violations.empty()) {
        throw ValidationError("distribution invalid: " + violations.front(), violations);
    }
}

void ChosenTokenTrace::validate() const {
    if (logprobs.empty()) {
        throw ValidationError("chosen-token trace must not be empty");
    }
    for (double lp : logprobs) {
        if (!(lp <= 0.0)) {
            throw ValidationError("chosen-token logprob is positive or not a number");
        }
    }
}

void BaseDistribution::validate() const {
    if (probs.empty()) {
        throw ValidationError("base distribution is empty");
    }
    long double sum = 0.0L;
    for (double p : probs) {
        if (!(p >= 0.0)) {
            throw ValidationError("base distribution has a negative or NaN entry");
        }
        sum += p;
    }
    if (std::abs(static_cast<double>(sum) - 1.0) > 1e-9) {
        throw ValidationError("base distribution does not sum to 1");
    }
}

const char * metric_name(Metric metric) {
    switch (metric) {
        case Metric::avg_logp:                 return "avglogp";
        case Metric::neg_perplexity:           return "neg-perplexity";
        case Metric::self_certainty_kl:        return "self-certainty-kl";
        case Metric::self_certainty_ce:        return "self-certainty-ce";
        case Metric::gini:                     return "gini";
        case Metric::entropy:                  return "entropy";
        case Metric::dp:                       return "dp";
        case Metric::self_certainty_empirical: return "self-certainty-empirical";
    }
    return "unknown";
}

std::optional<Metric> metric_from_name(std::string_view name) {
    for (Metric m : {Metric::avg_logp, Metric::neg_perplexity, Metric::self_certainty_kl,
                     Metric::self_certainty_ce, Metric::gini, Metric::entropy, Metric::dp,
                     Metric::self_certainty_empirical}) {
        if (name == metric_name(m)) {
            return m;
        }
    }
    return std::nullopt;
}

const std::vector<Metric> & default_metrics() {
    static const std::vector<Metric> metrics = {
        Metric::avg_logp,       Metric::neg_perplexity, Metric::self_certainty_kl,
        Metric::self_certainty_ce, Metric::gini,        Metric::entropy,
        Metric::dp,
    };
    return metrics;
}

bool metric_needs_distributions(Metric metric) {
    return metric != Metric::avg_logp && metric != Metric::neg_perplexity;
}

double token_confidence_kl(const TokenDistribution & dist, double floor_eps) {
    dist.validate();
    return step_kl(dist, floor_eps);
}

double token_confidence_gini(const TokenDistribution & dist, double floor_eps) {
    dist.validate();
    return static_cast<double>(accumulate_step(dist, floor_eps).sum_sq);
}

double token_confidence_entropy(const TokenDistribution & dist, double floor_eps) {
    dist.validate();
    return static_cast<double>(accumulate_step(dist, floor_eps).sum_plogp);
}

double token_confidence_dp(const TokenDistribution & dist, double floor_eps) {
    dist.validate();
    return -std::exp(static_cast<double>(-accumulate_step(dist, floor_eps).sum_plogp));
}

double aggregate_mean(const std::vector<double> & token_scores) {
    if (token_scores.empty()) {
        throw UsageError("cannot aggregate an empty score sequence");
    }
    long double sum = 0.0L;
    for (double s : token_scores) {
        sum += s;
    }
    return static_cast<double>(sum / static_cast<long double>(token_scores.size()));
}

double avg_logprob(const ChosenTokenTrace & trace) {
    if (trace.logprobs.empty()) {
        throw UsageError("cannot average an empty trace");
    }
    long double sum = 0.0L;
    for (double lp : trace.logprobs) {
        sum += lp;
    }
    return static_cast<double>(sum / static_cast<long double>(trace.logprobs.size()));
}

double neg_perplexity(const ChosenTokenTrace & trace, bool * clamped) {
    const double alp = avg_logprob(trace);
    if (clamped != nullptr) {
        *clamped = false;
    }
    const double value = -std::exp(-alp);
    if (!std::isfinite(value)) {
        // Extremely long low-probability traces are valid data; clamp and flag.
        if (clamped != nullptr) {
            *clamped = true;
        }
        return -std::numeric_limits<double>::max();
    }
    return value;
}

double self_certainty(const std::vector<TokenDistribution> & dists) {
    check_same_vocab(dists);
    std::vector<double> scores;
    scores.reserve(dists.size());
    for (const TokenDistribution & d : dists) {
        d.validate();
        scores.push_back(step_kl(d, kProbFloor));
    }
    return aggregate_mean(scores);
}

double self_certainty_ce(const std::vector<TokenDistribution> & dists) {
    check_same_vocab(dists);
    std::vector<double> scores;
    scores.reserve(dists.size());
    for (const TokenDistribution & d : dists) {
        d.validate();
        scores.push_back(step_ce(d, kProbFloor));
    }
    return aggregate_mean(scores);
}

double self_certainty_empirical(const std::vector<TokenDistribution> & dists,
                                const BaseDistribution & base) {
    check_same_vocab(dists);
    base.validate();
    if (base.vocab_size() != dists.front().vocab_size) {
        throw ValidationError("base distribution vocabulary size " +
                              std::to_string(base.vocab_size()) +
                              " does not match step vocabulary size " +
                              std::to_string(dists.front().vocab_size));
    }
    std::vector<double> scores;
    scores.reserve(dists.size());
    for (const TokenDistribution & d : dists) {
        d.validate();
        scores.push_back(step_empirical(d, base, kProbFloor));
    }
    return aggregate_mean(scores);
}

double sequence_confidence(const std::vector<TokenDistribution> & dists, Metric metric,
                           const BaseDistribution * base) {
    switch (metric) {
        case Metric::self_certainty_kl:
            return self_certainty(dists);
        case Metric::self_certainty_ce:
            return self_certainty_ce(dists);
        case Metric::self_certainty_empirical:
            if (base == nullptr) {
                throw UsageError("self-certainty-empirical requires a base distribution");
            }
            return self_certainty_empirical(dists, *base);
        case Metric::gini:
        case Metric::entropy:
        case Metric::dp: {
            check_same_vocab(dists);
            std::vector<double> scores;
            scores.reserve(dists.size());
            for (const TokenDistribution & d : dists) {
                if (metric == Metric::gini) {
                    scores.push_back(token_confidence_gini(d));
                } else if (metric == Metric::entropy) {
                    scores.push_back(token_confidence_entropy(d));
                } else {
                    scores.push_back(token_confidence_dp(d));
                }
            }
            return aggregate_mean(scores);
        }
        case Metric::avg_logp:
        case Metric::neg_perplexity:
            throw UsageError(std::string(metric_name(metric)) +
                             " is trace-based, not distribution-based");
    }
    throw UsageError("unknown metric");
}

BaseDistribution build_empirical_base(const std::map<int32_t, double> & token_counts,
                                      int32_t vocab_size, double epsilon) {
    if (vocab_size <= 0) {
        throw UsageError("vocab_size must be positive");
    }
    if (epsilon < 0.0) {
        throw UsageError("smoothing epsilon must be non-negative");
    }
    long double total = static_cast<long double>(epsilon) * vocab_size;
    for (const auto & [token_id, count] : token_counts) {
        if (token_id < 0 || token_id >= vocab_size) {
            throw ValidationError("token id " + std::to_string(token_id) +
                                  " outside [0, vocab_size)");
        }
        if (!(count >= 0.0)) {
            throw ValidationError("negative count for token id " + std::to_string(token_id));
        }
        total += count;
    }
    if (!(total > 0.0L)) {
        throw ValidationError("degenerate base: all counts zero and epsilon zero");
    }
    BaseDistribution base;
    base.smoothing_epsilon = epsilon;
    base.probs.assign(static_cast<size_t>(vocab_size),
                      static_cast<double>(epsilon / total));
    for (const auto & [token_id, count] : token_counts) {
        base.probs[static_cast<size_t>(token_id)] =
            static_cast<double>((count + epsilon) / total);
    }
    return base;
}

TokenDistribution complete_topk_tail(const TokenDistribution & dist, double floor_eps) {
    if (dist.entries.size() > static_cast<size_t>(dist.vocab_size)) {
        throw UsageError("top-k entry count exceeds vocabulary size");
    }
    dist.validate();
    if (dist.kind == DistKind::full) {
        return dist;
    }
    TokenDistribution full;
    full.kind = DistKind::full;
    full.vocab_size = dist.vocab_size;
    full.entries.reserve(static_cast<size_t>(dist.vocab_size));
    std::vector<bool> listed(static_cast<size_t>(dist.vocab_size), false);
    for (const TokenEntry & entry : dist.entries) {
        listed[static_cast<size_t>(entry.token_id)] = true;
    }
    full.entries = dist.entries;
    const int64_t tail = static_cast<int64_t>(dist.vocab_size) -
                         static_cast<int64_t>(dist.entries.size());
    if (tail > 0) {
        double p = std::exp(dist.residual_logprob) / static_cast<double>(tail);
        if (p < floor_eps) {
            p = floor_eps;
        }
        const double lp = std::log(p);
        for (int32_t id = 0; id < dist.vocab_size; ++id) {
            if (!listed[static_cast<size_t>(id)]) {
                full.entries.push_back({id, lp});
            }
        }
    }
    return full;
}

} // namespace selfcert
