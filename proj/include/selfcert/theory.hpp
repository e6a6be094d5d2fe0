#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace selfcert {

// Logits for one decoding step plus a target token index.
struct LogitVector {
    std::vector<double> z;
    int32_t target = 0;

    int32_t size() const { return static_cast<int32_t>(z.size()); }
    void validate() const;
};

std::vector<double> softmax(const std::vector<double> & z);

// Divergence-from-uniform of one probability vector (token-level).
double token_self_certainty(const std::vector<double> & probs);

// d(self-certainty)/dz_k = p_k - 1/V.
std::vector<double> sc_gradient_analytic(const LogitVector & logits);

// d(log p_target)/dz_k = delta(k, target) - p_k; the log-likelihood ascent direction.
std::vector<double> ascent_direction(const LogitVector & logits);

// Derivative of self-certainty along the ascent direction: p_target - ||p||^2.
double directional_derivative(const LogitVector & logits);

enum class TheoremVerdict {
    pass,          // observed sign matches the derivative's sign
    fail,          // observed sign contradicts it
    indeterminate, // |derivative| <= 1e-6: second-order regime, no verdict
};

struct TheoremReport {
    double p_target = 0.0;
    double p_norm_sq = 0.0;
    double derivative = 0.0; // p_target - ||p||^2
    double delta_sc = 0.0;   // SC(softmax(z + eta * ascent)) - SC(softmax(z))
    TheoremVerdict verdict = TheoremVerdict::indeterminate;
};

// Takes one explicit ascent step of size eta (0 < eta <= 1e-3) and checks the
// sign of the self-certainty change against the first-order criterion.
TheoremReport theorem_check(const LogitVector & logits, double eta);

// Central finite differences of self-certainty w.r.t. each logit (step h).
std::vector<double> sc_gradient_fd(const LogitVector & logits, double h = 1e-5);

struct TheoremTrialRow {
    int vocab_size = 0;
    TheoremReport report;
};

struct TheoremSummary {
    int passed = 0;
    int failed = 0;
    int indeterminate = 0;
    double max_gradient_error = 0.0; // worst |analytic - fd| over tolerance scale
    std::vector<TheoremTrialRow> trials;
};

// Monte-Carlo verification over random (z, target) pairs, V in [3, 256].
// Each trial runs theorem_check and a full analytic-vs-finite-difference
// gradient comparison.
TheoremSummary run_theorem_trials(int num_trials, uint64_t seed, double eta = 1e-5);

std::string theorem_trials_csv(const TheoremSummary & summary);

} // namespace selfcert
