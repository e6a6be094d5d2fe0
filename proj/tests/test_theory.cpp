#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "selfcert/errors.hpp"
#include "selfcert/rng.hpp"
#include "selfcert/theory.hpp"

using namespace selfcert;

namespace {

LogitVector make_logits(std::vector<double> z, int32_t target) {
    LogitVector logits;
    logits.z = std::move(z);
    logits.target = target;
    return logits;
}

LogitVector random_logits(std::mt19937_64 & rng, int v) {
    LogitVector logits;
    logits.z.resize(static_cast<size_t>(v));
    for (double & zk : logits.z) {
        zk = 2.0 * gaussian(rng);
    }
    logits.target = static_cast<int32_t>(uniform_below(rng, static_cast<uint64_t>(v)));
    return logits;
}

// logits that softmax to the worked 4-token example (0.7, 0.1, 0.1, 0.1)
LogitVector example_logits(int32_t target) {
    return make_logits({std::log(0.7), std::log(0.1), std::log(0.1), std::log(0.1)}, target);
}

} // namespace

TEST_CASE("analytic gradient of the divergence score") {
    // uniform logits: gradient vanishes
    const std::vector<double> zero_grad = sc_gradient_analytic(make_logits({1.0, 1.0, 1.0, 1.0}, 0));
    for (double g : zero_grad) {
        CHECK(std::abs(g) < 1e-15);
    }

    const std::vector<double> grad = sc_gradient_analytic(example_logits(0));
    CHECK(grad[0] == doctest::Approx(0.45).epsilon(1e-12));
    CHECK(grad[1] == doctest::Approx(-0.15).epsilon(1e-12));
    CHECK(grad[2] == doctest::Approx(-0.15).epsilon(1e-12));
    CHECK(grad[3] == doctest::Approx(-0.15).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central finite differences") {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 25; ++trial) {
        const int v = 3 + static_cast<int>(uniform_below(rng, 998)); // V up to 1000
        const LogitVector logits = random_logits(rng, v);
        const std::vector<double> analytic = sc_gradient_analytic(logits);
        const std::vector<double> fd = sc_gradient_fd(logits);
        for (size_t k = 0; k < analytic.size(); ++k) {
            const double tol =
                std::max(1e-9, 1e-6 * std::max(std::abs(analytic[k]), std::abs(fd[k])));
            CHECK(std::abs(analytic[k] - fd[k]) <= tol);
        }
    }
}

TEST_CASE("ascent direction") {
    // peaked at the target: the gradient of log p_target nearly vanishes
    const LogitVector peaked = make_logits({12.0, 0.0, 0.0, 0.0}, 0);
    for (double d : ascent_direction(peaked)) {
        CHECK(std::abs(d) < 2e-5);
    }

    const std::vector<double> dir = ascent_direction(make_logits({0.0, 0.0, 0.0, 0.0}, 0));
    CHECK(dir[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(dir[1] == doctest::Approx(-0.25).epsilon(1e-12));

    std::mt19937_64 rng(103);
    for (int trial = 0; trial < 10; ++trial) {
        const LogitVector logits = random_logits(rng, 64);
        const std::vector<double> analytic = ascent_direction(logits);
        // finite difference of log p_target
        const double h = 1e-5;
        for (size_t k = 0; k < logits.z.size(); ++k) {
            std::vector<double> z = logits.z;
            z[k] += h;
            const double up =
                std::log(softmax(z)[static_cast<size_t>(logits.target)]);
            z[k] -= 2.0 * h;
            const double down =
                std::log(softmax(z)[static_cast<size_t>(logits.target)]);
            const double fd = (up - down) / (2.0 * h);
            CHECK(std::abs(analytic[k] - fd) <=
                  std::max(1e-9, 1e-5 * std::max(std::abs(fd), std::abs(analytic[k]))));
        }
    }
}

TEST_CASE("directional derivative equals p_target - ||p||^2 and the chain rule") {
    CHECK(std::abs(directional_derivative(make_logits({1.0, 1.0, 1.0, 1.0}, 2))) < 1e-15);

    CHECK(directional_derivative(example_logits(0)) ==
          doctest::Approx(0.7 - 0.52).epsilon(1e-12));
    CHECK(directional_derivative(example_logits(1)) ==
          doctest::Approx(0.1 - 0.52).epsilon(1e-12));

    std::mt19937_64 rng(107);
    for (int trial = 0; trial < 100; ++trial) {
        const int v = 3 + static_cast<int>(uniform_below(rng, 120));
        const LogitVector logits = random_logits(rng, v);
        const std::vector<double> grad = sc_gradient_analytic(logits);
        const std::vector<double> dir = ascent_direction(logits);
        long double dot = 0.0L;
        for (size_t k = 0; k < grad.size(); ++k) {
            dot += static_cast<long double>(grad[k]) * dir[k];
        }
        CHECK(std::abs(directional_derivative(logits) - static_cast<double>(dot)) < 1e-12);
    }
}

TEST_CASE("theorem_check verdicts") {
    // uniform: zero derivative, no verdict possible
    CHECK(theorem_check(make_logits({0.0, 0.0, 0.0}, 0), 1e-5).verdict ==
          TheoremVerdict::indeterminate);

    // argmax target on a non-one-hot distribution strictly increases the score
    const TheoremReport argmax_case = theorem_check(example_logits(0), 1e-5);
    CHECK(argmax_case.verdict == TheoremVerdict::pass);
    CHECK(argmax_case.derivative > 0.0);
    CHECK(argmax_case.delta_sc > 0.0);

    // low-probability target decreases it
    const TheoremReport low_case = theorem_check(example_logits(1), 1e-5);
    CHECK(low_case.verdict == TheoremVerdict::pass);
    CHECK(low_case.derivative < 0.0);
    CHECK(low_case.delta_sc < 0.0);

    CHECK_THROWS_AS(theorem_check(example_logits(0), 0.0), UsageError);
    CHECK_THROWS_AS(theorem_check(example_logits(0), 0.5), UsageError);
}

TEST_CASE("corollary: argmax targets give strictly positive derivatives") {
    std::mt19937_64 rng(109);
    for (int trial = 0; trial < 200; ++trial) {
        const int v = 2 + static_cast<int>(uniform_below(rng, 200));
        LogitVector logits = random_logits(rng, v);
        const std::vector<double> p = softmax(logits.z);
        int32_t argmax = 0;
        for (int32_t k = 1; k < logits.size(); ++k) {
            if (p[static_cast<size_t>(k)] > p[static_cast<size_t>(argmax)]) {
                argmax = k;
            }
        }
        logits.target = argmax;
        CHECK(directional_derivative(logits) > 0.0);
        // and ||p||^2 <= max p
        long double norm_sq = 0.0L;
        for (double pk : p) {
            norm_sq += static_cast<long double>(pk) * pk;
        }
        CHECK(static_cast<double>(norm_sq) <= p[static_cast<size_t>(argmax)]);
    }
}

TEST_CASE("ascent can dip before it raises the score") {
    // peaked away from the target: p_target < ||p||^2 at first
    LogitVector logits = make_logits({4.0, 0.0, 0.0, 0.0}, 1);
    const double eta = 0.5;
    std::vector<double> sc_path;
    for (int step = 0; step < 40; ++step) {
        sc_path.push_back(token_self_certainty(softmax(logits.z)));
        const std::vector<double> dir = ascent_direction(logits);
        for (size_t k = 0; k < logits.z.size(); ++k) {
            logits.z[k] += eta * dir[k];
        }
    }
    // decreases first, then recovers past the starting point
    CHECK(sc_path[1] < sc_path[0]);
    CHECK(sc_path.back() > sc_path.front());
    // the dip-then-rise shape has exactly one local minimum
    int direction_changes = 0;
    for (size_t i = 2; i < sc_path.size(); ++i) {
        const bool was_falling = sc_path[i - 1] < sc_path[i - 2];
        const bool is_rising = sc_path[i] > sc_path[i - 1];
        if (was_falling && is_rising) {
            ++direction_changes;
        }
    }
    CHECK(direction_changes == 1);
}

TEST_CASE("monte-carlo trials all pass in the first-order regime") {
    const TheoremSummary summary = run_theorem_trials(300, 424242, 1e-5);
    CHECK(summary.failed == 0);
    CHECK(summary.passed > 250);
    CHECK(summary.max_gradient_error <= 1e-6);
    CHECK(summary.trials.size() == 300);

    const std::string csv = theorem_trials_csv(summary);
    CHECK(csv.find("trial,V,p_target,p_norm_sq,derivative,delta_sc,verdict") == 0);
}

TEST_CASE("logit validation") {
    CHECK_THROWS_AS(make_logits({}, 0).validate(), ValidationError);
    CHECK_THROWS_AS(make_logits({1.0, std::nan("")}, 0).validate(), ValidationError);
    CHECK_THROWS_AS(make_logits({1.0, 2.0}, 5).validate(), ValidationError);
}
