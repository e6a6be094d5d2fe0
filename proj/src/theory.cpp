#include "selfcert/theory.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "selfcert/errors.hpp"
#include "selfcert/metrics.hpp"
#include "selfcert/rng.hpp"

namespace selfcert {

namespace {

const char * verdict_name(TheoremVerdict verdict) {
    switch (verdict) {
        case TheoremVerdict::pass:          return "pass";
        case TheoremVerdict::fail:          return "fail";
        case TheoremVerdict::indeterminate: return "indeterminate";
    }
    return "unknown";
}

std::string format_double(double v) {
    return nlohmann::json(v).dump();
}

} // namespace

void LogitVector::validate() const {
    if (z.empty()) {
        throw ValidationError("logit vector is empty");
    }
    for (double v : z) {
        if (!std::isfinite(v)) {
            throw ValidationError("logit vector contains a non-finite entry");
        }
    }
    if (target < 0 || target >= size()) {
        throw ValidationError("target index " + std::to_string(target) +
                              " outside [0, V)");
    }
}

std::vector<double> softmax(const std::vector<double> & z) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : z) {
        m = std::max(m, v);
    }
    long double sum = 0.0L;
    std::vector<double> p(z.size());
    for (size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - m);
        sum += p[i];
    }
    for (double & v : p) {
        v = static_cast<double>(v / sum);
    }
    return p;
}

double token_self_certainty(const std::vector<double> & probs) {
    const auto v = static_cast<double>(probs.size());
    const double log_floor = std::log(kProbFloor);
    long double sum = 0.0L;
    for (double p : probs) {
        const double lp = p < kProbFloor ? log_floor : std::log(p);
        sum += lp;
    }
    return static_cast<double>(-sum / v) - std::log(v);
}

std::vector<double> sc_gradient_analytic(const LogitVector & logits) {
    logits.validate();
    std::vector<double> grad = softmax(logits.z);
    const double inv_v = 1.0 / static_cast<double>(logits.size());
    for (double & g : grad) {
        g -= inv_v;
    }
    return grad;
}

std::vector<double> ascent_direction(const LogitVector & logits) {
    logits.validate();
    std::vector<double> dir = softmax(logits.z);
    for (double & d : dir) {
        d = -d;
    }
    dir[static_cast<size_t>(logits.target)] += 1.0;
    return dir;
}

double directional_derivative(const LogitVector & logits) {
    logits.validate();
    const std::vector<double> p = softmax(logits.z);
    long double norm_sq = 0.0L;
    for (double v : p) {
        norm_sq += static_cast<long double>(v) * v;
    }
    return p[static_cast<size_t>(logits.target)] - static_cast<double>(norm_sq);
}

TheoremReport theorem_check(const LogitVector & logits, double eta) {
    if (!(eta > 0.0) || eta > 1e-3) {
        throw UsageError("eta must lie in (0, 1e-3]");
    }
    logits.validate();
    const std::vector<double> p = softmax(logits.z);
    const std::vector<double> direction = ascent_direction(logits);

    TheoremReport report;
    report.p_target = p[static_cast<size_t>(logits.target)];
    long double norm_sq = 0.0L;
    for (double v : p) {
        norm_sq += static_cast<long double>(v) * v;
    }
    report.p_norm_sq = static_cast<double>(norm_sq);
    report.derivative = report.p_target - report.p_norm_sq;

    std::vector<double> stepped = logits.z;
    for (size_t k = 0; k < stepped.size(); ++k) {
        stepped[k] += eta * direction[k];
    }
    report.delta_sc = token_self_certainty(softmax(stepped)) - token_self_certainty(p);

    if (std::abs(report.derivative) <= 1e-6) {
        // near the criterion boundary the first-order term no longer dominates
        report.verdict = TheoremVerdict::indeterminate;
    } else if ((report.delta_sc > 0.0) == (report.derivative > 0.0)) {
        report.verdict = TheoremVerdict::pass;
    } else {
        report.verdict = TheoremVerdict::fail;
    }
    return report;
}

std::vector<double> sc_gradient_fd(const LogitVector & logits, double h) {
    logits.validate();
    std::vector<double> grad(logits.z.size());
    std::vector<double> z = logits.z;
    for (size_t k = 0; k < z.size(); ++k) {
        const double saved = z[k];
        z[k] = saved + h;
        const double up = token_self_certainty(softmax(z));
        z[k] = saved - h;
        const double down = token_self_certainty(softmax(z));
        z[k] = saved;
        grad[k] = (up - down) / (2.0 * h);
    }
    return grad;
}

TheoremSummary run_theorem_trials(int num_trials, uint64_t seed, double eta) {
    if (num_trials < 1) {
        throw UsageError("trial count must be at least 1");
    }
    TheoremSummary summary;
    summary.trials.reserve(static_cast<size_t>(num_trials));
    std::mt19937_64 rng(seed);
    for (int trial = 0; trial < num_trials; ++trial) {
        const int v = 3 + static_cast<int>(uniform_below(rng, 254)); // V in [3, 256]
        LogitVector logits;
        logits.z.resize(static_cast<size_t>(v));
        for (double & zk : logits.z) {
            zk = 2.0 * gaussian(rng);
        }
        logits.target = static_cast<int32_t>(uniform_below(rng, static_cast<uint64_t>(v)));

        TheoremTrialRow row;
        row.vocab_size = v;
        row.report = theorem_check(logits, eta);
        switch (row.report.verdict) {
            case TheoremVerdict::pass:          ++summary.passed; break;
            case TheoremVerdict::fail:          ++summary.failed; break;
            case TheoremVerdict::indeterminate: ++summary.indeterminate; break;
        }

        const std::vector<double> analytic = sc_gradient_analytic(logits);
        const std::vector<double> fd = sc_gradient_fd(logits);
        for (size_t k = 0; k < analytic.size(); ++k) {
            const double scale = std::max(
                {1e-3, std::abs(analytic[k]), std::abs(fd[k])});
            summary.max_gradient_error = std::max(
                summary.max_gradient_error, std::abs(analytic[k] - fd[k]) / scale);
        }
        summary.trials.push_back(std::move(row));
    }
    return summary;
}

std::string theorem_trials_csv(const TheoremSummary & summary) {
    std::ostringstream out;
    out << "trial,V,p_target,p_norm_sq,derivative,delta_sc,verdict\n";
    for (size_t i = 0; i < summary.trials.size(); ++i) {
        const TheoremTrialRow & row = summary.trials[i];
        out << i << "," << row.vocab_size << "," << format_double(row.report.p_target) << ","
            << format_double(row.report.p_norm_sq) << ","
            << format_double(row.report.derivative) << ","
            << format_double(row.report.delta_sc) << "," << verdict_name(row.report.verdict)
            << "\n";
    }
    return out.str();
}

} // namespace selfcert
