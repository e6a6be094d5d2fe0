#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "selfcert/rng.hpp"

namespace synth {

using namespace selfcert;

TokenDistribution random_full_dist(std::mt19937_64 & rng, int vocab_size) {
    std::vector<double> logits(static_cast<size_t>(vocab_size));
    for (double & z : logits) {
        z = 2.0 * gaussian(rng);
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    long double sum = 0.0L;
    for (double z : logits) {
        sum += std::exp(static_cast<long double>(z - m));
    }
    const double log_z = m + static_cast<double>(std::log(sum));
    TokenDistribution dist;
    dist.kind = DistKind::full;
    dist.vocab_size = vocab_size;
    for (int id = 0; id < vocab_size; ++id) {
        dist.entries.push_back({id, logits[static_cast<size_t>(id)] - log_z});
    }
    return dist;
}

TokenDistribution topk_view(const TokenDistribution & full, int k) {
    std::vector<TokenEntry> sorted = full.entries;
    std::stable_sort(sorted.begin(), sorted.end(), [](const TokenEntry & a, const TokenEntry & b) {
        return a.logprob > b.logprob;
    });
    TokenDistribution dist;
    dist.kind = DistKind::top_k;
    dist.vocab_size = full.vocab_size;
    dist.entries.assign(sorted.begin(), sorted.begin() + k);
    long double listed = 0.0L;
    for (const TokenEntry & e : dist.entries) {
        listed += std::exp(static_cast<long double>(e.logprob));
    }
    const double residual = std::max(0.0, 1.0 - static_cast<double>(listed));
    dist.residual_logprob = residual > 0.0 ? std::log(residual)
                                           : -std::numeric_limits<double>::infinity();
    return dist;
}

std::vector<TokenDistribution> random_sequence(std::mt19937_64 & rng, int vocab_size,
                                               int steps) {
    std::vector<TokenDistribution> dists;
    dists.reserve(static_cast<size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        dists.push_back(random_full_dist(rng, vocab_size));
    }
    return dists;
}

ChosenTokenTrace random_trace(std::mt19937_64 & rng, int steps, double lo, double hi) {
    ChosenTokenTrace trace;
    for (int i = 0; i < steps; ++i) {
        trace.logprobs.push_back(lo + (hi - lo) * uniform_double(rng));
    }
    return trace;
}

TokenDistribution peaked_dist(int vocab_size, int top_token, double q) {
    TokenDistribution dist;
    dist.kind = DistKind::full;
    dist.vocab_size = vocab_size;
    const double rest = (1.0 - q) / static_cast<double>(vocab_size - 1);
    for (int id = 0; id < vocab_size; ++id) {
        dist.entries.push_back({id, std::log(id == top_token ? q : rest)});
    }
    return dist;
}

TokenDistribution dist_with_kl(int vocab_size, int top_token, double target_kl) {
    const double v = static_cast<double>(vocab_size);
    auto kl_of = [&](double q) {
        const double rest = (1.0 - q) / (v - 1.0);
        return -(std::log(v * q) + (v - 1.0) * std::log(v * rest)) / v;
    };
    double lo = 1.0 / v;
    double hi = 1.0 - 1e-9;
    if (target_kl <= 0.0) {
        return peaked_dist(vocab_size, top_token, lo);
    }
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (kl_of(mid) < target_kl) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return peaked_dist(vocab_size, top_token, 0.5 * (lo + hi));
}

std::vector<ScoredCandidate> random_scored_pool(std::mt19937_64 & rng, int n, int num_answers,
                                                double mask_prob, bool force_ties) {
    std::vector<ScoredCandidate> pool;
    for (int i = 0; i < n; ++i) {
        ScoredCandidate cand;
        cand.index = i;
        if (uniform_double(rng) >= mask_prob) {
            const auto a = uniform_below(rng, static_cast<uint64_t>(num_answers));
            cand.answer = make_answer("ans" + std::to_string(a));
        }
        double score = 2.0 + gaussian(rng);
        if (force_ties) {
            score = std::round(score * 2.0) / 2.0; // coarse grid provokes ties
        }
        cand.score = score;
        cand.avg_logprob = -0.2 - 1.5 * uniform_double(rng);
        pool.push_back(std::move(cand));
    }
    return pool;
}

ResponseRecord planted_record(const std::string & question_id, int sample_index,
                              const std::string & answer_text, bool masked,
                              double target_kl, double avg_logprob, int vocab_size,
                              int steps) {
    ResponseRecord record;
    record.question_id = question_id;
    record.sample_index = sample_index;
    if (masked) {
        record.text = "I could not settle on a final value for this question.";
    } else {
        std::ostringstream text;
        text << "Working through the question step by step leads to " << answer_text
             << ".\n{\"reasoning\": \"steps above\", \"answer\": \"" << answer_text
             << "\"}";
        record.text = text.str();
    }
    // Fully-listed top_k steps: confidence metrics see the whole distribution
    // while the chosen-token trace stays free to carry its own planted value.
    TokenDistribution step = dist_with_kl(vocab_size, 0, std::max(target_kl, 0.01));
    step.kind = DistKind::top_k;
    step.residual_logprob = -std::numeric_limits<double>::infinity();
    record.distributions = std::vector<TokenDistribution>(static_cast<size_t>(steps), step);
    record.chosen_trace.logprobs.assign(static_cast<size_t>(steps),
                                        std::min(avg_logprob, -1e-9));
    record.meta.model = "synthetic";
    record.meta.temperature = 0.6;
    record.meta.top_p = 0.9;
    return record;
}

std::vector<CandidatePool> make_suite(const SuiteParams & params) {
    std::mt19937_64 rng(params.seed);
    std::vector<CandidatePool> pools;
    for (int q = 0; q < params.questions; ++q) {
        CandidatePool pool;
        pool.question_id = "q" + std::to_string(q);
        pool.prompt = "Question " + std::to_string(q) + ": compute the planted value.";
        const int gold = 10 + q;
        pool.gold_answer = std::to_string(gold);
        if (params.with_levels) {
            pool.level = 1 + q % 5;
        }
        const double correct_rate =
            params.correct_rate_lo +
            (params.correct_rate_hi - params.correct_rate_lo) * uniform_double(rng);
        // wrong answers split over several values, so the gold answer usually
        // holds the plurality even below a 50% correct rate
        const int num_wrong = 2 + static_cast<int>(uniform_below(rng, 2));
        const double mu = params.score_mu_lo +
                          (params.score_mu_hi - params.score_mu_lo) * uniform_double(rng);
        for (int s = 0; s < params.samples; ++s) {
            const bool masked = uniform_double(rng) < params.mask_prob;
            const bool correct = !masked && uniform_double(rng) < correct_rate;
            std::string answer;
            if (correct) {
                answer = std::to_string(gold);
            } else if (!masked) {
                answer = std::to_string(100 + 10 * q +
                                        static_cast<int>(uniform_below(
                                            rng, static_cast<uint64_t>(num_wrong))));
            }
            const double score = mu + (correct ? params.delta : 0.0) +
                                 params.sigma * gaussian(rng);
            const double alp = -1.2 + (correct ? params.ppl_delta : 0.0) +
                               params.ppl_sigma * gaussian(rng);
            pool.records.push_back(planted_record(pool.question_id, s, answer, masked, score,
                                                  std::min(alp, -0.01), params.vocab_size,
                                                  params.steps));
        }
        pool.validate();
        pools.push_back(std::move(pool));
    }
    return pools;
}

} // namespace synth
