#include "selfcert/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "selfcert/errors.hpp"
#include "selfcert/rng.hpp"
#include "selfcert/selection.hpp"

namespace selfcert {

namespace {

std::string format_double(double v) {
    return nlohmann::json(v).dump();
}

std::string format_p(double p) {
    std::ostringstream out;
    out << p;
    return out.str();
}

// Runs the indexed jobs on `workers` threads; results land in pre-sized slots,
// so the outcome does not depend on scheduling.
void parallel_for(int count, int workers, const std::function<void(int)> & job) {
    if (workers <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) {
            job(i);
        }
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> threads;
    const int num_threads = std::min(workers, count);
    threads.reserve(static_cast<size_t>(num_threads));
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int t = 0; t < num_threads; ++t) {
        threads.emplace_back([&]() {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= count || failed.load()) {
                    break;
                }
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!failed.exchange(true)) {
                        error = std::current_exception();
                    }
                }
            }
        });
    }
    for (std::thread & t : threads) {
        t.join();
    }
    if (failed.load()) {
        std::rethrow_exception(error);
    }
}

SelectionOutcome run_strategy(const std::vector<ScoredCandidate> & subset,
                              const StrategySpec & spec, Metric metric) {
    if (spec.kind == "first-answer") {
        return select_first_answer(subset);
    }
    if (spec.kind == "max-confidence") {
        return select_max_confidence(subset, metric_name(metric));
    }
    if (spec.kind == "majority") {
        return majority_vote(subset);
    }
    if (spec.kind == "borda") {
        return borda_vote(subset, spec.p);
    }
    if (spec.kind == "group-sum") {
        return group_score_vote(subset, GroupMode::sum, metric_name(metric));
    }
    if (spec.kind == "group-average") {
        return group_score_vote(subset, GroupMode::average, metric_name(metric));
    }
    if (spec.kind == "nws") {
        return normalized_weighted_sum_vote(subset);
    }
    throw UsageError("unknown strategy '" + spec.kind + "'");
}

struct ScoredPool {
    const CandidatePool * pool = nullptr;
    std::vector<ScoredCandidate> candidates;
    ExtractedAnswer gold;
};

std::vector<ScoredPool> score_pools(const std::vector<CandidatePool> & pools,
                                    const EvalConfig & config, const BaseDistribution * base) {
    std::vector<ScoredPool> scored(pools.size());
    parallel_for(static_cast<int>(pools.size()), config.workers, [&](int i) {
        ScoredPool & sp = scored[static_cast<size_t>(i)];
        sp.pool = &pools[static_cast<size_t>(i)];
        sp.candidates = score_pool(pools[static_cast<size_t>(i)], config.metric, base,
                                   config.strict_topk);
        sp.gold = make_answer(pools[static_cast<size_t>(i)].gold_answer);
    });
    return scored;
}

void check_pool_sizes(const std::vector<CandidatePool> & pools, const EvalConfig & config) {
    if (pools.empty()) {
        throw ConfigError("no pools to evaluate");
    }
    const int max_n = *std::max_element(config.ns.begin(), config.ns.end());
    for (const CandidatePool & pool : pools) {
        if (pool.size() < max_n) {
            throw ConfigError("pool '" + pool.question_id + "' has " +
                              std::to_string(pool.size()) + " records, need at least " +
                              std::to_string(max_n));
        }
    }
}

// Correctness bits for one pool over (strategy x N x trial), all strategies
// sharing the per-(N, trial) subset.
struct PoolOutcomes {
    // bits[strategy][n_idx][trial]
    std::vector<std::vector<std::vector<bool>>> bits;
    std::vector<SubsetLogEntry> subsets;
};

PoolOutcomes evaluate_pool(const ScoredPool & sp, const std::vector<StrategySpec> & specs,
                           const EvalConfig & config, bool oracle) {
    PoolOutcomes out;
    const size_t num_strategies = oracle ? 1 : specs.size();
    out.bits.assign(num_strategies,
                    std::vector<std::vector<bool>>(
                        config.ns.size(), std::vector<bool>(static_cast<size_t>(config.trials))));
    for (size_t n_idx = 0; n_idx < config.ns.size(); ++n_idx) {
        const int n = config.ns[n_idx];
        for (int trial = 0; trial < config.trials; ++trial) {
            const uint64_t seed =
                derive_subset_seed(config.master_seed, sp.pool->question_id, n, trial);
            std::mt19937_64 rng(seed);
            const std::vector<int> picked = sample_indices(sp.pool->size(), n, rng);
            SubsetLogEntry entry;
            entry.question_id = sp.pool->question_id;
            entry.n = n;
            entry.trial = trial;
            entry.seed = seed;
            entry.hash = subset_hash(picked);
            out.subsets.push_back(std::move(entry));

            std::vector<ScoredCandidate> subset;
            subset.reserve(picked.size());
            for (size_t j = 0; j < picked.size(); ++j) {
                ScoredCandidate cand = sp.candidates[static_cast<size_t>(picked[j])];
                cand.index = static_cast<int>(j);
                subset.push_back(std::move(cand));
            }

            if (oracle) {
                bool any_correct = false;
                for (const ScoredCandidate & cand : subset) {
                    if (answers_equal(cand.answer, sp.gold)) {
                        any_correct = true;
                        break;
                    }
                }
                out.bits[0][n_idx][static_cast<size_t>(trial)] = any_correct;
                continue;
            }
            for (size_t s = 0; s < specs.size(); ++s) {
                const SelectionOutcome outcome = run_strategy(subset, specs[s], config.metric);
                bool correct = false;
                if (outcome.winner_answer) {
                    correct = answers_equal(make_answer(*outcome.winner_answer), sp.gold);
                }
                out.bits[s][n_idx][static_cast<size_t>(trial)] = correct;
            }
        }
    }
    return out;
}

EvalResult evaluate_impl(const std::vector<ScoredPool> & scored,
                         const std::vector<StrategySpec> & specs, const EvalConfig & config,
                         const std::string & dataset_id, bool oracle) {
    std::vector<PoolOutcomes> outcomes(scored.size());
    parallel_for(static_cast<int>(scored.size()), config.workers, [&](int i) {
        outcomes[static_cast<size_t>(i)] =
            evaluate_pool(scored[static_cast<size_t>(i)], specs, config, oracle);
    });

    EvalResult result;
    result.table.dataset_id = dataset_id;
    const size_t num_strategies = oracle ? 1 : specs.size();
    const double num_questions = static_cast<double>(scored.size());
    for (size_t s = 0; s < num_strategies; ++s) {
        for (size_t n_idx = 0; n_idx < config.ns.size(); ++n_idx) {
            AccuracyRow row;
            row.strategy = oracle ? "oracle" : specs[s].label;
            row.n = config.ns[n_idx];
            long double mean_sum = 0.0L;
            for (int trial = 0; trial < config.trials; ++trial) {
                int correct = 0;
                for (const PoolOutcomes & po : outcomes) {
                    correct += po.bits[s][n_idx][static_cast<size_t>(trial)] ? 1 : 0;
                }
                const double acc = static_cast<double>(correct) / num_questions;
                row.per_trial.push_back(acc);
                mean_sum += acc;
            }
            row.mean_accuracy = static_cast<double>(mean_sum / config.trials);
            result.table.rows.push_back(std::move(row));
        }
    }
    std::sort(result.table.rows.begin(), result.table.rows.end(),
              [](const AccuracyRow & a, const AccuracyRow & b) {
                  return std::tie(a.strategy, a.n) < std::tie(b.strategy, b.n);
              });
    for (const PoolOutcomes & po : outcomes) {
        result.subsets.insert(result.subsets.end(), po.subsets.begin(), po.subsets.end());
    }
    std::sort(result.subsets.begin(), result.subsets.end(),
              [](const SubsetLogEntry & a, const SubsetLogEntry & b) {
                  return std::tie(a.question_id, a.n, a.trial) <
                         std::tie(b.question_id, b.n, b.trial);
              });
    return result;
}

// Candidates sorted by score for per-label histogram/report passes.
struct LabeledScore {
    double score = 0.0;
    std::string label;
};

std::vector<LabeledScore> label_scores(const std::vector<CandidatePool> & pools, Metric metric,
                                       const BaseDistribution * base) {
    std::vector<LabeledScore> out;
    for (const CandidatePool & pool : pools) {
        const ExtractedAnswer gold = make_answer(pool.gold_answer);
        for (const ResponseRecord & record : pool.records) {
            const ExtractedAnswer answer = extract_answer(record.text);
            LabeledScore ls;
            ls.score = metric_score(record, metric, base);
            if (!answer.extracted()) {
                ls.label = "no-answer";
            } else if (answers_equal(answer, gold)) {
                ls.label = "correct";
            } else {
                ls.label = "incorrect";
            }
            out.push_back(std::move(ls));
        }
    }
    return out;
}

} // namespace

std::vector<StrategySpec> expand_strategies(const std::vector<std::string> & tokens,
                                            const std::vector<double> & p_grid) {
    static const std::vector<std::string> known = {
        "first-answer", "max-confidence", "majority", "borda",
        "group-sum",    "group-average",  "nws"};
    std::vector<StrategySpec> specs;
    for (const std::string & token : tokens) {
        if (token.rfind("borda:", 0) == 0) {
            const std::string arg = token.substr(6);
            char * end = nullptr;
            const double p = std::strtod(arg.c_str(), &end);
            if (arg.empty() || end != arg.c_str() + arg.size() || p < 0.0) {
                throw UsageError("bad borda exponent in '" + token + "'");
            }
            specs.push_back({"borda[p=" + format_p(p) + "]", "borda", p});
            continue;
        }
        if (token == "borda") {
            if (p_grid.empty()) {
                throw UsageError("strategy 'borda' needs a non-empty p grid");
            }
            for (double p : p_grid) {
                specs.push_back({"borda[p=" + format_p(p) + "]", "borda", p});
            }
            continue;
        }
        if (std::find(known.begin(), known.end(), token) == known.end()) {
            std::string valid;
            for (const std::string & k : known) {
                valid += valid.empty() ? k : ", " + k;
            }
            throw UsageError("unknown strategy '" + token + "'; valid: " + valid +
                             ", borda:<p>");
        }
        specs.push_back({token, token, 0.0});
    }
    return specs;
}

void EvalConfig::validate() const {
    if (ns.empty() || !std::is_sorted(ns.begin(), ns.end()) || ns.front() < 1) {
        throw ConfigError("Ns must be a non-empty ascending list of positive integers");
    }
    if (trials < 1) {
        throw ConfigError("trials must be at least 1");
    }
    for (double p : p_grid) {
        if (!(p >= 0.0)) {
            throw ConfigError("p grid values must be non-negative");
        }
    }
    if (strategies.empty()) {
        throw ConfigError("at least one strategy is required");
    }
    if (workers < 1) {
        throw ConfigError("workers must be at least 1");
    }
}

const AccuracyRow * AccuracyTable::find(const std::string & strategy, int n) const {
    for (const AccuracyRow & row : rows) {
        if (row.strategy == strategy && row.n == n) {
            return &row;
        }
    }
    return nullptr;
}

EvalResult evaluate(const std::vector<CandidatePool> & pools, const EvalConfig & config,
                    const std::string & dataset_id, const BaseDistribution * base) {
    config.validate();
    check_pool_sizes(pools, config);
    const std::vector<StrategySpec> specs = expand_strategies(config.strategies, config.p_grid);
    const std::vector<ScoredPool> scored = score_pools(pools, config, base);
    return evaluate_impl(scored, specs, config, dataset_id, /*oracle=*/false);
}

GridSearchResult grid_search_p(const std::vector<CandidatePool> & pools,
                               const EvalConfig & config, const std::string & dataset_id,
                               const BaseDistribution * base) {
    config.validate();
    check_pool_sizes(pools, config);
    if (config.p_grid.empty()) {
        throw ConfigError("grid search needs a non-empty p grid");
    }
    const std::vector<ScoredPool> scored = score_pools(pools, config, base);
    GridSearchResult result;
    for (double p : config.p_grid) {
        const std::vector<StrategySpec> specs = {
            {"borda[p=" + format_p(p) + "]", "borda", p}};
        EvalResult eval = evaluate_impl(scored, specs, config, dataset_id, false);
        if (result.subsets.empty()) {
            result.subsets = eval.subsets;
        }
        result.per_p.emplace(p, std::move(eval.table));
    }
    for (int n : config.ns) {
        double best_p = config.p_grid.front();
        double best_acc = -1.0;
        for (const auto & [p, table] : result.per_p) {
            for (const AccuracyRow & row : table.rows) {
                if (row.n == n && row.mean_accuracy > best_acc) {
                    best_acc = row.mean_accuracy;
                    best_p = p;
                }
            }
        }
        result.best_p[n] = best_p;
    }
    result.annotation =
        "grid search over p is the most reliable choice; as a heuristic use "
        "p = 0.3 when N <= 16 and p = 1.2 when N >= 32 (optimum is model- and "
        "task-dependent)";
    return result;
}

EvalResult oracle_accuracy(const std::vector<CandidatePool> & pools, const EvalConfig & config,
                           const std::string & dataset_id) {
    config.validate();
    check_pool_sizes(pools, config);
    // answers suffice for the oracle, but subsets must match the other
    // strategies, so pools go through the same scoring path
    const std::vector<ScoredPool> scored = score_pools(pools, config, nullptr);
    return evaluate_impl(scored, {}, config, dataset_id, /*oracle=*/true);
}

std::vector<HistogramRow> score_histogram(const std::vector<CandidatePool> & pools,
                                          Metric metric, int num_bins,
                                          const BaseDistribution * base) {
    if (num_bins < 1) {
        throw UsageError("histogram needs at least one bin");
    }
    const std::vector<LabeledScore> scores = label_scores(pools, metric, base);
    if (scores.empty()) {
        return {};
    }
    double lo = scores.front().score;
    double hi = lo;
    for (const LabeledScore & ls : scores) {
        lo = std::min(lo, ls.score);
        hi = std::max(hi, ls.score);
    }
    if (hi <= lo) {
        hi = lo + 1.0;
    }
    const double width = (hi - lo) / num_bins;
    std::map<std::string, std::vector<int64_t>> counts;
    for (const char * label : {"correct", "incorrect", "no-answer"}) {
        counts[label].assign(static_cast<size_t>(num_bins), 0);
    }
    for (const LabeledScore & ls : scores) {
        auto bin = static_cast<int>((ls.score - lo) / width);
        bin = std::clamp(bin, 0, num_bins - 1);
        ++counts[ls.label][static_cast<size_t>(bin)];
    }
    std::vector<HistogramRow> rows;
    for (const auto & [label, bins] : counts) {
        for (int b = 0; b < num_bins; ++b) {
            rows.push_back({label, b, lo + b * width, lo + (b + 1) * width,
                            bins[static_cast<size_t>(b)]});
        }
    }
    return rows;
}

double spearman_correlation(const std::vector<double> & x, const std::vector<double> & y) {
    const size_t n = x.size();
    auto tie_ranks = [](const std::vector<double> & v) {
        const size_t m = v.size();
        std::vector<size_t> order(m);
        std::iota(order.begin(), order.end(), size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t a, size_t b) { return v[a] < v[b]; });
        std::vector<double> ranks(m);
        size_t i = 0;
        while (i < m) {
            size_t j = i;
            while (j + 1 < m && v[order[j + 1]] == v[order[i]]) {
                ++j;
            }
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (size_t k = i; k <= j; ++k) {
                ranks[order[k]] = avg;
            }
            i = j + 1;
        }
        return ranks;
    };
    const std::vector<double> rx = tie_ranks(x);
    const std::vector<double> ry = tie_ranks(y);
    double mean = (static_cast<double>(n) + 1.0) / 2.0;
    long double cov = 0.0L;
    long double var_x = 0.0L;
    long double var_y = 0.0L;
    for (size_t i = 0; i < n; ++i) {
        cov += (rx[i] - mean) * (ry[i] - mean);
        var_x += (rx[i] - mean) * (rx[i] - mean);
        var_y += (ry[i] - mean) * (ry[i] - mean);
    }
    if (var_x <= 0.0L || var_y <= 0.0L) {
        return 0.0; // constant input carries no ordering signal
    }
    return static_cast<double>(cov / std::sqrt(var_x * var_y));
}

std::vector<LengthBiasReport> length_bias_report(const std::vector<CandidatePool> & pools,
                                                 const std::vector<Metric> & metrics,
                                                 const BaseDistribution * base) {
    size_t total = 0;
    for (const CandidatePool & pool : pools) {
        total += pool.records.size();
    }
    if (total < 3) {
        throw ValidationError("length-bias report needs at least 3 responses, got " +
                              std::to_string(total));
    }
    std::vector<LengthBiasReport> reports;
    for (Metric metric : metrics) {
        LengthBiasReport report;
        report.metric = metric;
        std::vector<double> lengths;
        std::vector<double> scores;
        for (const CandidatePool & pool : pools) {
            for (const ResponseRecord & record : pool.records) {
                LengthBiasReport::Row row;
                row.question_id = record.question_id;
                row.sample_index = record.sample_index;
                row.length_chars = static_cast<int64_t>(record.text.size());
                row.score = metric_score(record, metric, base);
                lengths.push_back(static_cast<double>(row.length_chars));
                scores.push_back(row.score);
                report.rows.push_back(std::move(row));
            }
        }
        report.rank_correlation = spearman_correlation(lengths, scores);
        reports.push_back(std::move(report));
    }
    return reports;
}

std::vector<DifficultyRow> difficulty_report(const std::vector<CandidatePool> & pools,
                                             Metric metric, const BaseDistribution * base) {
    for (const CandidatePool & pool : pools) {
        if (!pool.level) {
            throw ConfigError("pool '" + pool.question_id +
                              "' has no difficulty level tag");
        }
    }
    std::map<std::pair<int, std::string>, std::pair<long double, int64_t>> cells;
    for (const CandidatePool & pool : pools) {
        const ExtractedAnswer gold = make_answer(pool.gold_answer);
        for (const ResponseRecord & record : pool.records) {
            const ExtractedAnswer answer = extract_answer(record.text);
            if (!answer.extracted()) {
                continue;
            }
            const std::string correctness =
                answers_equal(answer, gold) ? "correct" : "incorrect";
            auto & cell = cells[{*pool.level, correctness}];
            cell.first += metric_score(record, metric, base);
            cell.second += 1;
        }
    }
    std::vector<DifficultyRow> rows;
    for (const auto & [key, cell] : cells) {
        rows.push_back({key.first, key.second,
                        static_cast<double>(cell.first / cell.second), cell.second});
    }
    return rows;
}

std::string accuracy_table_csv(const AccuracyTable & table) {
    std::ostringstream out;
    out << "dataset,strategy,N,trial,accuracy\n";
    for (const AccuracyRow & row : table.rows) {
        for (size_t trial = 0; trial < row.per_trial.size(); ++trial) {
            out << table.dataset_id << "," << row.strategy << "," << row.n << "," << trial
                << "," << format_double(row.per_trial[trial]) << "\n";
        }
        out << table.dataset_id << "," << row.strategy << "," << row.n << ",mean,"
            << format_double(row.mean_accuracy) << "\n";
    }
    return out.str();
}

std::string subsets_csv(const std::vector<SubsetLogEntry> & subsets) {
    std::ostringstream out;
    out << "question_id,N,trial,seed,subset_hash\n";
    for (const SubsetLogEntry & entry : subsets) {
        out << entry.question_id << "," << entry.n << "," << entry.trial << "," << entry.seed
            << "," << entry.hash << "\n";
    }
    return out.str();
}

std::string grid_search_csv(const GridSearchResult & result, const std::string & dataset_id) {
    std::ostringstream out;
    out << "dataset,p,N,trial,accuracy\n";
    for (const auto & [p, table] : result.per_p) {
        for (const AccuracyRow & row : table.rows) {
            for (size_t trial = 0; trial < row.per_trial.size(); ++trial) {
                out << dataset_id << "," << format_p(p) << "," << row.n << "," << trial << ","
                    << format_double(row.per_trial[trial]) << "\n";
            }
            out << dataset_id << "," << format_p(p) << "," << row.n << ",mean,"
                << format_double(row.mean_accuracy) << "\n";
        }
    }
    return out.str();
}

std::string grid_best_csv(const GridSearchResult & result) {
    std::ostringstream out;
    out << "N,best_p,mean_accuracy\n";
    for (const auto & [n, p] : result.best_p) {
        const AccuracyTable & table = result.per_p.at(p);
        double acc = 0.0;
        for (const AccuracyRow & row : table.rows) {
            if (row.n == n) {
                acc = row.mean_accuracy;
            }
        }
        out << n << "," << format_p(p) << "," << format_double(acc) << "\n";
    }
    return out.str();
}

std::string histogram_csv(const std::vector<HistogramRow> & rows) {
    std::ostringstream out;
    out << "label,bin,lo,hi,count\n";
    for (const HistogramRow & row : rows) {
        out << row.label << "," << row.bin << "," << format_double(row.lo) << ","
            << format_double(row.hi) << "," << row.count << "\n";
    }
    return out.str();
}

std::string length_bias_csv(const std::vector<LengthBiasReport> & reports) {
    std::ostringstream out;
    out << "metric,question_id,sample_index,length_chars,score,rank_correlation\n";
    for (const LengthBiasReport & report : reports) {
        for (const LengthBiasReport::Row & row : report.rows) {
            out << metric_name(report.metric) << "," << row.question_id << ","
                << row.sample_index << "," << row.length_chars << ","
                << format_double(row.score) << ","
                << format_double(report.rank_correlation) << "\n";
        }
    }
    return out.str();
}

std::string difficulty_csv(const std::vector<DifficultyRow> & rows) {
    std::ostringstream out;
    out << "level,correctness,mean_score,count\n";
    for (const DifficultyRow & row : rows) {
        out << row.level << "," << row.correctness << "," << format_double(row.mean_score)
            << "," << row.count << "\n";
    }
    return out.str();
}

} // namespace selfcert
