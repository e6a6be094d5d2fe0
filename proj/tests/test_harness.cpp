#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "brute_force.hpp"
#include "selfcert/errors.hpp"
#include "selfcert/harness.hpp"
#include "selfcert/rng.hpp"
#include "synthetic.hpp"

using namespace selfcert;

namespace {

EvalConfig small_config() {
    EvalConfig config;
    config.ns = {4, 8, 16};
    config.trials = 5;
    config.strategies = {"first-answer", "max-confidence", "majority", "borda"};
    config.p_grid = {0.0, 0.3, 0.5, 0.7, 1.2, 2.0};
    config.master_seed = 77;
    return config;
}

std::vector<CandidatePool> all_gold_pools() {
    std::vector<CandidatePool> pools;
    for (int q = 0; q < 3; ++q) {
        CandidatePool pool;
        pool.question_id = "gold" + std::to_string(q);
        pool.prompt = "p";
        pool.gold_answer = "7";
        for (int s = 0; s < 16; ++s) {
            pool.records.push_back(synth::planted_record(pool.question_id, s, "7", false,
                                                         1.0 + 0.1 * s, -0.5, 16, 2));
        }
        pools.push_back(std::move(pool));
    }
    return pools;
}

} // namespace

TEST_CASE("all-gold pools score accuracy 1 everywhere") {
    const EvalConfig config = small_config();
    const EvalResult result = evaluate(all_gold_pools(), config, "all-gold");
    CHECK(!result.table.rows.empty());
    for (const AccuracyRow & row : result.table.rows) {
        CHECK(row.mean_accuracy == 1.0);
        for (double acc : row.per_trial) {
            CHECK(acc == 1.0);
        }
    }
}

TEST_CASE("strategy accuracies match the brute-force evaluator on the planted suite") {
    const std::vector<CandidatePool> pools = synth::make_suite({});
    const EvalConfig config = small_config();
    const EvalResult result = evaluate(pools, config, "s1");

    std::vector<brute::Strategy> strategies = {{"first-answer", "first-answer", 0.0},
                                               {"max-confidence", "max-confidence", 0.0},
                                               {"oracle", "oracle", 0.0},
                                               {"majority", "majority", 0.0}};
    for (double p : config.p_grid) {
        std::ostringstream label;
        label << "borda[p=" << p << "]";
        strategies.push_back({label.str(), "borda", p});
    }
    const brute::Accuracies expect = brute::evaluate(pools, strategies, config.ns,
                                                     config.trials, config.master_seed,
                                                     config.metric);

    int compared = 0;
    for (const AccuracyRow & row : result.table.rows) {
        const auto & per_trial = expect.at(row.strategy).at(row.n);
        REQUIRE(per_trial.size() == row.per_trial.size());
        for (size_t t = 0; t < per_trial.size(); ++t) {
            CHECK(row.per_trial[t] == per_trial[t]);
        }
        ++compared;
    }
    CHECK(compared == static_cast<int>(result.table.rows.size()));
    CHECK(compared >= 27); // 9 strategies x 3 Ns

    // oracle dominates every strategy on every (N, trial)
    const EvalResult oracle = oracle_accuracy(pools, config, "s1");
    for (const AccuracyRow & row : result.table.rows) {
        const AccuracyRow * bound = oracle.table.find("oracle", row.n);
        REQUIRE(bound != nullptr);
        for (size_t t = 0; t < row.per_trial.size(); ++t) {
            CHECK(bound->per_trial[t] >= row.per_trial[t]);
        }
        CHECK(expect.at("oracle").at(row.n) == bound->per_trial);
    }
}

TEST_CASE("evaluation is deterministic and independent of worker count") {
    const std::vector<CandidatePool> pools = synth::make_suite({});
    EvalConfig config = small_config();
    const EvalResult once = evaluate(pools, config, "s1");
    const EvalResult twice = evaluate(pools, config, "s1");
    CHECK(accuracy_table_csv(once.table) == accuracy_table_csv(twice.table));
    CHECK(subsets_csv(once.subsets) == subsets_csv(twice.subsets));

    config.workers = 4;
    const EvalResult parallel = evaluate(pools, config, "s1");
    CHECK(accuracy_table_csv(once.table) == accuracy_table_csv(parallel.table));
    CHECK(subsets_csv(once.subsets) == subsets_csv(parallel.subsets));
}

TEST_CASE("subset log matches independent re-derivation") {
    const std::vector<CandidatePool> pools = synth::make_suite({});
    const EvalConfig config = small_config();
    const EvalResult result = evaluate(pools, config, "s1");
    CHECK(result.subsets.size() == pools.size() * config.ns.size() *
                                       static_cast<size_t>(config.trials));
    for (const SubsetLogEntry & entry : result.subsets) {
        const uint64_t seed =
            derive_subset_seed(config.master_seed, entry.question_id, entry.n, entry.trial);
        CHECK(entry.seed == seed);
        std::mt19937_64 rng(seed);
        const CandidatePool * pool = nullptr;
        for (const CandidatePool & p : pools) {
            if (p.question_id == entry.question_id) {
                pool = &p;
            }
        }
        REQUIRE(pool != nullptr);
        CHECK(entry.hash == subset_hash(sample_indices(pool->size(), entry.n, rng)));
    }
}

TEST_CASE("grid search at p=0 equals the majority column") {
    const std::vector<CandidatePool> pools = synth::make_suite({});
    EvalConfig config = small_config();
    config.strategies = {"majority"};
    const EvalResult majority = evaluate(pools, config, "s1");

    EvalConfig grid_config = config;
    grid_config.p_grid = {0.0};
    const GridSearchResult grid = grid_search_p(pools, grid_config, "s1");
    REQUIRE(grid.per_p.size() == 1);
    const AccuracyTable & table = grid.per_p.at(0.0);
    for (const AccuracyRow & row : table.rows) {
        const AccuracyRow * expect = majority.table.find("majority", row.n);
        REQUIRE(expect != nullptr);
        CHECK(row.per_trial == expect->per_trial);
    }
    CHECK(grid.annotation.find("p = 0.3") != std::string::npos);
    CHECK(grid.annotation.find("p = 1.2") != std::string::npos);
}

TEST_CASE("grid search reports a best p per N") {
    const std::vector<CandidatePool> pools = synth::make_suite({});
    EvalConfig config = small_config();
    const GridSearchResult grid = grid_search_p(pools, config, "s1");
    CHECK(grid.per_p.size() == config.p_grid.size());
    for (int n : config.ns) {
        REQUIRE(grid.best_p.contains(n));
        const double best = grid.best_p.at(n);
        const AccuracyRow * best_row =
            grid.per_p.at(best).rows.empty() ? nullptr : &grid.per_p.at(best).rows.front();
        REQUIRE(best_row != nullptr);
        // the chosen p is at least as good as every other p at this N
        double best_acc = -1.0;
        for (const AccuracyRow & row : grid.per_p.at(best).rows) {
            if (row.n == n) {
                best_acc = row.mean_accuracy;
            }
        }
        for (const auto & [p, table] : grid.per_p) {
            for (const AccuracyRow & row : table.rows) {
                if (row.n == n) {
                    CHECK(row.mean_accuracy <= best_acc);
                }
            }
        }
    }
}

TEST_CASE("oracle accuracy hits 1 when any member is correct, and grows with N") {
    std::vector<CandidatePool> pools;
    CandidatePool pool;
    pool.question_id = "one-correct";
    pool.gold_answer = "9";
    for (int s = 0; s < 16; ++s) {
        pool.records.push_back(synth::planted_record(
            pool.question_id, s, s == 7 ? "9" : "1", false, 1.0, -0.4, 16, 2));
    }
    pools.push_back(pool);
    EvalConfig config = small_config();
    const EvalResult result = oracle_accuracy(pools, config, "one");
    const AccuracyRow * full = result.table.find("oracle", 16);
    REQUIRE(full != nullptr);
    CHECK(full->mean_accuracy == 1.0); // N = pool size always sees the correct member

    // mean oracle accuracy is non-decreasing in N on the planted suite
    const EvalResult s1 = oracle_accuracy(synth::make_suite({}), config, "s1");
    double prev = -1.0;
    for (int n : config.ns) {
        const AccuracyRow * row = s1.table.find("oracle", n);
        REQUIRE(row != nullptr);
        CHECK(row->mean_accuracy >= prev);
        prev = row->mean_accuracy;
    }
}

TEST_CASE("masked-only questions are incorrect for every non-oracle strategy") {
    std::vector<CandidatePool> pools;
    CandidatePool pool;
    pool.question_id = "masked";
    pool.gold_answer = "5";
    for (int s = 0; s < 8; ++s) {
        pool.records.push_back(
            synth::planted_record(pool.question_id, s, "", true, 1.0, -0.4, 16, 2));
    }
    pools.push_back(pool);
    EvalConfig config = small_config();
    config.ns = {4, 8};
    const EvalResult result = evaluate(pools, config, "masked");
    for (const AccuracyRow & row : result.table.rows) {
        CHECK(row.mean_accuracy == 0.0);
    }
}

TEST_CASE("pools smaller than max N are a configuration error") {
    EvalConfig config = small_config();
    config.ns = {4, 8, 64};
    CHECK_THROWS_AS(evaluate(synth::make_suite({}), config, "s1"), ConfigError);
    CHECK_THROWS_AS(evaluate({}, small_config(), "none"), ConfigError);
}

TEST_CASE("replayed pools keep the paper's strategy ordering at N=64") {
    synth::SuiteParams params;
    params.questions = 12;
    params.samples = 64;
    params.seed = 909;
    params.delta = 1.0;
    params.sigma = 0.35;
    params.ppl_delta = 0.25;
    params.ppl_sigma = 0.6;
    const std::vector<CandidatePool> pools = synth::make_suite(params);

    EvalConfig config;
    config.ns = {64};
    config.trials = 3;
    config.master_seed = 5;
    config.strategies = {"first-answer", "max-confidence"};

    config.metric = Metric::self_certainty_kl;
    const EvalResult by_certainty = evaluate(pools, config, "replay");
    config.metric = Metric::neg_perplexity;
    const EvalResult by_perplexity = evaluate(pools, config, "replay");

    const double certainty = by_certainty.table.find("max-confidence", 64)->mean_accuracy;
    const double perplexity = by_perplexity.table.find("max-confidence", 64)->mean_accuracy;
    const double first = by_certainty.table.find("first-answer", 64)->mean_accuracy;
    CHECK(certainty > perplexity);
    CHECK(perplexity > first);
}

TEST_CASE("score_histogram separates planted correct/incorrect modes") {
    synth::SuiteParams params;
    params.questions = 40;
    params.samples = 60;
    params.seed = 1234;
    params.delta = 1.0;
    params.sigma = 0.4;
    params.correct_rate_lo = 0.4;
    params.correct_rate_hi = 0.6;
    params.score_mu_lo = 2.0; // a single base mean leaves two clean modes
    params.score_mu_hi = 2.0;
    const std::vector<CandidatePool> pools = synth::make_suite(params);
    const std::vector<HistogramRow> rows =
        score_histogram(pools, Metric::self_certainty_kl, 50);
    REQUIRE(!rows.empty());

    std::map<std::string, std::pair<double, double>> moments; // label -> (sum w*x, sum w)
    for (const HistogramRow & row : rows) {
        const double center = 0.5 * (row.lo + row.hi);
        moments[row.label].first += center * static_cast<double>(row.count);
        moments[row.label].second += static_cast<double>(row.count);
    }
    CHECK(moments.at("no-answer").second > 0.0); // masked responses are routed
    const double mean_correct = moments.at("correct").first / moments.at("correct").second;
    const double mean_incorrect =
        moments.at("incorrect").first / moments.at("incorrect").second;
    CHECK(std::abs((mean_correct - mean_incorrect) - params.delta) < 0.05);

    // all-correct pools produce counts under a single label
    const std::vector<HistogramRow> single =
        score_histogram(all_gold_pools(), Metric::self_certainty_kl, 10);
    for (const HistogramRow & row : single) {
        if (row.label != "correct") {
            CHECK(row.count == 0);
        }
    }
}

TEST_CASE("length bias report recovers planted correlations") {
    // constant scores: no ordering signal
    CHECK(spearman_correlation({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}) == 0.0);
    // score equals length: perfect rank correlation
    CHECK(spearman_correlation({10.0, 20.0, 30.0}, {1.0, 2.0, 3.0}) ==
          doctest::Approx(1.0).epsilon(1e-12));

    std::vector<CandidatePool> pools;
    CandidatePool pool;
    pool.question_id = "length";
    pool.gold_answer = "1";
    std::mt19937_64 rng(321);
    for (int s = 0; s < 40; ++s) {
        const int len = 20 + static_cast<int>(uniform_below(rng, 100));
        ResponseRecord record = synth::planted_record(
            pool.question_id, s, "1", false, 1.5 + 0.2 * gaussian(rng), -0.5, 16, 4);
        record.text.append(static_cast<size_t>(len), 'x');
        // longer responses get warmer traces: avg logprob rises with length
        record.chosen_trace.logprobs.assign(4, -40.0 / static_cast<double>(len));
        pool.records.push_back(std::move(record));
    }
    pools.push_back(pool);

    const std::vector<LengthBiasReport> reports = length_bias_report(
        pools, {Metric::neg_perplexity, Metric::self_certainty_kl});
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].metric == Metric::neg_perplexity);
    CHECK(reports[0].rank_correlation > 0.5);
    CHECK(std::abs(reports[1].rank_correlation) < 0.3);
    CHECK(reports[0].rows.size() == 40);

    CHECK_THROWS_AS(length_bias_report({}, {Metric::avg_logp}), ValidationError);
}

TEST_CASE("difficulty report splits by level and correctness") {
    synth::SuiteParams params;
    params.questions = 25;
    params.samples = 24;
    params.seed = 777;
    params.with_levels = true;
    std::vector<CandidatePool> pools = synth::make_suite(params);
    // plant scores that fall with the difficulty level
    for (CandidatePool & pool : pools) {
        const double mu = 3.0 - 0.4 * static_cast<double>(*pool.level);
        for (ResponseRecord & record : pool.records) {
            const double old = oracles::sequence_score(*record.distributions,
                                                       Metric::self_certainty_kl);
            record.distributions = std::vector<TokenDistribution>(
                record.distributions->size(),
                synth::dist_with_kl(params.vocab_size, 0,
                                    std::max(0.05, mu + (old - 2.0) * 0.2)));
        }
    }
    const std::vector<DifficultyRow> rows =
        difficulty_report(pools, Metric::self_certainty_kl);
    std::map<int, double> correct_means;
    for (const DifficultyRow & row : rows) {
        CHECK(row.count > 0);
        if (row.correctness == "correct") {
            correct_means[row.level] = row.mean_score;
        }
    }
    REQUIRE(correct_means.size() == 5);
    for (int level = 2; level <= 5; ++level) {
        CHECK(correct_means.at(level) < correct_means.at(level - 1));
    }

    // missing tags are a configuration error
    std::vector<CandidatePool> untagged = synth::make_suite({});
    CHECK_THROWS_AS(difficulty_report(untagged, Metric::self_certainty_kl), ConfigError);

    // single level collapses to one row per correctness
    std::vector<CandidatePool> one_level = synth::make_suite({});
    for (CandidatePool & pool : one_level) {
        pool.level = 3;
    }
    const std::vector<DifficultyRow> single =
        difficulty_report(one_level, Metric::self_certainty_kl);
    for (const DifficultyRow & row : single) {
        CHECK(row.level == 3);
    }
    CHECK(single.size() <= 2);
}

TEST_CASE("strategy token parsing") {
    const std::vector<StrategySpec> specs =
        expand_strategies({"majority", "borda", "borda:0.7"}, {0.0, 1.2});
    REQUIRE(specs.size() == 4);
    CHECK(specs[0].kind == "majority");
    CHECK(specs[1].label == "borda[p=0]");
    CHECK(specs[2].label == "borda[p=1.2]");
    CHECK(specs[3].p == 0.7);
    CHECK_THROWS_AS(expand_strategies({"nope"}, {}), UsageError);
    CHECK_THROWS_AS(expand_strategies({"borda:-1"}, {}), UsageError);
    CHECK_THROWS_AS(expand_strategies({"borda"}, {}), UsageError);
}
