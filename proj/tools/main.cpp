// selfcert - scores, selects and evaluates sampled LLM responses from
// recorded token logprobs.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "selfcert/commands.hpp"
#include "selfcert/errors.hpp"
#include "selfcert/version.hpp"

namespace {

using nlohmann::json;

// Precedence: CLI flags > config file > built-in defaults. Config keys are
// the long option names without dashes prefix (e.g. "trials", "p-grid").
json load_config_file(const std::string & path) {
    if (path.empty()) {
        return json::object();
    }
    std::ifstream in(path);
    if (!in) {
        throw selfcert::UsageError("cannot open config file: " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    json config = json::parse(buffer.str(), nullptr, false);
    if (config.is_discarded() || !config.is_object()) {
        throw selfcert::ValidationError(path + ": config must be a JSON object");
    }
    return config;
}

template <typename T>
void apply_config(const json & config, const CLI::Option * opt, const char * key, T & value) {
    if (opt != nullptr && opt->count() > 0) {
        return; // explicit flag wins
    }
    if (config.contains(key)) {
        value = config[key].get<T>();
    }
}

std::vector<double> parse_p_grid(const std::vector<std::string> & tokens) {
    std::vector<double> grid;
    for (const std::string & token : tokens) {
        char * end = nullptr;
        const double p = std::strtod(token.c_str(), &end);
        if (token.empty() || end != token.c_str() + token.size()) {
            throw selfcert::UsageError("bad p value '" + token + "'");
        }
        grid.push_back(p);
    }
    return grid;
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"confidence scoring and best-of-N selection over recorded logprobs"};
    app.set_version_flag("--version", selfcert::kToolVersion);
    app.require_subcommand(1);

    std::string config_path;
    auto add_config_option = [&config_path](CLI::App * sub) {
        sub->add_option("--config", config_path,
                        "JSON config file (flags take precedence)");
    };

    // score
    auto * score = app.add_subcommand("score", "compute confidence metrics per response");
    add_config_option(score);
    selfcert::ScoreOptions score_opts;
    std::string score_format = "csv";
    auto * score_pools = score->add_option("--pools", score_opts.pool_manifests,
                                           "pool manifest files");
    auto * score_metrics = score->add_option("--metrics", score_opts.metrics,
                                             "metric identifiers (default: all)");
    auto * score_out = score->add_option("--out", score_opts.output, "output file");
    auto * score_fmt = score->add_option("--format", score_format, "csv | line-records");
    auto * score_base = score->add_option("--base", score_opts.base_file,
                                          "empirical base distribution file");
    auto * score_strict = score->add_flag("--strict-topk", score_opts.strict_topk,
                                          "reject truncated top-k distributions");

    // select
    auto * select = app.add_subcommand("select", "pick a best response per pool");
    add_config_option(select);
    selfcert::SelectOptions select_opts;
    std::string select_format = "line-records";
    auto * select_pools = select->add_option("--pools", select_opts.pool_manifests,
                                             "pool manifest files");
    auto * select_strategy = select->add_option(
        "--strategy", select_opts.strategy,
        "first-answer | max-confidence | majority | borda | group-sum | group-average | nws");
    auto * select_p = select->add_option("--p", select_opts.p, "borda exponent");
    auto * select_metric = select->add_option("--metric", select_opts.metric,
                                              "confidence metric for ranking");
    auto * select_out = select->add_option("--out", select_opts.output, "output file");
    auto * select_fmt = select->add_option("--format", select_format, "csv | line-records");
    auto * select_base = select->add_option("--base", select_opts.base_file,
                                            "empirical base distribution file");
    auto * select_strict = select->add_flag("--strict-topk", select_opts.strict_topk,
                                            "reject truncated top-k distributions");

    // eval
    auto * eval = app.add_subcommand("eval", "best-of-N accuracy over strategies and N");
    add_config_option(eval);
    selfcert::EvalOptions eval_opts;
    std::string eval_metric = "self-certainty-kl";
    std::vector<std::string> eval_p_grid;
    auto * eval_pools = eval->add_option("--pools", eval_opts.pool_manifests,
                                         "pool manifest files");
    auto * eval_gold = eval->add_option("--gold", eval_opts.gold_file,
                                        "gold answer file (overrides manifests)");
    auto * eval_out = eval->add_option("--out", eval_opts.out_dir, "output directory");
    auto * eval_dataset = eval->add_option("--dataset", eval_opts.dataset_id, "dataset id");
    auto * eval_ns = eval->add_option("--ns", eval_opts.config.ns, "subset sizes N");
    auto * eval_trials = eval->add_option("--trials", eval_opts.config.trials,
                                          "repetitions per N");
    auto * eval_strategies = eval->add_option("--strategies", eval_opts.config.strategies,
                                              "strategy tokens; 'oracle' adds the upper bound");
    auto * eval_pg = eval->add_option("--p-grid", eval_p_grid, "borda p grid");
    auto * eval_seed = eval->add_option("--seed", eval_opts.config.master_seed, "master seed");
    auto * eval_metric_opt = eval->add_option("--metric", eval_metric, "ranking metric");
    auto * eval_workers = eval->add_option("--workers", eval_opts.config.workers,
                                           "concurrent questions");
    auto * eval_base = eval->add_option("--base", eval_opts.base_file,
                                        "empirical base distribution file");
    auto * eval_strict = eval->add_flag("--strict-topk", eval_opts.config.strict_topk,
                                        "reject truncated top-k distributions");

    // grid-search
    auto * grid = app.add_subcommand("grid-search", "borda accuracy across the p grid");
    add_config_option(grid);
    selfcert::GridOptions grid_opts;
    std::string grid_metric = "self-certainty-kl";
    std::vector<std::string> grid_p_grid;
    auto * grid_pools = grid->add_option("--pools", grid_opts.pool_manifests,
                                         "pool manifest files");
    auto * grid_gold = grid->add_option("--gold", grid_opts.gold_file, "gold answer file");
    auto * grid_out = grid->add_option("--out", grid_opts.out_dir, "output directory");
    auto * grid_dataset = grid->add_option("--dataset", grid_opts.dataset_id, "dataset id");
    auto * grid_ns = grid->add_option("--ns", grid_opts.config.ns, "subset sizes N");
    auto * grid_trials = grid->add_option("--trials", grid_opts.config.trials,
                                          "repetitions per N");
    auto * grid_pg = grid->add_option("--p-grid", grid_p_grid, "borda p grid");
    auto * grid_seed = grid->add_option("--seed", grid_opts.config.master_seed, "master seed");
    auto * grid_metric_opt = grid->add_option("--metric", grid_metric, "ranking metric");
    auto * grid_workers = grid->add_option("--workers", grid_opts.config.workers,
                                           "concurrent questions");
    auto * grid_base = grid->add_option("--base", grid_opts.base_file,
                                        "empirical base distribution file");
    auto * grid_strict = grid->add_flag("--strict-topk", grid_opts.config.strict_topk,
                                        "reject truncated top-k distributions");

    // sample
    auto * sample = app.add_subcommand("sample",
                                       "draw candidates from a completions endpoint");
    add_config_option(sample);
    selfcert::SampleOptions sample_opts;
    int64_t sample_seed = -1;
    auto * sample_endpoint = sample->add_option("--endpoint", sample_opts.sampling.endpoint,
                                                "http://host:port");
    auto * sample_model = sample->add_option("--model", sample_opts.sampling.model,
                                             "model name");
    auto * sample_prompt = sample->add_option("--prompt", sample_opts.prompt, "prompt text");
    auto * sample_prompt_file = sample->add_option("--prompt-file", sample_opts.prompt_file,
                                                   "file containing the prompt");
    auto * sample_qid = sample->add_option("--question-id", sample_opts.sampling.question_id,
                                           "question id for the pool");
    auto * sample_gold = sample->add_option("--gold-answer", sample_opts.gold_answer,
                                            "gold answer for the pool");
    auto * sample_n = sample->add_option("--n", sample_opts.n, "number of samples");
    auto * sample_temp = sample->add_option("--temperature", sample_opts.sampling.temperature,
                                            "sampling temperature");
    auto * sample_top_p = sample->add_option("--top-p", sample_opts.sampling.top_p,
                                             "nucleus sampling p");
    auto * sample_k = sample->add_option("--logprobs-k", sample_opts.sampling.logprobs_k,
                                         "top logprobs per step");
    auto * sample_vocab = sample->add_option("--vocab-size", sample_opts.sampling.vocab_size,
                                             "model vocabulary size V");
    auto * sample_max_tokens = sample->add_option("--max-tokens",
                                                  sample_opts.sampling.max_tokens,
                                                  "max tokens per completion");
    auto * sample_inflight = sample->add_option("--max-in-flight",
                                                sample_opts.sampling.max_in_flight,
                                                "concurrent requests");
    auto * sample_seed_opt = sample->add_option("--seed", sample_seed,
                                                "base seed; request i uses seed + i");
    auto * sample_manifest = sample->add_option("--out-manifest", sample_opts.out_manifest,
                                                "pool manifest output");
    auto * sample_records = sample->add_option("--out-records", sample_opts.out_records,
                                               "records output");

    // usc-prompt
    auto * usc = app.add_subcommand("usc-prompt",
                                    "render the consistency-selection prompt for a pool");
    add_config_option(usc);
    selfcert::UscPromptOptions usc_opts;
    auto * usc_pool = usc->add_option("--pool", usc_opts.pool_manifest, "pool manifest file");
    auto * usc_qid = usc->add_option("--question-id", usc_opts.question_id,
                                     "question id (default: first pool)");
    auto * usc_budget = usc->add_option("--char-budget", usc_opts.char_budget,
                                        "error out when the prompt exceeds this many chars");
    auto * usc_out = usc->add_option("--out", usc_opts.output, "output file (default stdout)");

    // theory-check
    auto * theory = app.add_subcommand("theory-check",
                                       "verify the gradient criterion numerically");
    add_config_option(theory);
    selfcert::TheoryOptions theory_opts;
    auto * theory_trials = theory->add_option("--trials", theory_opts.trials, "trial count");
    auto * theory_eta = theory->add_option("--eta", theory_opts.eta, "ascent step size");
    auto * theory_seed = theory->add_option("--seed", theory_opts.master_seed, "master seed");
    auto * theory_out = theory->add_option("--out", theory_opts.out_csv, "per-trial CSV");

    try {
        app.parse(argc, argv);

        const json config = load_config_file(config_path);

        if (score->parsed()) {
            apply_config(config, score_pools, "pools", score_opts.pool_manifests);
            apply_config(config, score_metrics, "metrics", score_opts.metrics);
            apply_config(config, score_out, "out", score_opts.output);
            apply_config(config, score_fmt, "format", score_format);
            apply_config(config, score_base, "base", score_opts.base_file);
            apply_config(config, score_strict, "strict-topk", score_opts.strict_topk);
            score_opts.format = selfcert::output_format_from_name(score_format);
            selfcert::cmd_score(score_opts);
        } else if (select->parsed()) {
            apply_config(config, select_pools, "pools", select_opts.pool_manifests);
            apply_config(config, select_strategy, "strategy", select_opts.strategy);
            apply_config(config, select_p, "p", select_opts.p);
            apply_config(config, select_metric, "metric", select_opts.metric);
            apply_config(config, select_out, "out", select_opts.output);
            apply_config(config, select_fmt, "format", select_format);
            apply_config(config, select_base, "base", select_opts.base_file);
            apply_config(config, select_strict, "strict-topk", select_opts.strict_topk);
            select_opts.format = selfcert::output_format_from_name(select_format);
            selfcert::cmd_select(select_opts);
        } else if (eval->parsed()) {
            apply_config(config, eval_pools, "pools", eval_opts.pool_manifests);
            apply_config(config, eval_gold, "gold", eval_opts.gold_file);
            apply_config(config, eval_out, "out", eval_opts.out_dir);
            apply_config(config, eval_dataset, "dataset", eval_opts.dataset_id);
            apply_config(config, eval_ns, "ns", eval_opts.config.ns);
            apply_config(config, eval_trials, "trials", eval_opts.config.trials);
            apply_config(config, eval_strategies, "strategies", eval_opts.config.strategies);
            apply_config(config, eval_pg, "p-grid", eval_p_grid);
            apply_config(config, eval_seed, "seed", eval_opts.config.master_seed);
            apply_config(config, eval_metric_opt, "metric", eval_metric);
            apply_config(config, eval_workers, "workers", eval_opts.config.workers);
            apply_config(config, eval_base, "base", eval_opts.base_file);
            apply_config(config, eval_strict, "strict-topk", eval_opts.config.strict_topk);
            if (!eval_p_grid.empty()) {
                eval_opts.config.p_grid = parse_p_grid(eval_p_grid);
            }
            const auto metric = selfcert::metric_from_name(eval_metric);
            if (!metric) {
                throw selfcert::UsageError("unknown metric '" + eval_metric + "'");
            }
            eval_opts.config.metric = *metric;
            // the oracle upper bound rides along as a pseudo-strategy token
            auto & strategies = eval_opts.config.strategies;
            auto it = std::find(strategies.begin(), strategies.end(), "oracle");
            if (it != strategies.end()) {
                eval_opts.with_oracle = true;
                strategies.erase(it);
            }
            selfcert::cmd_eval(eval_opts);
        } else if (grid->parsed()) {
            apply_config(config, grid_pools, "pools", grid_opts.pool_manifests);
            apply_config(config, grid_gold, "gold", grid_opts.gold_file);
            apply_config(config, grid_out, "out", grid_opts.out_dir);
            apply_config(config, grid_dataset, "dataset", grid_opts.dataset_id);
            apply_config(config, grid_ns, "ns", grid_opts.config.ns);
            apply_config(config, grid_trials, "trials", grid_opts.config.trials);
            apply_config(config, grid_pg, "p-grid", grid_p_grid);
            apply_config(config, grid_seed, "seed", grid_opts.config.master_seed);
            apply_config(config, grid_metric_opt, "metric", grid_metric);
            apply_config(config, grid_workers, "workers", grid_opts.config.workers);
            apply_config(config, grid_base, "base", grid_opts.base_file);
            apply_config(config, grid_strict, "strict-topk", grid_opts.config.strict_topk);
            if (!grid_p_grid.empty()) {
                grid_opts.config.p_grid = parse_p_grid(grid_p_grid);
            }
            const auto metric = selfcert::metric_from_name(grid_metric);
            if (!metric) {
                throw selfcert::UsageError("unknown metric '" + grid_metric + "'");
            }
            grid_opts.config.metric = *metric;
            selfcert::cmd_grid(grid_opts);
        } else if (sample->parsed()) {
            apply_config(config, sample_endpoint, "endpoint", sample_opts.sampling.endpoint);
            apply_config(config, sample_model, "model", sample_opts.sampling.model);
            apply_config(config, sample_prompt, "prompt", sample_opts.prompt);
            apply_config(config, sample_prompt_file, "prompt-file", sample_opts.prompt_file);
            apply_config(config, sample_qid, "question-id", sample_opts.sampling.question_id);
            apply_config(config, sample_gold, "gold-answer", sample_opts.gold_answer);
            apply_config(config, sample_n, "n", sample_opts.n);
            apply_config(config, sample_temp, "temperature",
                         sample_opts.sampling.temperature);
            apply_config(config, sample_top_p, "top-p", sample_opts.sampling.top_p);
            apply_config(config, sample_k, "logprobs-k", sample_opts.sampling.logprobs_k);
            apply_config(config, sample_vocab, "vocab-size", sample_opts.sampling.vocab_size);
            apply_config(config, sample_max_tokens, "max-tokens",
                         sample_opts.sampling.max_tokens);
            apply_config(config, sample_inflight, "max-in-flight",
                         sample_opts.sampling.max_in_flight);
            apply_config(config, sample_seed_opt, "seed", sample_seed);
            apply_config(config, sample_manifest, "out-manifest", sample_opts.out_manifest);
            apply_config(config, sample_records, "out-records", sample_opts.out_records);
            if (sample_seed >= 0) {
                sample_opts.sampling.seed = sample_seed;
            }
            if (const char * key = std::getenv("SELFCERT_API_KEY")) {
                sample_opts.sampling.api_key = key;
            }
            selfcert::cmd_sample(sample_opts);
        } else if (usc->parsed()) {
            apply_config(config, usc_pool, "pool", usc_opts.pool_manifest);
            apply_config(config, usc_qid, "question-id", usc_opts.question_id);
            apply_config(config, usc_budget, "char-budget", usc_opts.char_budget);
            apply_config(config, usc_out, "out", usc_opts.output);
            selfcert::cmd_usc_prompt(usc_opts);
        } else if (theory->parsed()) {
            apply_config(config, theory_trials, "trials", theory_opts.trials);
            apply_config(config, theory_eta, "eta", theory_opts.eta);
            apply_config(config, theory_seed, "seed", theory_opts.master_seed);
            apply_config(config, theory_out, "out", theory_opts.out_csv);
            selfcert::cmd_theory(theory_opts);
        }
        return 0;
    } catch (const CLI::ParseError & e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e); // --help / --version
        }
        app.exit(e);
        return 1;
    } catch (const selfcert::UsageError & e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const selfcert::TransportError & e) {
        std::fprintf(stderr, "transport error: %s\n", e.what());
        return 3;
    } catch (const selfcert::NumericError & e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const selfcert::ValidationError & e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        for (const std::string & violation : e.violations()) {
            std::fprintf(stderr, "  - %s\n", violation.c_str());
        }
        return 2;
    } catch (const std::exception & e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
