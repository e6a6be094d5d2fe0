#include "selfcert/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "selfcert/errors.hpp"
#include "selfcert/selection.hpp"
#include "selfcert/sha256.hpp"
#include "selfcert/theory.hpp"
#include "selfcert/usc.hpp"
#include "selfcert/version.hpp"

namespace selfcert {

namespace {

using nlohmann::json;

namespace fs = std::filesystem;

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(
        std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file(const std::string & path, const std::string & content) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) {
        fs::create_directories(parent);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write file: " + path);
    }
    out << content;
}

void write_run_manifest(const std::string & path, const std::string & subcommand,
                        const json & config, const std::vector<std::string> & inputs,
                        const std::vector<std::string> & outputs, uint64_t master_seed) {
    json manifest;
    manifest["config"] = config;
    manifest["format"] = kFormatVersion;
    json input_list = json::array();
    for (const std::string & input : inputs) {
        input_list.push_back({{"path", input}, {"sha256", sha256_file(input)}});
    }
    manifest["inputs"] = std::move(input_list);
    manifest["master_seed"] = master_seed;
    manifest["outputs"] = outputs;
    manifest["subcommand"] = subcommand;
    manifest["timestamp"] = utc_timestamp();
    manifest["version"] = kToolVersion;
    write_file(path, manifest.dump(2) + "\n");
}

std::string format_double(double v) {
    return json(v).dump();
}

std::vector<Metric> resolve_metrics(const std::vector<std::string> & names, bool have_base) {
    if (names.empty()) {
        std::vector<Metric> metrics = default_metrics();
        if (have_base) {
            metrics.push_back(Metric::self_certainty_empirical);
        }
        return metrics;
    }
    std::vector<Metric> metrics;
    for (const std::string & name : names) {
        const auto metric = metric_from_name(name);
        if (!metric) {
            std::string valid;
            for (Metric m : default_metrics()) {
                valid += valid.empty() ? metric_name(m) : std::string(", ") + metric_name(m);
            }
            valid += std::string(", ") + metric_name(Metric::self_certainty_empirical);
            throw UsageError("unknown metric '" + name + "'; valid: " + valid);
        }
        if (*metric == Metric::self_certainty_empirical && !have_base) {
            throw UsageError("self-certainty-empirical needs --base");
        }
        metrics.push_back(*metric);
    }
    return metrics;
}

Metric resolve_metric(const std::string & name, bool have_base) {
    return resolve_metrics({name}, have_base).front();
}

// Config snapshots use the CLI flag names, so a manifest's "config" object
// replays as-is through --config.
json eval_config_json(const EvalConfig & config) {
    json j;
    j["ns"] = config.ns;
    j["trials"] = config.trials;
    j["strategies"] = config.strategies;
    json p_grid = json::array();
    for (double p : config.p_grid) {
        p_grid.push_back(format_double(p));
    }
    j["p-grid"] = std::move(p_grid);
    j["seed"] = config.master_seed;
    j["metric"] = metric_name(config.metric);
    j["strict-topk"] = config.strict_topk;
    j["workers"] = config.workers;
    return j;
}

std::string default_dataset_id(const std::vector<std::string> & manifests) {
    if (manifests.empty()) {
        return "dataset";
    }
    return fs::path(manifests.front()).stem().string();
}

} // namespace

OutputFormat output_format_from_name(const std::string & name) {
    if (name == "csv") {
        return OutputFormat::csv;
    }
    if (name == "line-records") {
        return OutputFormat::line_records;
    }
    throw UsageError("unknown format '" + name + "'; valid: csv, line-records");
}

BaseDistribution load_base_distribution(const std::string & path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open base distribution file: " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const json raw = json::parse(buffer.str(), nullptr, false);
    if (raw.is_discarded() || !raw.is_object() || !raw.contains("probs") ||
        !raw["probs"].is_array()) {
        throw ValidationError(path + ": expected {\"format\":1,\"probs\":[...],"
                                     "\"smoothing_epsilon\":<num>}");
    }
    BaseDistribution base;
    for (const json & v : raw["probs"]) {
        if (!v.is_number()) {
            throw ValidationError(path + ": probs must be numbers");
        }
        base.probs.push_back(v.get<double>());
    }
    if (raw.contains("smoothing_epsilon") && raw["smoothing_epsilon"].is_number()) {
        base.smoothing_epsilon = raw["smoothing_epsilon"].get<double>();
    }
    base.validate();
    return base;
}

std::vector<CandidatePool> load_pool_files(const std::vector<std::string> & manifests,
                                           const std::string & gold_file) {
    if (manifests.empty()) {
        throw UsageError("at least one pool manifest is required");
    }
    std::vector<CandidatePool> pools;
    for (const std::string & manifest : manifests) {
        std::vector<CandidatePool> loaded = load_pools(manifest);
        pools.insert(pools.end(), std::make_move_iterator(loaded.begin()),
                     std::make_move_iterator(loaded.end()));
    }
    if (!gold_file.empty()) {
        const auto gold = load_gold_answers(gold_file);
        for (CandidatePool & pool : pools) {
            const auto it = gold.find(pool.question_id);
            if (it != gold.end()) {
                pool.gold_answer = it->second;
            }
        }
    }
    return pools;
}

void cmd_score(const ScoreOptions & options) {
    if (options.output.empty()) {
        throw UsageError("--out is required");
    }
    const std::vector<CandidatePool> pools = load_pool_files(options.pool_manifests, "");
    BaseDistribution base;
    const bool have_base = !options.base_file.empty();
    if (have_base) {
        base = load_base_distribution(options.base_file);
    }
    const std::vector<Metric> metrics = resolve_metrics(options.metrics, have_base);

    std::vector<ScoreRow> rows;
    for (const CandidatePool & pool : pools) {
        std::vector<ScoreRow> pool_rows =
            score_report(pool, metrics, have_base ? &base : nullptr, options.strict_topk);
        rows.insert(rows.end(), pool_rows.begin(), pool_rows.end());
    }

    std::ostringstream out;
    if (options.format == OutputFormat::csv) {
        out << "question_id,sample_index,metric,value,clamped\n";
        for (const ScoreRow & row : rows) {
            out << row.question_id << "," << row.sample_index << ","
                << metric_name(row.metric) << "," << format_double(row.value) << ","
                << (row.clamped ? 1 : 0) << "\n";
        }
    } else {
        for (const ScoreRow & row : rows) {
            json j;
            j["clamped"] = row.clamped;
            j["metric"] = metric_name(row.metric);
            j["question_id"] = row.question_id;
            j["sample_index"] = row.sample_index;
            j["value"] = row.value;
            out << j.dump() << "\n";
        }
    }
    write_file(options.output, out.str());

    json config;
    config["pools"] = options.pool_manifests;
    config["base"] = options.base_file;
    json metric_names = json::array();
    for (Metric m : metrics) {
        metric_names.push_back(metric_name(m));
    }
    config["metrics"] = std::move(metric_names);
    config["format"] = options.format == OutputFormat::csv ? "csv" : "line-records";
    config["strict-topk"] = options.strict_topk;
    config["out"] = options.output;
    std::vector<std::string> inputs = options.pool_manifests;
    if (have_base) {
        inputs.push_back(options.base_file);
    }
    write_run_manifest(options.output + ".manifest.json", "score", config, inputs,
                       {options.output}, 0);
}

void cmd_select(const SelectOptions & options) {
    if (options.output.empty()) {
        throw UsageError("--out is required");
    }
    const std::vector<CandidatePool> pools = load_pool_files(options.pool_manifests, "");
    BaseDistribution base;
    const bool have_base = !options.base_file.empty();
    if (have_base) {
        base = load_base_distribution(options.base_file);
    }
    const Metric metric = resolve_metric(options.metric, have_base);
    const std::vector<StrategySpec> specs =
        expand_strategies({options.strategy == "borda"
                               ? "borda:" + format_double(options.p)
                               : options.strategy},
                          {});

    std::ostringstream out;
    const bool csv = options.format == OutputFormat::csv;
    if (csv) {
        out << "question_id,strategy,winner_index,winner_answer,diagnostics\n";
    }
    for (const CandidatePool & pool : pools) {
        const std::vector<ScoredCandidate> scored =
            score_pool(pool, metric, have_base ? &base : nullptr, options.strict_topk);
        SelectionOutcome outcome;
        if (specs.front().kind == "first-answer") {
            outcome = select_first_answer(scored);
        } else if (specs.front().kind == "max-confidence") {
            outcome = select_max_confidence(scored, metric_name(metric));
        } else if (specs.front().kind == "majority") {
            outcome = majority_vote(scored);
        } else if (specs.front().kind == "borda") {
            outcome = borda_vote(scored, specs.front().p);
        } else if (specs.front().kind == "group-sum") {
            outcome = group_score_vote(scored, GroupMode::sum, metric_name(metric));
        } else if (specs.front().kind == "group-average") {
            outcome = group_score_vote(scored, GroupMode::average, metric_name(metric));
        } else {
            outcome = normalized_weighted_sum_vote(scored);
        }
        if (csv) {
            out << pool.question_id << "," << outcome.strategy << ","
                << (outcome.winner_index ? std::to_string(*outcome.winner_index) : "") << ","
                << (outcome.winner_answer ? *outcome.winner_answer : "") << ","
                << outcome.diagnostics << "\n";
        } else {
            json j = json::parse(serialize_outcome(outcome));
            j["question_id"] = pool.question_id;
            out << j.dump() << "\n";
        }
    }
    write_file(options.output, out.str());

    json config;
    config["pools"] = options.pool_manifests;
    config["strategy"] = options.strategy;
    config["p"] = options.p;
    config["metric"] = metric_name(metric);
    config["format"] = csv ? "csv" : "line-records";
    config["strict-topk"] = options.strict_topk;
    config["base"] = options.base_file;
    config["out"] = options.output;
    std::vector<std::string> inputs = options.pool_manifests;
    if (have_base) {
        inputs.push_back(options.base_file);
    }
    write_run_manifest(options.output + ".manifest.json", "select", config, inputs,
                       {options.output}, 0);
}

void cmd_eval(const EvalOptions & options) {
    if (options.out_dir.empty()) {
        throw UsageError("--out is required");
    }
    std::vector<CandidatePool> pools =
        load_pool_files(options.pool_manifests, options.gold_file);
    BaseDistribution base;
    const bool have_base = !options.base_file.empty();
    if (have_base) {
        base = load_base_distribution(options.base_file);
    }
    const std::string dataset_id = options.dataset_id.empty()
                                       ? default_dataset_id(options.pool_manifests)
                                       : options.dataset_id;

    EvalResult result =
        evaluate(pools, options.config, dataset_id, have_base ? &base : nullptr);
    if (options.with_oracle) {
        EvalResult oracle = oracle_accuracy(pools, options.config, dataset_id);
        result.table.rows.insert(result.table.rows.end(), oracle.table.rows.begin(),
                                 oracle.table.rows.end());
        std::sort(result.table.rows.begin(), result.table.rows.end(),
                  [](const AccuracyRow & a, const AccuracyRow & b) {
                      return std::tie(a.strategy, a.n) < std::tie(b.strategy, b.n);
                  });
    }

    // plot-ready diagnostic reports ride along with the accuracy table
    const std::string histogram = histogram_csv(score_histogram(
        pools, options.config.metric, 20, have_base ? &base : nullptr));
    std::vector<Metric> bias_metrics = {Metric::avg_logp, Metric::neg_perplexity};
    if (std::find(bias_metrics.begin(), bias_metrics.end(), options.config.metric) ==
        bias_metrics.end()) {
        bias_metrics.push_back(options.config.metric);
    }
    const std::string length_bias = length_bias_csv(
        length_bias_report(pools, bias_metrics, have_base ? &base : nullptr));
    const bool tagged = std::all_of(pools.begin(), pools.end(),
                                    [](const CandidatePool & p) { return p.level.has_value(); });
    std::string difficulty;
    if (tagged) {
        difficulty = difficulty_csv(difficulty_report(pools, options.config.metric,
                                                      have_base ? &base : nullptr));
    }

    const std::string accuracy_path = (fs::path(options.out_dir) / "accuracy.csv").string();
    const std::string subsets_path = (fs::path(options.out_dir) / "subsets.csv").string();
    std::vector<std::string> outputs = {accuracy_path, subsets_path};
    write_file(accuracy_path, accuracy_table_csv(result.table));
    write_file(subsets_path, subsets_csv(result.subsets));
    write_file((fs::path(options.out_dir) / "histogram.csv").string(), histogram);
    outputs.push_back((fs::path(options.out_dir) / "histogram.csv").string());
    write_file((fs::path(options.out_dir) / "length_bias.csv").string(), length_bias);
    outputs.push_back((fs::path(options.out_dir) / "length_bias.csv").string());
    if (tagged) {
        write_file((fs::path(options.out_dir) / "difficulty.csv").string(), difficulty);
        outputs.push_back((fs::path(options.out_dir) / "difficulty.csv").string());
    }

    json config = eval_config_json(options.config);
    if (options.with_oracle) {
        config["strategies"].push_back("oracle");
    }
    config["pools"] = options.pool_manifests;
    config["dataset"] = dataset_id;
    config["gold"] = options.gold_file;
    config["base"] = options.base_file;
    std::vector<std::string> inputs = options.pool_manifests;
    if (!options.gold_file.empty()) {
        inputs.push_back(options.gold_file);
    }
    if (have_base) {
        inputs.push_back(options.base_file);
    }
    write_run_manifest((fs::path(options.out_dir) / "manifest.json").string(), "eval", config,
                       inputs, outputs, options.config.master_seed);
}

void cmd_grid(const GridOptions & options) {
    if (options.out_dir.empty()) {
        throw UsageError("--out is required");
    }
    std::vector<CandidatePool> pools =
        load_pool_files(options.pool_manifests, options.gold_file);
    BaseDistribution base;
    const bool have_base = !options.base_file.empty();
    if (have_base) {
        base = load_base_distribution(options.base_file);
    }
    const std::string dataset_id = options.dataset_id.empty()
                                       ? default_dataset_id(options.pool_manifests)
                                       : options.dataset_id;
    const GridSearchResult result =
        grid_search_p(pools, options.config, dataset_id, have_base ? &base : nullptr);

    const std::string grid_path = (fs::path(options.out_dir) / "grid_accuracy.csv").string();
    const std::string best_path = (fs::path(options.out_dir) / "grid_best.csv").string();
    const std::string subsets_path = (fs::path(options.out_dir) / "subsets.csv").string();
    write_file(grid_path, grid_search_csv(result, dataset_id));
    write_file(best_path, grid_best_csv(result));
    write_file(subsets_path, subsets_csv(result.subsets));

    json config = eval_config_json(options.config);
    config.erase("strategies"); // grid search always runs borda across the grid
    config["pools"] = options.pool_manifests;
    config["dataset"] = dataset_id;
    config["gold"] = options.gold_file;
    config["base"] = options.base_file;
    config["annotation"] = result.annotation;
    std::vector<std::string> inputs = options.pool_manifests;
    if (!options.gold_file.empty()) {
        inputs.push_back(options.gold_file);
    }
    if (have_base) {
        inputs.push_back(options.base_file);
    }
    write_run_manifest((fs::path(options.out_dir) / "manifest.json").string(), "grid-search",
                       config, inputs, {grid_path, best_path, subsets_path},
                       options.config.master_seed);
}

void cmd_sample(const SampleOptions & options) {
    if (options.out_manifest.empty() || options.out_records.empty()) {
        throw UsageError("--out-manifest and --out-records are required");
    }
    std::string prompt = options.prompt;
    std::vector<std::string> inputs;
    if (prompt.empty()) {
        if (options.prompt_file.empty()) {
            throw UsageError("either --prompt or --prompt-file is required");
        }
        std::ifstream in(options.prompt_file);
        if (!in) {
            throw ValidationError("cannot open prompt file: " + options.prompt_file);
        }
        std::stringstream buffer;
        buffer << in.rdbuf();
        prompt = buffer.str();
        inputs.push_back(options.prompt_file);
    }

    const SamplingResult result = sample_candidates(options.sampling, prompt, options.n);

    CandidatePool pool;
    pool.question_id = options.sampling.question_id;
    pool.prompt = prompt;
    pool.gold_answer = options.gold_answer;
    pool.complete = result.complete();
    pool.records = result.records;
    save_pools({pool}, options.out_manifest, options.out_records);

    json config;
    config["endpoint"] = options.sampling.endpoint;
    config["model"] = options.sampling.model;
    config["question-id"] = options.sampling.question_id;
    config["gold-answer"] = options.gold_answer;
    config["n"] = options.n;
    config["temperature"] = options.sampling.temperature;
    config["top-p"] = options.sampling.top_p;
    config["logprobs-k"] = options.sampling.logprobs_k;
    config["vocab-size"] = options.sampling.vocab_size;
    config["max-tokens"] = options.sampling.max_tokens;
    config["max-in-flight"] = options.sampling.max_in_flight;
    config["out-manifest"] = options.out_manifest;
    config["out-records"] = options.out_records;
    config["complete"] = result.complete();
    if (options.sampling.seed) {
        config["seed"] = *options.sampling.seed;
    }
    write_run_manifest(options.out_manifest + ".manifest.json", "sample", config, inputs,
                       {options.out_manifest, options.out_records},
                       options.sampling.seed ? static_cast<uint64_t>(*options.sampling.seed)
                                             : 0);
    if (!result.complete()) {
        std::string detail;
        for (const std::string & failure : result.failures) {
            detail += detail.empty() ? failure : "; " + failure;
        }
        throw TransportError("sampling incomplete, partial pool persisted (" + detail + ")",
                             result.failed_indices);
    }
}

void cmd_usc_prompt(const UscPromptOptions & options) {
    const std::vector<CandidatePool> pools = load_pools(options.pool_manifest);
    const CandidatePool * pool = nullptr;
    if (options.question_id.empty()) {
        pool = &pools.front();
    } else {
        for (const CandidatePool & p : pools) {
            if (p.question_id == options.question_id) {
                pool = &p;
                break;
            }
        }
        if (pool == nullptr) {
            throw UsageError("question '" + options.question_id + "' not found in " +
                             options.pool_manifest);
        }
    }
    std::vector<std::string> responses;
    responses.reserve(pool->records.size());
    for (const ResponseRecord & record : pool->records) {
        responses.push_back(record.text);
    }
    const std::string prompt =
        build_usc_prompt(pool->prompt, responses, options.char_budget);
    if (options.output.empty()) {
        std::fputs(prompt.c_str(), stdout);
        std::fputc('\n', stdout);
    } else {
        write_file(options.output, prompt);
        json config;
        config["pool"] = options.pool_manifest;
        config["question-id"] = pool->question_id;
        config["char-budget"] = options.char_budget;
        config["out"] = options.output;
        write_run_manifest(options.output + ".manifest.json", "usc-prompt", config,
                           {options.pool_manifest}, {options.output}, 0);
    }
}

void cmd_theory(const TheoryOptions & options) {
    if (!(options.eta > 0.0) || options.eta > 1e-3) {
        throw UsageError("eta must lie in (0, 1e-3]");
    }
    const TheoremSummary summary =
        run_theorem_trials(options.trials, options.master_seed, options.eta);
    if (!options.out_csv.empty()) {
        write_file(options.out_csv, theorem_trials_csv(summary));
        json config;
        config["trials"] = options.trials;
        config["eta"] = options.eta;
        config["seed"] = options.master_seed;
        config["out"] = options.out_csv;
        write_run_manifest(options.out_csv + ".manifest.json", "theory-check", config, {},
                           {options.out_csv}, options.master_seed);
    }
    std::printf("theory-check: pass=%d fail=%d indeterminate=%d max_gradient_error=%s\n",
                summary.passed, summary.failed, summary.indeterminate,
                format_double(summary.max_gradient_error).c_str());
    if (summary.failed > 0) {
        throw NumericError("sign criterion violated in " + std::to_string(summary.failed) +
                           " of " + std::to_string(options.trials) + " trials");
    }
}

} // namespace selfcert
