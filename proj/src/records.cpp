#include "selfcert/records.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "selfcert/errors.hpp"
#include "selfcert/rng.hpp"
#include "selfcert/version.hpp"

namespace selfcert {

namespace {

using nlohmann::json;

namespace fs = std::filesystem;

const std::set<std::string> kRecordKeys = {
    "chosen_logprobs", "distributions", "format", "model", "question_id",
    "sample_index", "seed", "temperature", "text", "top_p"};
const std::set<std::string> kManifestKeys = {
    "complete", "format",      "gold_answer", "level",
    "prompt",   "provenance", "question_id", "records_file"};
const std::set<std::string> kGoldKeys = {"format", "gold_answer", "question_id"};

void check_keys(const json & obj, const std::set<std::string> & allowed,
                std::vector<std::string> & violations) {
    for (const auto & item : obj.items()) {
        if (!allowed.contains(item.key())) {
            violations.push_back("unknown field '" + item.key() + "'");
        }
    }
}

bool require_format(const json & obj, std::vector<std::string> & violations) {
    if (!obj.contains("format") || !obj["format"].is_number_integer() ||
        obj["format"].get<int>() != kFormatVersion) {
        violations.push_back("field 'format' must be the integer " +
                             std::to_string(kFormatVersion));
        return false;
    }
    return true;
}

std::optional<TokenDistribution> parse_distribution(const json & raw, size_t step,
                                                    std::vector<std::string> & violations) {
    const std::string at = "distributions[" + std::to_string(step) + "]";
    if (!raw.is_object()) {
        violations.push_back(at + " must be an object");
        return std::nullopt;
    }
    TokenDistribution dist;
    if (!raw.contains("kind") || !raw["kind"].is_string()) {
        violations.push_back(at + ".kind must be \"full\" or \"top_k\"");
        return std::nullopt;
    }
    const std::string kind = raw["kind"].get<std::string>();
    if (kind == "full") {
        dist.kind = DistKind::full;
    } else if (kind == "top_k") {
        dist.kind = DistKind::top_k;
    } else {
        violations.push_back(at + ".kind must be \"full\" or \"top_k\"");
        return std::nullopt;
    }
    if (!raw.contains("vocab_size") || !raw["vocab_size"].is_number_integer() ||
        raw["vocab_size"].get<int64_t>() <= 0) {
        violations.push_back(at + ".vocab_size must be a positive integer");
        return std::nullopt;
    }
    dist.vocab_size = raw["vocab_size"].get<int32_t>();
    if (!raw.contains("entries") || !raw["entries"].is_array()) {
        violations.push_back(at + ".entries must be an array of [token_id, logprob] pairs");
        return std::nullopt;
    }
    for (const json & e : raw["entries"]) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
            !e[1].is_number()) {
            violations.push_back(at + ".entries must be [token_id, logprob] pairs");
            return std::nullopt;
        }
        dist.entries.push_back({e[0].get<int32_t>(), e[1].get<double>()});
    }
    if (dist.kind == DistKind::top_k) {
        if (!raw.contains("residual_logprob")) {
            violations.push_back(at + ".residual_logprob required for top_k");
            return std::nullopt;
        }
        const json & res = raw["residual_logprob"];
        if (res.is_null()) {
            dist.residual_logprob = -std::numeric_limits<double>::infinity();
        } else if (res.is_number()) {
            dist.residual_logprob = res.get<double>();
        } else {
            violations.push_back(at + ".residual_logprob must be a number or null");
            return std::nullopt;
        }
    } else if (raw.contains("residual_logprob")) {
        violations.push_back(at + ".residual_logprob only valid for top_k");
        return std::nullopt;
    }
    try {
        dist.validate();
    } catch (const ValidationError & err) {
        for (const std::string & v : err.violations()) {
            violations.push_back(at + ": " + v);
        }
        if (err.violations().empty()) {
            violations.push_back(at + ": " + err.what());
        }
        return std::nullopt;
    }
    return dist;
}

json distribution_to_json(const TokenDistribution & dist) {
    json j;
    json entries = json::array();
    for (const TokenEntry & e : dist.entries) {
        entries.push_back(json::array({e.token_id, e.logprob}));
    }
    j["entries"] = std::move(entries);
    j["kind"] = dist.kind == DistKind::full ? "full" : "top_k";
    if (dist.kind == DistKind::top_k) {
        if (std::isinf(dist.residual_logprob)) {
            j["residual_logprob"] = nullptr;
        } else {
            j["residual_logprob"] = dist.residual_logprob;
        }
    }
    j["vocab_size"] = dist.vocab_size;
    return j;
}

std::vector<std::string> read_lines(const std::string & path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open file: " + path);
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

json parse_line(const std::string & line, const std::string & where) {
    json parsed = json::parse(line, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) {
        throw ValidationError(where + ": line is not a JSON object");
    }
    return parsed;
}

} // namespace

void CandidatePool::validate() const {
    std::vector<std::string> violations;
    std::vector<bool> seen(records.size(), false);
    for (const ResponseRecord & record : records) {
        if (record.question_id != question_id) {
            violations.push_back("record sample_index " + std::to_string(record.sample_index) +
                                 " has question_id '" + record.question_id +
                                 "', pool has '" + question_id + "'");
        }
        if (record.sample_index < 0 ||
            static_cast<size_t>(record.sample_index) >= records.size()) {
            violations.push_back("sample_index " + std::to_string(record.sample_index) +
                                 " not contiguous from 0");
        } else if (seen[static_cast<size_t>(record.sample_index)]) {
            violations.push_back("duplicate sample_index " +
                                 std::to_string(record.sample_index));
        } else {
            seen[static_cast<size_t>(record.sample_index)] = true;
        }
    }
    if (!violations.empty()) {
        throw ValidationError("pool '" + question_id + "' invalid: " + violations.front(),
                              violations);
    }
}

bool try_validate_record(const json & raw, ResponseRecord * out,
                         std::vector<std::string> * violations_out) {
    std::vector<std::string> violations;
    ResponseRecord record;
    if (!raw.is_object()) {
        violations.push_back("record must be a JSON object");
    } else {
        check_keys(raw, kRecordKeys, violations);
        require_format(raw, violations);
        if (raw.contains("question_id") && raw["question_id"].is_string() &&
            !raw["question_id"].get<std::string>().empty()) {
            record.question_id = raw["question_id"].get<std::string>();
        } else {
            violations.push_back("field 'question_id' must be a non-empty string");
        }
        if (raw.contains("sample_index") && raw["sample_index"].is_number_integer() &&
            raw["sample_index"].get<int64_t>() >= 0) {
            record.sample_index = raw["sample_index"].get<int>();
        } else {
            violations.push_back("field 'sample_index' must be a non-negative integer");
        }
        if (raw.contains("text") && raw["text"].is_string()) {
            record.text = raw["text"].get<std::string>();
        } else {
            violations.push_back("field 'text' must be a string");
        }
        if (raw.contains("chosen_logprobs") && raw["chosen_logprobs"].is_array() &&
            !raw["chosen_logprobs"].empty()) {
            for (const json & v : raw["chosen_logprobs"]) {
                if (!v.is_number()) {
                    violations.push_back("field 'chosen_logprobs' must contain numbers");
                    break;
                }
                record.chosen_trace.logprobs.push_back(v.get<double>());
            }
            try {
                record.chosen_trace.validate();
            } catch (const ValidationError & err) {
                violations.push_back(std::string("chosen_logprobs: ") + err.what());
            }
        } else {
            violations.push_back("field 'chosen_logprobs' must be a non-empty array");
        }
        if (raw.contains("model") && raw["model"].is_string()) {
            record.meta.model = raw["model"].get<std::string>();
        } else {
            violations.push_back("field 'model' must be a string");
        }
        if (raw.contains("temperature") && raw["temperature"].is_number()) {
            record.meta.temperature = raw["temperature"].get<double>();
        } else {
            violations.push_back("field 'temperature' must be a number");
        }
        if (raw.contains("top_p") && raw["top_p"].is_number()) {
            record.meta.top_p = raw["top_p"].get<double>();
        } else {
            violations.push_back("field 'top_p' must be a number");
        }
        if (raw.contains("seed")) {
            if (raw["seed"].is_number_integer()) {
                record.meta.seed = raw["seed"].get<int64_t>();
            } else {
                violations.push_back("field 'seed' must be an integer");
            }
        }
        if (raw.contains("distributions")) {
            if (!raw["distributions"].is_array()) {
                violations.push_back("field 'distributions' must be an array");
            } else {
                std::vector<TokenDistribution> dists;
                bool ok = true;
                for (size_t i = 0; i < raw["distributions"].size(); ++i) {
                    auto dist = parse_distribution(raw["distributions"][i], i, violations);
                    if (!dist) {
                        ok = false;
                        continue;
                    }
                    dists.push_back(std::move(*dist));
                }
                if (ok) {
                    if (dists.size() != record.chosen_trace.logprobs.size()) {
                        violations.push_back(
                            "distributions length " + std::to_string(dists.size()) +
                            " does not match chosen_logprobs length " +
                            std::to_string(record.chosen_trace.logprobs.size()));
                    } else {
                        // a full-kind step must list the chosen token's logprob
                        for (size_t i = 0; i < dists.size(); ++i) {
                            if (dists[i].kind != DistKind::full) {
                                continue;
                            }
                            const double chosen = record.chosen_trace.logprobs[i];
                            const bool present = std::any_of(
                                dists[i].entries.begin(), dists[i].entries.end(),
                                [&](const TokenEntry & e) {
                                    return std::abs(e.logprob - chosen) <= 1e-6;
                                });
                            if (!present) {
                                violations.push_back(
                                    "distributions[" + std::to_string(i) +
                                    "]: chosen token logprob not among entries");
                            }
                        }
                        record.distributions = std::move(dists);
                    }
                }
            }
        }
    }
    if (!violations.empty()) {
        if (violations_out != nullptr) {
            *violations_out = std::move(violations);
        }
        return false;
    }
    if (out != nullptr) {
        *out = std::move(record);
    }
    return true;
}

ResponseRecord validate_record(const json & raw) {
    ResponseRecord record;
    std::vector<std::string> violations;
    if (!try_validate_record(raw, &record, &violations)) {
        throw ValidationError("invalid record: " + violations.front(), violations);
    }
    return record;
}

json record_to_json(const ResponseRecord & record) {
    json j;
    j["chosen_logprobs"] = record.chosen_trace.logprobs;
    if (record.distributions) {
        json dists = json::array();
        for (const TokenDistribution & d : *record.distributions) {
            dists.push_back(distribution_to_json(d));
        }
        j["distributions"] = std::move(dists);
    }
    j["format"] = kFormatVersion;
    j["model"] = record.meta.model;
    j["question_id"] = record.question_id;
    j["sample_index"] = record.sample_index;
    if (record.meta.seed) {
        j["seed"] = *record.meta.seed;
    }
    j["temperature"] = record.meta.temperature;
    j["text"] = record.text;
    j["top_p"] = record.meta.top_p;
    return j;
}

std::string serialize_record(const ResponseRecord & record) {
    return record_to_json(record).dump();
}

std::vector<CandidatePool> load_pools(const std::string & manifest_path) {
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<CandidatePool> pools;
    std::map<std::string, std::vector<ResponseRecord>> records_by_question;
    std::set<std::string> loaded_files;
    std::vector<std::string> manifest_lines = read_lines(manifest_path);
    size_t line_no = 0;
    for (const std::string & line : manifest_lines) {
        ++line_no;
        const std::string where = manifest_path + ":" + std::to_string(line_no);
        const json entry = parse_line(line, where);
        std::vector<std::string> violations;
        check_keys(entry, kManifestKeys, violations);
        require_format(entry, violations);
        for (const char * key : {"question_id", "prompt", "gold_answer", "records_file"}) {
            if (!entry.contains(key) || !entry[key].is_string()) {
                violations.push_back(std::string("field '") + key + "' must be a string");
            }
        }
        if (!violations.empty()) {
            throw ValidationError(where + ": " + violations.front(), violations);
        }
        CandidatePool pool;
        pool.question_id = entry["question_id"].get<std::string>();
        pool.prompt = entry["prompt"].get<std::string>();
        pool.gold_answer = entry["gold_answer"].get<std::string>();
        if (entry.contains("level")) {
            if (!entry["level"].is_number_integer()) {
                throw ValidationError(where + ": field 'level' must be an integer");
            }
            pool.level = entry["level"].get<int>();
        }
        if (entry.contains("complete")) {
            if (!entry["complete"].is_boolean()) {
                throw ValidationError(where + ": field 'complete' must be a boolean");
            }
            pool.complete = entry["complete"].get<bool>();
        }
        if (entry.contains("provenance")) {
            if (!entry["provenance"].is_string()) {
                throw ValidationError(where + ": field 'provenance' must be a string");
            }
            pool.provenance = entry["provenance"].get<std::string>();
        }
        const std::string records_file = entry["records_file"].get<std::string>();
        const std::string records_path = (base / records_file).string();
        if (!loaded_files.contains(records_path)) {
            loaded_files.insert(records_path);
            size_t rec_no = 0;
            for (const std::string & rec_line : read_lines(records_path)) {
                ++rec_no;
                const std::string rec_where = records_path + ":" + std::to_string(rec_no);
                const json raw = parse_line(rec_line, rec_where);
                std::vector<std::string> rec_violations;
                ResponseRecord record;
                if (!try_validate_record(raw, &record, &rec_violations)) {
                    throw ValidationError(rec_where + ": " + rec_violations.front(),
                                          rec_violations);
                }
                records_by_question[record.question_id].push_back(std::move(record));
            }
        }
        auto it = records_by_question.find(pool.question_id);
        if (it == records_by_question.end()) {
            throw ValidationError(where + ": no records found for question '" +
                                  pool.question_id + "' in " + records_path);
        }
        pool.records = it->second;
        std::sort(pool.records.begin(), pool.records.end(),
                  [](const ResponseRecord & a, const ResponseRecord & b) {
                      return a.sample_index < b.sample_index;
                  });
        pool.validate();
        pools.push_back(std::move(pool));
    }
    return pools;
}

void save_pools(const std::vector<CandidatePool> & pools, const std::string & manifest_path,
                const std::string & records_path) {
    const fs::path manifest_dir = fs::path(manifest_path).parent_path();
    std::string records_rel = records_path;
    if (!manifest_dir.empty()) {
        records_rel = fs::relative(records_path, manifest_dir).string();
    }
    std::ofstream manifest(manifest_path);
    std::ofstream records(records_path);
    if (!manifest || !records) {
        throw ValidationError("cannot open output files for writing");
    }
    for (const CandidatePool & pool : pools) {
        json entry;
        if (pool.complete) {
            entry["complete"] = *pool.complete;
        }
        entry["format"] = kFormatVersion;
        entry["gold_answer"] = pool.gold_answer;
        if (pool.level) {
            entry["level"] = *pool.level;
        }
        entry["prompt"] = pool.prompt;
        if (!pool.provenance.empty()) {
            entry["provenance"] = pool.provenance;
        }
        entry["question_id"] = pool.question_id;
        entry["records_file"] = records_rel;
        manifest << entry.dump() << "\n";
        for (const ResponseRecord & record : pool.records) {
            records << serialize_record(record) << "\n";
        }
    }
}

std::map<std::string, std::string> load_gold_answers(const std::string & path) {
    std::map<std::string, std::string> gold;
    size_t line_no = 0;
    for (const std::string & line : read_lines(path)) {
        ++line_no;
        const std::string where = path + ":" + std::to_string(line_no);
        const json entry = parse_line(line, where);
        std::vector<std::string> violations;
        check_keys(entry, kGoldKeys, violations);
        require_format(entry, violations);
        for (const char * key : {"question_id", "gold_answer"}) {
            if (!entry.contains(key) || !entry[key].is_string()) {
                violations.push_back(std::string("field '") + key + "' must be a string");
            }
        }
        if (!violations.empty()) {
            throw ValidationError(where + ": " + violations.front(), violations);
        }
        gold[entry["question_id"].get<std::string>()] = entry["gold_answer"].get<std::string>();
    }
    return gold;
}

std::vector<int> sample_indices(int pool_size, int n, std::mt19937_64 & rng) {
    if (n < 0 || n > pool_size) {
        throw UsageError("cannot draw " + std::to_string(n) + " items from a pool of " +
                         std::to_string(pool_size));
    }
    std::vector<int> all(static_cast<size_t>(pool_size));
    std::iota(all.begin(), all.end(), 0);
    // partial Fisher-Yates with pinned draws
    for (int i = 0; i < n; ++i) {
        const auto j = static_cast<size_t>(i) +
                       uniform_below(rng, static_cast<uint64_t>(pool_size - i));
        std::swap(all[static_cast<size_t>(i)], all[j]);
    }
    std::vector<int> picked(all.begin(), all.begin() + n);
    std::sort(picked.begin(), picked.end());
    return picked;
}

CandidatePool subsample_pool(const CandidatePool & pool, int n, uint64_t seed) {
    if (n > pool.size() || n < 1) {
        throw UsageError("subset size " + std::to_string(n) +
                         " out of range for pool of " + std::to_string(pool.size()));
    }
    std::mt19937_64 rng(seed);
    const std::vector<int> picked = sample_indices(pool.size(), n, rng);
    CandidatePool subset;
    subset.question_id = pool.question_id;
    subset.prompt = pool.prompt;
    subset.gold_answer = pool.gold_answer;
    subset.level = pool.level;
    std::ostringstream provenance;
    provenance << "subsample n=" << n << " seed=" << seed << " source_indices=[";
    for (size_t i = 0; i < picked.size(); ++i) {
        provenance << (i > 0 ? "," : "") << pool.records[static_cast<size_t>(picked[i])].sample_index;
    }
    provenance << "]";
    subset.provenance = provenance.str();
    for (size_t i = 0; i < picked.size(); ++i) {
        ResponseRecord record = pool.records[static_cast<size_t>(picked[i])];
        record.sample_index = static_cast<int>(i);
        subset.records.push_back(std::move(record));
    }
    return subset;
}

uint64_t subset_hash(const std::vector<int> & indices) {
    uint64_t h = 1469598103934665603ull;
    for (int idx : indices) {
        h = fnv1a64_u64(static_cast<uint64_t>(idx), h);
    }
    return h;
}

} // namespace selfcert
