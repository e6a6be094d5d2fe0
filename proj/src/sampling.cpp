#include "selfcert/sampling.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "selfcert/errors.hpp"

namespace selfcert {

namespace {

using nlohmann::json;

struct FetchSlot {
    std::optional<std::string> body;
    std::string error;
};

json build_request(const SamplingConfig & config, const std::string & prompt, int index) {
    json req;
    req["model"] = config.model;
    req["prompt"] = prompt;
    req["max_tokens"] = config.max_tokens;
    req["n"] = 1;
    req["temperature"] = config.temperature;
    req["top_p"] = config.top_p;
    req["logprobs"] = config.logprobs_k;
    if (config.seed) {
        req["seed"] = *config.seed + index;
    }
    return req;
}

// Maps token strings onto opaque integer ids, first-seen order. Conversion
// runs single-threaded in sample-index order, so the mapping is stable for
// a given set of responses.
struct TokenInterner {
    std::map<std::string, int32_t> ids;
    int32_t vocab_size;

    explicit TokenInterner(int32_t v) : vocab_size(v) {}

    int32_t intern(const std::string & token) {
        auto it = ids.find(token);
        if (it != ids.end()) {
            return it->second;
        }
        const auto id = static_cast<int32_t>(ids.size());
        if (id >= vocab_size) {
            throw ValidationError("more distinct tokens than vocab_size " +
                                  std::to_string(vocab_size));
        }
        ids.emplace(token, id);
        return id;
    }
};

ResponseRecord completion_to_record(const json & body, const SamplingConfig & config,
                                    int index, TokenInterner & interner) {
    const std::string where = "completion " + std::to_string(index);
    if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() ||
        body["choices"].empty()) {
        throw ValidationError(where + ": no choices in response");
    }
    const json & choice = body["choices"][0];
    if (!choice.contains("text") || !choice["text"].is_string()) {
        throw ValidationError(where + ": choice has no text");
    }
    if (!choice.contains("logprobs") || !choice["logprobs"].is_object()) {
        throw ValidationError(where + ": logprobs missing; enable logprobs on the endpoint");
    }
    const json & lp = choice["logprobs"];
    for (const char * key : {"tokens", "token_logprobs", "top_logprobs"}) {
        if (!lp.contains(key) || !lp[key].is_array()) {
            throw ValidationError(where + ": logprobs." + key + " missing");
        }
    }
    const json & tokens = lp["tokens"];
    const json & token_logprobs = lp["token_logprobs"];
    const json & top_logprobs = lp["top_logprobs"];
    if (tokens.size() != token_logprobs.size() || tokens.size() != top_logprobs.size() ||
        tokens.empty()) {
        throw ValidationError(where + ": logprob arrays empty or of unequal length");
    }

    ResponseRecord record;
    record.question_id = config.question_id;
    record.sample_index = index;
    record.text = choice["text"].get<std::string>();
    record.meta.model = config.model;
    record.meta.temperature = config.temperature;
    record.meta.top_p = config.top_p;
    if (config.seed) {
        record.meta.seed = *config.seed + index;
    }

    std::vector<TokenDistribution> dists;
    for (size_t i = 0; i < tokens.size(); ++i) {
        const double chosen_lp = token_logprobs[i].get<double>();
        record.chosen_trace.logprobs.push_back(chosen_lp);

        TokenDistribution dist;
        dist.kind = DistKind::top_k;
        dist.vocab_size = config.vocab_size;
        long double listed_mass = 0.0L;
        bool chosen_listed = false;
        const std::string chosen_token = tokens[i].get<std::string>();
        for (const auto & item : top_logprobs[i].items()) {
            const double entry_lp = item.value().get<double>();
            dist.entries.push_back({interner.intern(item.key()), entry_lp});
            listed_mass += std::exp(static_cast<long double>(entry_lp));
            if (item.key() == chosen_token) {
                chosen_listed = true;
            }
        }
        if (!chosen_listed) {
            dist.entries.push_back({interner.intern(chosen_token), chosen_lp});
            listed_mass += std::exp(static_cast<long double>(chosen_lp));
        }
        const double residual = 1.0 - static_cast<double>(listed_mass);
        if (residual < -1e-6) {
            throw ValidationError(where + ": listed logprobs at step " + std::to_string(i) +
                                  " exceed total probability mass");
        }
        dist.residual_logprob = residual > 0.0
                                    ? std::log(residual)
                                    : -std::numeric_limits<double>::infinity();
        dists.push_back(std::move(dist));
    }
    record.distributions = std::move(dists);
    // round through the schema validator so every emitted record is known-good
    return validate_record(record_to_json(record));
}

} // namespace

void SamplingConfig::validate() const {
    if (endpoint.empty()) {
        throw UsageError("sampling endpoint is required");
    }
    if (model.empty()) {
        throw UsageError("model name is required");
    }
    if (vocab_size <= 0) {
        throw UsageError("vocab_size must be positive (it is recorded on every distribution)");
    }
    if (logprobs_k < 1) {
        throw UsageError("logprobs_k must be at least 1");
    }
    if (max_in_flight < 1 || max_attempts < 1) {
        throw UsageError("max_in_flight and max_attempts must be at least 1");
    }
}

SamplingResult sample_candidates(const SamplingConfig & config, const std::string & prompt,
                                 int n) {
    if (n < 0) {
        throw UsageError("sample count must be non-negative");
    }
    SamplingResult result;
    if (n == 0) {
        return result;
    }
    config.validate();

    std::vector<FetchSlot> slots(static_cast<size_t>(n));
    std::atomic<int> next{0};
    const int num_workers = std::min(config.max_in_flight, n);

    auto worker = [&]() {
        httplib::Client client(config.endpoint);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(300, 0);
        httplib::Headers headers;
        if (!config.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + config.api_key);
        }
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) {
                break;
            }
            const std::string body = build_request(config, prompt, i).dump();
            std::string last_error = "no attempt made";
            for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
                if (attempt > 0) {
                    std::this_thread::sleep_for(
                        std::chrono::milliseconds(config.backoff_ms << (attempt - 1)));
                }
                auto res = client.Post(config.completions_path, headers, body,
                                       "application/json");
                if (!res) {
                    last_error = "transport error: " + httplib::to_string(res.error());
                    continue;
                }
                if (res->status != 200) {
                    last_error = "http status " + std::to_string(res->status);
                    continue;
                }
                slots[static_cast<size_t>(i)].body = res->body;
                break;
            }
            if (!slots[static_cast<size_t>(i)].body) {
                slots[static_cast<size_t>(i)].error = last_error;
            }
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(num_workers));
    for (int t = 0; t < num_workers; ++t) {
        threads.emplace_back(worker);
    }
    for (std::thread & t : threads) {
        t.join();
    }

    // convert sequentially in sample order so token-id interning is stable
    TokenInterner interner(config.vocab_size);
    for (int i = 0; i < n; ++i) {
        FetchSlot & slot = slots[static_cast<size_t>(i)];
        if (!slot.body) {
            result.failed_indices.push_back(i);
            result.failures.push_back("request " + std::to_string(i) + ": " + slot.error);
            continue;
        }
        const json body = json::parse(*slot.body, nullptr, false);
        if (body.is_discarded()) {
            throw ValidationError("completion " + std::to_string(i) +
                                  ": response is not valid JSON");
        }
        result.records.push_back(completion_to_record(body, config, i, interner));
    }
    // reindex around failures so pools stay contiguous
    for (size_t i = 0; i < result.records.size(); ++i) {
        result.records[i].sample_index = static_cast<int>(i);
    }
    return result;
}

} // namespace selfcert
