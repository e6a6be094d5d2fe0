#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mock_server.hpp"
#include "selfcert/commands.hpp"
#include "selfcert/errors.hpp"
#include "selfcert/records.hpp"
#include "selfcert/sampling.hpp"

using namespace selfcert;

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

SamplingConfig mock_config(const std::string & endpoint) {
    SamplingConfig config;
    config.endpoint = endpoint;
    config.model = "mock-model";
    config.question_id = "mock-q";
    config.logprobs_k = 2;
    config.vocab_size = 32;
    config.seed = 7000;
    config.backoff_ms = 1;
    return config;
}

} // namespace

TEST_CASE("n=0 issues no requests") {
    SamplingConfig config = mock_config("http://127.0.0.1:1");
    const SamplingResult result = sample_candidates(config, "prompt", 0);
    CHECK(result.records.empty());
    CHECK(result.complete());
}

TEST_CASE("sampled records validate and carry top-k residual mass") {
    mock::CompletionsServer server(mock::canned_completions(), 7000);
    const SamplingResult result =
        sample_candidates(mock_config(server.endpoint()), "How much?", 3);
    REQUIRE(result.complete());
    REQUIRE(result.records.size() == 3);
    for (const ResponseRecord & record : result.records) {
        // every emitted record passes the schema validator by construction
        validate_record(record_to_json(record));
        REQUIRE(record.distributions.has_value());
        for (const TokenDistribution & dist : *record.distributions) {
            CHECK(dist.kind == DistKind::top_k);
            CHECK(dist.vocab_size == 32);
            CHECK(dist.entries.size() >= 2);
        }
        CHECK(record.meta.seed.has_value());
    }
    CHECK(result.records[0].meta.seed == 7000);
    CHECK(result.records[2].meta.seed == 7002);
    CHECK(server.hits() == 3);
}

TEST_CASE("mock replay reproduces the golden pool byte-identically") {
    mock::CompletionsServer server(mock::canned_completions(), 7000);
    const fs::path dir = fs::temp_directory_path() / "selfcert_sampling_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    SampleOptions options;
    options.sampling = mock_config(server.endpoint());
    options.prompt = "How much do 16 glasses cost?";
    options.gold_answer = "64";
    options.n = 3;
    options.out_manifest = (dir / "sampled.manifest.jsonl").string();
    options.out_records = (dir / "sampled.records.jsonl").string();
    cmd_sample(options);

    CHECK(read_file(options.out_manifest) ==
          read_file(std::string(FIXTURES_DIR) + "/golden/sampled.manifest.jsonl"));
    CHECK(read_file(options.out_records) ==
          read_file(std::string(FIXTURES_DIR) + "/golden/sampled.records.jsonl"));

    // the persisted pool re-validates cleanly on load
    const std::vector<CandidatePool> pools = load_pools(options.out_manifest);
    REQUIRE(pools.size() == 1);
    CHECK(pools.front().complete == true);
    CHECK(pools.front().size() == 3);
}

TEST_CASE("retries recover from transient server errors") {
    mock::CompletionsServer server(mock::canned_completions(), 7000);
    server.fail_first(2); // first two hits return 503, retries succeed
    SamplingConfig config = mock_config(server.endpoint());
    config.max_in_flight = 1;
    const SamplingResult result = sample_candidates(config, "prompt", 3);
    CHECK(result.complete());
    CHECK(server.hits() == 5);
}

TEST_CASE("exhausted retries surface failed indices and persist a partial pool") {
    mock::CompletionsServer server(mock::canned_completions(), 7000);
    server.fail_first(1000); // all requests fail
    SamplingConfig config = mock_config(server.endpoint());
    config.max_in_flight = 1;
    config.max_attempts = 2;
    const SamplingResult result = sample_candidates(config, "prompt", 2);
    CHECK(!result.complete());
    CHECK(result.failed_indices == std::vector<int>{0, 1});

    const fs::path dir = fs::temp_directory_path() / "selfcert_sampling_partial";
    fs::remove_all(dir);
    fs::create_directories(dir);
    SampleOptions options;
    options.sampling = config;
    options.prompt = "p";
    options.n = 2;
    options.out_manifest = (dir / "m.jsonl").string();
    options.out_records = (dir / "r.jsonl").string();
    CHECK_THROWS_AS(cmd_sample(options), TransportError);
    // the partial pool was still written, flagged incomplete
    const std::string manifest = read_file(options.out_manifest);
    CHECK(manifest.find("\"complete\":false") != std::string::npos);
}

TEST_CASE("unreachable endpoints fail with transport errors, not exceptions") {
    SamplingConfig config = mock_config("http://127.0.0.1:9");
    config.max_attempts = 1;
    const SamplingResult result = sample_candidates(config, "prompt", 1);
    CHECK(!result.complete());
    REQUIRE(result.failures.size() == 1);
}

TEST_CASE("config validation") {
    SamplingConfig config;
    CHECK_THROWS_AS(config.validate(), UsageError);
    config.endpoint = "http://x";
    CHECK_THROWS_AS(config.validate(), UsageError);
    config.model = "m";
    CHECK_THROWS_AS(config.validate(), UsageError); // vocab_size missing
    config.vocab_size = 8;
    config.validate();
    CHECK_THROWS_AS(sample_candidates(config, "p", -1), UsageError);
}
