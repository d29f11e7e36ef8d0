#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support.h"
#include "tripleval/errors.h"
#include "tripleval/hashing.h"
#include "tripleval/manifest.h"
#include "tripleval/mock_server.h"
#include "tripleval/pipeline.h"
#include "tripleval/strings.h"

using namespace tripleval;
using tripleval::testing::TempDir;

namespace {

MockFixture fixture() { return MockFixture::load(tripleval::testing::fixture_path("mock_fixture.json")); }

int run_cli(const std::string& args, const std::string& log) {
  const std::string cmd = tripleval::testing::cli_path() + " " + args + " > " + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string write_config(const json& doc, const std::string& dir) {
  const std::string path = dir + "/tripleval.json";
  write_file_atomic(path, doc.dump(2));
  return path;
}

// Fails every request to the endpoint named `down`.
class DownTransport : public Transport {
 public:
  TransportResponse post(const std::string&, const std::string&) override {
    return {0, "", "connection refused", {}};
  }
};

TransportFactory failing(const std::string& down) {
  return [down](const EndpointConfig& e) -> std::unique_ptr<Transport> {
    if (e.name == down) return std::make_unique<DownTransport>();
    return make_http_transport(e);
  };
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config validation") {
    TempDir dir;
    json doc = tripleval::testing::fixture_config_json("http://127.0.0.1:1", dir.path());
    CHECK_NOTHROW(config_from_json(doc, dir.path()));

    json bad = doc;
    bad["surprise"] = 1;
    CHECK_THROWS_AS(config_from_json(bad, dir.path()), ConfigError);
    bad = doc;
    bad["endpoints"].erase("judge");
    CHECK_THROWS_AS(config_from_json(bad, dir.path()), ConfigError);
    bad = doc;
    bad["workers"] = 0;
    CHECK_THROWS_AS(config_from_json(bad, dir.path()), ConfigError);
    bad = doc;
    bad["seed"] = "thirteen";
    CHECK_THROWS_AS(config_from_json(bad, dir.path()), ConfigError);
    CHECK_THROWS_AS(load_config(dir.path() + "/missing.json"), ConfigError);

    ConfigOverrides o;
    o.run_id = "other";
    o.seed = 5;
    Config c = config_from_json(doc, dir.path(), o);
    CHECK(c.run_id == "other");
    CHECK(c.seed == 5);
    CHECK(c.hash() != config_from_json(doc, dir.path()).hash());
  }

  TEST_CASE("manifest DAG and round trip") {
    RunManifest m;
    m.run_id = "r";
    m.stage("ingest").status = StageStatus::kDone;
    m.stage("conditions").status = StageStatus::kDone;
    CHECK_NOTHROW(m.check_dag());
    m.stage("generate").status = StageStatus::kPending;
    m.stage("extract").status = StageStatus::kDone;
    CHECK_THROWS_AS(m.check_dag(), StructuralError);
    CHECK_THROWS_AS(m.stage("bogus"), ConfigError);

    TempDir dir;
    m.save(dir.path() + "/manifest.json");
    RunManifest back = RunManifest::load(dir.path() + "/manifest.json");
    CHECK(json(back) == json(m));
    CHECK(RunManifest::load(dir.path() + "/none.json").stages.empty());
    write_file_atomic(dir.path() + "/broken.json", "{");
    CHECK_THROWS_AS(RunManifest::load(dir.path() + "/broken.json"), DataError);
  }

  TEST_CASE("stale outputs are detected") {
    TempDir dir;
    write_file_atomic(dir.path() + "/a.txt", "one");
    RunManifest m;
    m.stage("ingest").outputs["a.txt"] = sha256_file(dir.path() + "/a.txt");
    CHECK(m.stale_outputs("ingest", dir.path()).empty());
    write_file_atomic(dir.path() + "/a.txt", "two");
    CHECK(m.stale_outputs("ingest", dir.path()) == std::vector<std::string>{"a.txt"});
  }

  TEST_CASE("three canned triples per source give twelve per instance") {
    TempDir dir;
    const std::string corpus = dir.path() + "/corpus.jsonl";
    std::vector<json> rows;
    for (int i = 1; i <= 3; ++i) {
      const std::string k = std::to_string(i);
      rows.push_back({{"id", "q" + k},
                      {"user_query", "Ask " + k + ": [a" + k + " | is | b] [c" + k + " | is | d] [e" + k + " | is | f]"},
                      {"reference", "[g" + k + " | is | h] [i" + k + " | is | j] [k" + k + " | is | l]"},
                      {"context_seed", "[m" + k + " | is | n] [o" + k + " | is | p] [q" + k + " | is | r]"},
                      {"split", "test"}});
    }
    write_jsonl(corpus, rows);
    MockFixture fx;
    fx.generation_fallback = "[x | is | 1] [y | is | 2] [z | is | 3]";
    MockServer server(fx);
    server.start();
    json doc = tripleval::testing::fixture_config_json(server.url(), dir.path());
    doc["corpus"]["path"] = corpus;
    doc["corpus"]["chunk_tokens"] = 128;
    doc["corpus"]["conditions"] = {"relevant"};
    doc["corpus"].erase("subsample_per_condition");
    Pipeline p(config_from_json(doc, dir.path()));
    for (const char* s : {"ingest", "conditions", "generate", "extract"}) p.run_stage(s);

    std::map<std::string, size_t> per_owner;
    for (const auto& t : read_jsonl(p.run_dir() + "/triples.jsonl")) {
      ++per_owner[t.at("instance_id").get<std::string>()];
    }
    size_t checked = 0;
    for (const auto& model : {"base", "tuned"}) {
      for (int i = 1; i <= 3; ++i) {
        const std::string inst = "q" + std::to_string(i) + "/relevant";
        CHECK(per_owner[inst] + per_owner[std::string(model) + "/" + inst] == 12);
        ++checked;
      }
    }
    CHECK(checked == 6);
  }

  TEST_CASE("skip, force and stale upstream") {
    TempDir dir;
    MockServer server(fixture());
    server.start();
    Pipeline p(tripleval::testing::fixture_config(server.url(), dir.path()));
    for (const char* s : {"ingest", "conditions", "generate"}) {
      CHECK(p.run_stage(s) == StageOutcome::kRan);
    }
    CHECK(p.run_stage("conditions") == StageOutcome::kSkipped);
    CHECK_THROWS_AS(p.run_stage("embed"), StructuralError);

    // Editing an upstream artifact blocks the next stage.
    std::ofstream(p.run_dir() + "/generations.jsonl", std::ios::app) << "\n";
    CHECK_THROWS_AS(p.run_stage("extract"), StructuralError);
    CHECK(p.run_stage("generate") == StageOutcome::kRan);
    CHECK(p.run_stage("extract") == StageOutcome::kRan);

    PipelineOptions force;
    force.force = true;
    Pipeline forced(tripleval::testing::fixture_config(server.url(), dir.path()), force);
    CHECK(forced.run_stage("ingest") == StageOutcome::kRan);
  }

  TEST_CASE("rerun after a judge failure skips finished stages") {
    TempDir dir;
    MockServer server(fixture());
    server.start();
    const Config cfg = tripleval::testing::fixture_config(server.url(), dir.path());
    {
      PipelineOptions opts;
      opts.transport_factory = failing("judge");
      Pipeline p(cfg, opts);
      CHECK_THROWS_AS(p.run_all(), Error);
      CHECK(p.manifest().stages.at("judge").status == StageStatus::kFailed);
      CHECK_FALSE(p.manifest().stages.at("judge").error.empty());
      CHECK(p.manifest().done("embed"));
      CHECK_FALSE(p.manifest().done("metrics"));
    }
    const size_t before = server.stats().chat_requests;
    Pipeline p(cfg);
    auto outcomes = p.run_all();
    REQUIRE(outcomes.size() == stage_order().size());
    for (size_t i = 0; i < 5; ++i) CHECK(outcomes[i] == StageOutcome::kSkipped);
    CHECK(outcomes[5] == StageOutcome::kRan);
    CHECK(p.manifest().done("humaneval-score"));
    CHECK_NOTHROW(p.manifest().check_dag());
    // Only the judge talked to the server this time.
    json stats = p.manifest().stages.at("judge").stats;
    CHECK(server.stats().chat_requests - before == stats.at("judge").at("calls").get<size_t>());
  }

  TEST_CASE("echoing the reference gives perfect precision and recall") {
    TempDir dir;
    MockFixture fx = fixture();
    fx.copy_context_claims = 0;
    fx.generations.clear();
    for (const auto& row : read_jsonl(tripleval::testing::fixture_path("corpus.jsonl"))) {
      fx.generations["*"][row.at("user_query").get<std::string>()] =
          row.at("reference").get<std::string>();
    }
    MockServer server(fx);
    server.start();
    Pipeline p(tripleval::testing::fixture_config(server.url(), dir.path()));
    p.run_all();
    size_t cells = 0;
    for (const auto& row : read_jsonl(p.run_dir() + "/cell_metrics.jsonl")) {
      MetricsReport r = row.get<MetricsReport>();
      CHECK(*r.prec_ref == doctest::Approx(1.0));
      CHECK(*r.rec_ref == doctest::Approx(1.0));
      ++cells;
    }
    CHECK(cells == 8);
  }

  TEST_CASE("binary exit codes") {
    TempDir dir;
    MockServer server(fixture());
    server.start();
    const std::string cfg =
        write_config(tripleval::testing::fixture_config_json(server.url(), dir.path()), dir.path());
    const std::string log = dir.path() + "/log.txt";

    CHECK(run_cli("--config " + cfg + " all", log) == 0);
    CHECK(tripleval::testing::read_text(log).find("judge: done") != std::string::npos);
    CHECK(std::filesystem::exists(dir.path() + "/runs/fixture/table2.csv"));
    CHECK(run_cli("--config " + cfg + " judge", log) == 0);
    CHECK(tripleval::testing::read_text(log).find("up to date") != std::string::npos);

    CHECK(run_cli("--config " + cfg + " frobnicate", log) == 2);
    CHECK(run_cli("--config " + dir.path() + "/nope.json all", log) == 2);
    CHECK(run_cli("--help", log) == 0);

    // Fresh root, so no cached responses hide the dead endpoint.
    TempDir cold;
    json down = tripleval::testing::fixture_config_json("http://127.0.0.1:1", cold.path(), "down");
    const std::string down_cfg = cold.path() + "/down.json";
    write_file_atomic(down_cfg, down.dump());
    CHECK(run_cli("--config " + down_cfg + " all", log) == 1);
    RunManifest m = RunManifest::load(cold.path() + "/runs/down/manifest.json");
    CHECK(m.stages.at("generate").status == StageStatus::kFailed);
  }
}
