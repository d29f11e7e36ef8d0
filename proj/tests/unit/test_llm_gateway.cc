#include <cmath>
#include <mutex>
#include <thread>

#include "doctest.h"
#include "support.h"
#include "tripleval/errors.h"
#include "tripleval/llm_gateway.h"
#include "tripleval/mock_server.h"

using namespace tripleval;
using tripleval::testing::TempDir;

namespace {

// Replays scripted responses; the last one repeats.
class ScriptedTransport : public Transport {
 public:
  explicit ScriptedTransport(std::vector<TransportResponse> script) : script_(std::move(script)) {}
  TransportResponse post(const std::string& path, const std::string& body) override {
    std::lock_guard<std::mutex> lock(mu_);
    paths.push_back(path);
    bodies.push_back(body);
    const size_t i = std::min(calls++, script_.size() - 1);
    return script_[i];
  }
  size_t calls = 0;
  std::vector<std::string> paths, bodies;

 private:
  std::vector<TransportResponse> script_;
  std::mutex mu_;
};

std::string chat_body(const std::string& text) {
  return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}},
                            {"finish_reason", "stop"}}}}}
      .dump();
}

EndpointConfig endpoint(const std::string& url = "http://mock") {
  EndpointConfig e;
  e.name = "judge";
  e.url = url;
  e.model = "m";
  e.initial_backoff_ms = 1;
  e.max_retries = 2;
  return e;
}

ChatRequest hello() {
  ChatRequest r;
  r.messages = {{"user", "hello"}};
  return r;
}

}  // namespace

TEST_SUITE("llm_gateway") {
  TEST_CASE("identical request twice is served from cache byte-identically") {
    TempDir dir;
    auto t = std::make_unique<ScriptedTransport>(
        std::vector<TransportResponse>{{200, chat_body("one"), "", {}}, {200, chat_body("two"), "", {}}});
    auto* raw = t.get();
    Gateway gw(endpoint(), std::move(t), std::make_shared<ResponseCache>(dir.path()));
    auto a = gw.chat_complete(hello());
    auto b = gw.chat_complete(hello());
    CHECK(a.text == "one");
    CHECK(b.text == "one");
    CHECK(b.from_cache);
    CHECK(a.raw_hash == b.raw_hash);
    CHECK(raw->calls == 1);
  }

  TEST_CASE("429 once then 200 gives one retry") {
    std::vector<std::chrono::milliseconds> sleeps;
    auto t = std::make_unique<ScriptedTransport>(std::vector<TransportResponse>{
        {429, "", "", 0.0}, {200, chat_body("ok"), "", {}}});
    Gateway gw(endpoint(), std::move(t), nullptr);
    gw.set_sleep_for_testing([&](std::chrono::milliseconds d) { sleeps.push_back(d); });
    CHECK(gw.chat_complete(hello()).text == "ok");
    CHECK(gw.stats().retries == 1);
    CHECK(sleeps.size() == 1);
  }

  TEST_CASE("exhausted retries raise a transport error naming the endpoint") {
    auto t = std::make_unique<ScriptedTransport>(
        std::vector<TransportResponse>{{0, "", "connection refused", {}}});
    Gateway gw(endpoint("http://unreachable:9"), std::move(t), nullptr);
    gw.set_sleep_for_testing([](std::chrono::milliseconds) {});
    try {
      gw.chat_complete(hello());
      FAIL("expected TransportError");
    } catch (const TransportError& e) {
      CHECK(std::string(e.what()).find("judge") != std::string::npos);
      CHECK(e.endpoint().find("unreachable") != std::string::npos);
    }
  }

  TEST_CASE("backoff is exponential, honours Retry-After and is capped") {
    auto cfg = endpoint();
    cfg.initial_backoff_ms = 100;
    cfg.max_backoff_ms = 1000;
    Gateway gw(cfg, nullptr, nullptr);
    CHECK(gw.backoff_for(0, std::nullopt).count() == 100);
    CHECK(gw.backoff_for(2, std::nullopt).count() == 400);
    CHECK(gw.backoff_for(10, std::nullopt).count() == 1000);
    CHECK(gw.backoff_for(0, 0.5).count() == 500);
  }

  TEST_CASE("structured output rejection falls back to free-form") {
    auto t = std::make_unique<ScriptedTransport>(std::vector<TransportResponse>{
        {400, "no response_format", "", {}},
        {400, "no response_format", "", {}},
        {200, chat_body("[]"), "", {}}});
    auto* raw = t.get();
    Gateway gw(endpoint(), std::move(t), nullptr);
    ChatRequest req = hello();
    req.response_schema = json{{"type", "array"}};
    CHECK_THROWS_AS(gw.chat_complete(req), CapabilityError);
    CHECK(gw.chat_complete_structured(req).text == "[]");
    CHECK_FALSE(gw.structured_output_available());
    CHECK(raw->bodies.back().find("response_format") == std::string::npos);
  }

  TEST_CASE("request validation") {
    Gateway gw(endpoint(), nullptr, nullptr);
    CHECK_THROWS_AS(gw.chat_complete(ChatRequest{}), DataError);
    ChatRequest r = hello();
    r.temperature = -1;
    CHECK_THROWS_AS(gw.chat_complete(r), DataError);
    CHECK_THROWS_AS(gw.embed(EmbeddingRequest{}), DataError);
    CHECK_THROWS_AS(gw.embed(EmbeddingRequest{{"a", ""}, ""}), DataError);
  }

  TEST_CASE("embeddings are normalized and dimension-checked") {
    json ok = {{"data", {{{"index", 0}, {"embedding", {3.0, 4.0}}}, {{"index", 1}, {"embedding", {3.0, 4.0}}}}}};
    Gateway gw(endpoint(), std::make_unique<ScriptedTransport>(
                               std::vector<TransportResponse>{{200, ok.dump(), "", {}}}),
               nullptr);
    auto v = gw.embed({{"t", "t"}, ""});
    REQUIRE(v.size() == 2);
    CHECK(v[0] == v[1]);
    CHECK(v[0][0] == doctest::Approx(0.6));
    json bad = {{"data", {{{"index", 0}, {"embedding", {1.0, 0.0}}}, {{"index", 1}, {"embedding", {1.0}}}}}};
    Gateway gw2(endpoint(), std::make_unique<ScriptedTransport>(
                                std::vector<TransportResponse>{{200, bad.dump(), "", {}}}),
                nullptr);
    CHECK_THROWS_AS(gw2.embed({{"a", "b"}, ""}), ProtocolError);
  }

  TEST_CASE("generation omits the context block for na") {
    GenerationTemplate tmpl = GenerationTemplate::load(tripleval::testing::prompts_dir() + "/generation");
    EvaluationInstance inst;
    inst.instance_id = "d/na";
    inst.user_query = "What is x?";
    inst.reference = "r";
    auto msgs = render_generation_prompt(inst, tmpl);
    CHECK(msgs.back().content.find("Retrieved context") == std::string::npos);
    CHECK(msgs.back().content.find("What is x?") != std::string::npos);
    inst.condition = Condition::kRelevant;
    inst.context_chunks = {"chunk one", "chunk two"};
    msgs = render_generation_prompt(inst, tmpl);
    CHECK(msgs.back().content.find("Retrieved context") != std::string::npos);
    CHECK(msgs.back().content.find("[2] chunk two") != std::string::npos);
  }

  TEST_CASE("generate_response is greedy, cached and single-shot") {
    TempDir dir;
    auto t = std::make_unique<ScriptedTransport>(
        std::vector<TransportResponse>{{200, chat_body("answer"), "", {}}});
    auto* raw = t.get();
    Gateway gw(endpoint(), std::move(t), std::make_shared<ResponseCache>(dir.path()));
    GenerationTemplate tmpl = GenerationTemplate::load(tripleval::testing::prompts_dir() + "/generation");
    EvaluationInstance a;
    a.instance_id = "d/na";
    a.user_query = "q";
    a.reference = "r";
    EvaluationInstance b = a;
    CHECK(generate_response(gw, a, tmpl) == "answer");
    CHECK(generate_response(gw, b, tmpl) == "answer");
    CHECK(raw->calls == 1);
    CHECK(json::parse(raw->bodies[0]).at("temperature") == 0.0);
    CHECK_THROWS_AS(generate_response(gw, a, tmpl), StructuralError);
  }

  TEST_CASE("http transport against the mock server") {
    MockFixture f;
    f.generations["*"]["ping"] = "pong";
    f.fail_first_n = 1;
    MockServer server(f);
    server.start();
    auto cfg = endpoint(server.url());
    Gateway gw(cfg, make_http_transport(cfg), nullptr);
    gw.set_sleep_for_testing([](std::chrono::milliseconds) {});
    ChatRequest req;
    req.messages = {{"user", "ping"}};
    CHECK(gw.chat_complete(req).text == "pong");
    CHECK(gw.stats().retries == 1);
    auto v = gw.embed({{"alpha beta", "alpha beta", "gamma"}, ""});
    REQUIRE(v.size() == 3);
    CHECK(v[0] == v[1]);
    double norm = 0;
    for (float x : v[2]) norm += x * x;
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
    server.stop();
  }

  TEST_CASE("in-flight requests never exceed max_concurrency") {
    MockFixture f;
    f.latency_ms = 20;
    MockServer server(f);
    server.start();
    auto cfg = endpoint(server.url());
    cfg.max_concurrency = 3;
    Gateway gw(cfg, make_http_transport(cfg), nullptr);
    std::vector<std::thread> threads;
    for (int i = 0; i < 12; ++i) {
      threads.emplace_back([&gw, i] {
        ChatRequest r;
        r.messages = {{"user", "q" + std::to_string(i)}};
        gw.chat_complete(r);
      });
    }
    for (auto& t : threads) t.join();
    CHECK(server.stats().max_concurrency <= 3);
    CHECK(server.stats().max_concurrency >= 2);
    server.stop();
  }

  TEST_CASE("unreachable server surfaces a transport error") {
    auto cfg = endpoint("http://127.0.0.1:1");
    cfg.max_retries = 0;
    cfg.timeout_s = 2;
    Gateway gw(cfg, make_http_transport(cfg), nullptr);
    CHECK_THROWS_AS(gw.chat_complete(hello()), TransportError);
  }
}
