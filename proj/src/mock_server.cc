#include "tripleval/mock_server.h"

#include <atomic>
#include <regex>
#include <thread>

#include "httplib.h"
#include "tripleval/errors.h"
#include "tripleval/hashing.h"
#include "tripleval/judge.h"
#include "tripleval/strings.h"
#include "tripleval/textmetrics.h"

namespace tripleval {
namespace {

constexpr std::string_view kTextOpen = "TEXT:\n<<<";
constexpr std::string_view kTextClose = ">>>";

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string all_message_text(const json& request) {
  std::string out;
  for (const auto& m : request.at("messages")) {
    if (m.contains("content") && m.at("content").is_string()) {
      out += m.at("content").get<std::string>();
      out += '\n';
    }
  }
  return out;
}

std::string first_user_text(const json& request) {
  for (const auto& m : request.at("messages")) {
    if (m.value("role", "") == "user") return m.value("content", std::string());
  }
  return std::string();
}

std::string extraction_answer(const MockFixture& f, const std::string& prompt) {
  const size_t open = prompt.find(kTextOpen);
  size_t begin = open + kTextOpen.size();
  const size_t close = prompt.find(kTextClose, begin);
  std::string text(trim(std::string_view(prompt).substr(
      begin, close == std::string::npos ? std::string::npos : close - begin)));
  auto exact = f.extraction_exact.find(text);
  if (exact != f.extraction_exact.end()) return exact->second;
  json arr = json::array();
  if (f.extraction_brackets) {
    for (const auto& c : bracket_claims(text)) {
      arr.push_back({{"subject", c[0]}, {"predicate", c[1]}, {"object", c[2]}});
    }
  }
  return arr.dump();
}

std::string judge_answer(const MockFixture& f, const std::string& prompt) {
  json arr = json::array();
  for (const auto& item : parse_grounding_prompt(prompt)) {
    json evidence = json::array();
    if (f.judge_mode == "exact") {
      for (size_t i = 0; i < item.candidates.size(); ++i) {
        if (item.candidates[i] == item.generated) evidence.push_back(i);
      }
    }
    arr.push_back({{"index", item.index}, {"evidence", evidence}});
  }
  return arr.dump();
}

std::string generation_answer(const MockFixture& f, const json& request) {
  const std::string model = request.value("model", std::string());
  const std::string prompt = all_message_text(request);
  std::string best_query;
  const std::string* best = nullptr;
  for (const std::string& key : {model, std::string("*")}) {
    auto by_model = f.generations.find(key);
    if (by_model == f.generations.end()) continue;
    for (const auto& [query, response] : by_model->second) {
      if (query.size() > best_query.size() && prompt.find(query) != std::string::npos) {
        best_query = query;
        best = &response;
      }
    }
    if (best) break;
  }
  std::string out = best ? *best : f.generation_fallback;
  if (f.copy_context_claims > 0) {
    std::string rest = prompt;
    if (!best_query.empty()) {
      for (size_t at; (at = rest.find(best_query)) != std::string::npos;) {
        rest.erase(at, best_query.size());
      }
    }
    size_t copied = 0;
    for (const auto& c : bracket_claims(rest)) {
      if (copied++ == f.copy_context_claims) break;
      out += " [" + c[0] + " | " + c[1] + " | " + c[2] + "]";
    }
  }
  return out;
}

json chat_body(const std::string& model, const std::string& content) {
  return json{{"id", "mock-" + sha256_hex(content).substr(0, 12)},
              {"object", "chat.completion"},
              {"model", model},
              {"choices",
               json::array({{{"index", 0},
                             {"message", {{"role", "assistant"}, {"content", content}}},
                             {"finish_reason", "stop"}}})}};
}

}  // namespace

MockFixture MockFixture::from_json(const json& j) {
  MockFixture f;
  try {
    f.extraction_exact = j.value("extraction_exact", f.extraction_exact);
    f.extraction_brackets = j.value("extraction_brackets", f.extraction_brackets);
    f.generations = j.value("generations", f.generations);
    f.generation_fallback = j.value("generation_fallback", f.generation_fallback);
    f.copy_context_claims = j.value("copy_context_claims", f.copy_context_claims);
    f.judge_mode = j.value("judge_mode", f.judge_mode);
    f.embedding_mode = j.value("embedding_mode", f.embedding_mode);
    f.embedding_dim = j.value("embedding_dim", f.embedding_dim);
    f.fail_first_n = j.value("fail_first_n", f.fail_first_n);
    f.reject_response_schema = j.value("reject_response_schema", f.reject_response_schema);
    f.latency_ms = j.value("latency_ms", f.latency_ms);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("mock fixture: ") + e.what());
  }
  if (f.judge_mode != "exact" && f.judge_mode != "none") {
    throw ConfigError("mock fixture: judge_mode must be exact or none");
  }
  if (f.embedding_mode != "bow" && f.embedding_mode != "hash") {
    throw ConfigError("mock fixture: embedding_mode must be bow or hash");
  }
  if (f.embedding_dim == 0) throw ConfigError("mock fixture: embedding_dim must be positive");
  return f;
}

MockFixture MockFixture::load(const std::string& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw ConfigError(path + ": mock fixture is not valid JSON");
  return from_json(j);
}

std::vector<std::array<std::string, 3>> bracket_claims(std::string_view text) {
  static const std::regex kClaim(R"(\[([^\[\]|]+)\|([^\[\]|]+)\|([^\[\]|]+)\])");
  std::vector<std::array<std::string, 3>> out;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kClaim); it != std::sregex_iterator();
       ++it) {
    std::array<std::string, 3> c = {collapse_whitespace((*it)[1].str()),
                                    collapse_whitespace((*it)[2].str()),
                                    collapse_whitespace((*it)[3].str())};
    if (!c[0].empty() && !c[1].empty() && !c[2].empty()) out.push_back(std::move(c));
  }
  return out;
}

std::string mock_completion(const MockFixture& fixture, const json& request) {
  const std::string prompt = first_user_text(request);
  if (prompt.find("=== MICRO-BATCH ===") != std::string::npos) {
    return judge_answer(fixture, prompt);
  }
  if (prompt.find(kTextOpen) != std::string::npos) return extraction_answer(fixture, prompt);
  return generation_answer(fixture, request);
}

std::vector<float> mock_embedding(const MockFixture& fixture, const std::string& text) {
  std::vector<float> v(fixture.embedding_dim, 0.0f);
  if (fixture.embedding_mode == "hash") {
    DeterministicRng rng(stable_seed({"mock-embedding", text}));
    for (auto& x : v) x = static_cast<float>(rng.uniform_below(2001)) / 1000.0f - 1.0f;
  } else {
    for (const auto& tok : rouge_tokens(text)) v[fnv1a(tok) % v.size()] += 1.0f;
  }
  bool zero = true;
  for (float x : v) zero = zero && x == 0.0f;
  if (zero) v[0] = 1.0f;
  return v;
}

struct MockServer::Impl {
  MockFixture fixture;
  httplib::Server server;
  std::thread thread;
  std::string host;
  int port = 0;

  std::atomic<size_t> requests{0}, chat{0}, embeddings{0}, injected{0};
  std::atomic<int> in_flight{0}, max_in_flight{0};

  struct Tracker {
    Impl& impl;
    explicit Tracker(Impl& i) : impl(i) {
      const int now = ++impl.in_flight;
      int seen = impl.max_in_flight.load();
      while (now > seen && !impl.max_in_flight.compare_exchange_weak(seen, now)) {
      }
    }
    ~Tracker() { --impl.in_flight; }
  };

  // Returns false after writing an injected failure or a malformed-body error.
  bool admit(const httplib::Request& req, httplib::Response& res, json& body) {
    const size_t n = requests++;
    if (static_cast<int64_t>(n) < fixture.fail_first_n) {
      ++injected;
      res.status = 429;
      res.set_header("Retry-After", "0");
      res.set_content(R"j({"error":{"message":"rate limited (injected)"}})j", "application/json");
      return false;
    }
    body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      res.status = 400;
      res.set_content(R"({"error":{"message":"body is not a JSON object"}})", "application/json");
      return false;
    }
    return true;
  }

  void install() {
    server.new_task_queue = [] { return new httplib::ThreadPool(16); };
    server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                httplib::Response& res) {
      Tracker t(*this);
      ++chat;
      json body;
      if (!admit(req, res, body)) return;
      if (fixture.latency_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(fixture.latency_ms));
      }
      if (fixture.reject_response_schema && body.contains("response_format")) {
        res.status = 400;
        res.set_content(R"({"error":{"message":"response_format not supported"}})",
                        "application/json");
        return;
      }
      try {
        const std::string content = mock_completion(fixture, body);
        res.set_content(chat_body(body.value("model", std::string("mock")), content).dump(),
                        "application/json");
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(json{{"error", {{"message", e.what()}}}}.dump(), "application/json");
      }
    });
    server.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      Tracker t(*this);
      ++embeddings;
      json body;
      if (!admit(req, res, body)) return;
      if (fixture.latency_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(fixture.latency_ms));
      }
      json input = body.value("input", json());
      if (input.is_string()) input = json::array({input});
      if (!input.is_array()) {
        res.status = 400;
        res.set_content(R"({"error":{"message":"input must be a string or list"}})",
                        "application/json");
        return;
      }
      json data = json::array();
      for (size_t i = 0; i < input.size(); ++i) {
        data.push_back({{"object", "embedding"},
                        {"index", i},
                        {"embedding", mock_embedding(fixture, input[i].get<std::string>())}});
      }
      res.set_content(
          json{{"object", "list"}, {"data", data}, {"model", body.value("model", "mock")}}.dump(),
          "application/json");
    });
    server.Get("/mock/stats", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"requests", requests.load()},
                           {"chat_requests", chat.load()},
                           {"embedding_requests", embeddings.load()},
                           {"injected_failures", injected.load()},
                           {"max_concurrency", max_in_flight.load()}}
                          .dump(),
                      "application/json");
    });
  }

  void bind(const std::string& h, int p) {
    host = h;
    if (p == 0) {
      port = server.bind_to_any_port(h);
    } else {
      port = server.bind_to_port(h, p) ? p : -1;
    }
    if (port <= 0) {
      throw Error("mock server: cannot bind " + h + ":" + std::to_string(p) +
                  " (port in use?)");
    }
  }
};

MockServer::MockServer(MockFixture fixture) : impl_(std::make_unique<Impl>()) {
  impl_->fixture = std::move(fixture);
  impl_->install();
}

MockServer::~MockServer() { stop(); }

int MockServer::start(const std::string& host, int port) {
  impl_->bind(host, port);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void MockServer::serve_blocking(const std::string& host, int port) {
  impl_->bind(host, port);
  impl_->server.listen_after_bind();
}

void MockServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

MockStats MockServer::stats() const {
  return MockStats{impl_->requests.load(), impl_->chat.load(), impl_->embeddings.load(),
                   impl_->injected.load(), impl_->max_in_flight.load()};
}

std::string MockServer::url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

}  // namespace tripleval
