#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tripleval/jsonl.h"

namespace tripleval {

// Canned behavior of the offline LLM server.
//
// Requests are routed by content: a MICRO-BATCH section marks a grounding
// prompt, "TEXT:\n<<<" an extraction prompt, anything else is generation.
struct MockFixture {
  // Extraction: exact source text (trimmed) -> raw completion. Otherwise,
  // when extraction_brackets is set, every "[s | p | o]" in the source text
  // becomes one record.
  std::map<std::string, std::string> extraction_exact;
  bool extraction_brackets = true;

  // Generation: model tag ("*" for any) -> user query -> response. The query
  // is found as a substring of the prompt; the longest match wins.
  std::map<std::string, std::map<std::string, std::string>> generations;
  std::string generation_fallback = "No answer.";
  // Appends this many "[s | p | o]" claims found in the prompt outside the
  // query (the retrieved context) to the response.
  size_t copy_context_claims = 0;

  // "exact": evidence = candidates whose (s, p, o) equal the generated
  // triple. "none": every evidence list is empty.
  std::string judge_mode = "exact";

  // "bow": token-hash bag of words; "hash": pseudo-random vector per text.
  std::string embedding_mode = "bow";
  size_t embedding_dim = 64;

  int fail_first_n = 0;  // first n requests answer 429
  bool reject_response_schema = false;  // answer 400 to response_format
  int latency_ms = 0;

  static MockFixture from_json(const json& j);
  static MockFixture load(const std::string& path);
};

// "[s | p | o]" occurrences, in order.
std::vector<std::array<std::string, 3>> bracket_claims(std::string_view text);

// The completion text the mock returns for a chat request body.
std::string mock_completion(const MockFixture& fixture, const json& request);
std::vector<float> mock_embedding(const MockFixture& fixture, const std::string& text);

struct MockStats {
  size_t requests = 0;
  size_t chat_requests = 0;
  size_t embedding_requests = 0;
  size_t injected_failures = 0;
  int max_concurrency = 0;
};

// Serves POST /v1/chat/completions, POST /v1/embeddings and GET /mock/stats.
class MockServer {
 public:
  explicit MockServer(MockFixture fixture);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread.
  // Returns the bound port; throws Error when binding fails.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Binds and serves on the calling thread until stop().
  void serve_blocking(const std::string& host, int port);
  void stop();

  MockStats stats() const;
  std::string url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tripleval
