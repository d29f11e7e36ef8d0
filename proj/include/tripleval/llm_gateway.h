#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tripleval/core.h"
#include "tripleval/jsonl.h"

namespace tripleval {

// One configured inference endpoint speaking the OpenAI-style chat and
// embeddings HTTP protocol.
struct EndpointConfig {
  std::string name;  // "extractor", "judge", "embedder", or a generator tag
  std::string url;   // scheme://host[:port]
  std::string model;
  std::string chat_path = "/v1/chat/completions";
  std::string embeddings_path = "/v1/embeddings";
  std::string api_key_env;  // bearer token is read from this variable, if set
  int max_concurrency = 4;
  double timeout_s = 120.0;
  int max_retries = 4;
  int initial_backoff_ms = 500;
  int max_backoff_ms = 20000;
  int max_tokens = 4096;
  int embedding_batch_size = 64;
  bool structured_output = true;
};

struct TransportResponse {
  int status = 0;  // 0: no HTTP exchange happened (connection failure)
  std::string body;
  std::string error;
  std::optional<double> retry_after_s;
};

// Synchronous POST of a JSON body. Implementations must be thread-safe.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportResponse post(const std::string& path, const std::string& body) = 0;
};

std::unique_ptr<Transport> make_http_transport(const EndpointConfig& config);

// Content-addressed store of raw response bodies, one file per key.
class ResponseCache {
 public:
  explicit ResponseCache(std::string dir);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& body);
  const std::string& dir() const { return dir_; }

 private:
  std::string path_for(const std::string& key) const;

  std::string dir_;
  mutable std::mutex mu_;
};

// sha256 over (endpoint kind, model tag, request body).
std::string cache_key(std::string_view kind, std::string_view model,
                      std::string_view body);

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model_tag;  // empty: the endpoint's configured model
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 0;  // 0: the endpoint default
  std::optional<json> response_schema;
  std::string schema_name = "response";
};

struct ChatResult {
  std::string text;
  std::string finish_reason;
  bool from_cache = false;
  std::string raw_hash;  // sha256 of the raw response body
};

struct EmbeddingRequest {
  std::vector<std::string> texts;
  std::string model_tag;
};

struct GatewayStats {
  size_t requests = 0;
  size_t cache_hits = 0;
  size_t retries = 0;
};

// Shared by all workers of a stage. At most max_concurrency requests are in
// flight; cache access is serialized inside ResponseCache.
class Gateway {
 public:
  Gateway(EndpointConfig config, std::unique_ptr<Transport> transport,
          std::shared_ptr<ResponseCache> cache);

  const EndpointConfig& config() const { return config_; }

  // Throws TransportError after exhausted retries, CapabilityError when a
  // schema-constrained request is rejected, ProtocolError on bad payloads.
  ChatResult chat_complete(const ChatRequest& req);

  // Like chat_complete, but falls back to a free-form request once the server
  // has rejected structured output. The fallback is sticky per gateway.
  ChatResult chat_complete_structured(ChatRequest req);

  // Unit-normalized vectors, one per text, in input order.
  std::vector<std::vector<float>> embed(const EmbeddingRequest& req);

  bool structured_output_available() const { return structured_ok_.load(); }
  GatewayStats stats() const;

  // Delay before retry number `attempt` (0-based), exponential and capped.
  std::chrono::milliseconds backoff_for(int attempt,
                                        std::optional<double> retry_after_s) const;

  void set_sleep_for_testing(std::function<void(std::chrono::milliseconds)> sleep) {
    sleep_ = std::move(sleep);
  }

 private:
  std::string send_with_retries(const std::string& path, const std::string& body,
                                bool structured);
  void acquire_slot();
  void release_slot();

  EndpointConfig config_;
  std::unique_ptr<Transport> transport_;
  std::shared_ptr<ResponseCache> cache_;
  std::function<void(std::chrono::milliseconds)> sleep_;

  std::mutex slot_mu_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;

  std::atomic<bool> structured_ok_{true};
  std::atomic<size_t> requests_{0};
  std::atomic<size_t> cache_hits_{0};
  std::atomic<size_t> retries_{0};
};

void normalize_l2(std::vector<float>& v);

// Prompt pieces for answer generation; placeholders {{user_query}},
// {{context_block}} and, inside the context block, {{chunks}}.
struct GenerationTemplate {
  std::string system;
  std::string user;
  std::string context_block;

  static GenerationTemplate load(const std::string& dir);
  std::string hash() const;
};

std::vector<ChatMessage> render_generation_prompt(const EvaluationInstance& instance,
                                                  const GenerationTemplate& tmpl);

// Greedy (temperature 0) completion stored into instance.generated. The
// instance must not already have generated text.
std::string generate_response(Gateway& gateway, EvaluationInstance& instance,
                              const GenerationTemplate& tmpl);

}  // namespace tripleval
