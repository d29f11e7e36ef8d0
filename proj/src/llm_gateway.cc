#include "tripleval/llm_gateway.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <thread>

#include "tripleval/errors.h"
#include "tripleval/hashing.h"
#include "tripleval/strings.h"

namespace tripleval {
namespace {

bool is_transient(int status) {
  return status == 0 || status == 408 || status == 429 || status >= 500;
}

std::string describe_failure(const TransportResponse& resp) {
  if (resp.status == 0) return resp.error.empty() ? "connection failed" : resp.error;
  std::string msg = "HTTP " + std::to_string(resp.status);
  if (!resp.body.empty()) msg += ": " + resp.body.substr(0, 200);
  return msg;
}

}  // namespace

ResponseCache::ResponseCache(std::string dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string ResponseCache::path_for(const std::string& key) const {
  // Two-level fan-out keeps directories small on long runs.
  return dir_ + "/" + key.substr(0, 2) + "/" + key;
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  std::lock_guard<std::mutex> lock(mu_);
  const std::string path = path_for(key);
  if (!std::filesystem::exists(path)) return std::nullopt;
  return read_file(path);
}

void ResponseCache::put(const std::string& key, const std::string& body) {
  std::lock_guard<std::mutex> lock(mu_);
  write_file_atomic(path_for(key), body);
}

std::string cache_key(std::string_view kind, std::string_view model,
                      std::string_view body) {
  return sha256_fields({kind, model, body});
}

Gateway::Gateway(EndpointConfig config, std::unique_ptr<Transport> transport,
                 std::shared_ptr<ResponseCache> cache)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      cache_(std::move(cache)),
      sleep_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  if (config_.max_concurrency < 1) config_.max_concurrency = 1;
  structured_ok_ = config_.structured_output;
}

GatewayStats Gateway::stats() const {
  return GatewayStats{requests_.load(), cache_hits_.load(), retries_.load()};
}

std::chrono::milliseconds Gateway::backoff_for(
    int attempt, std::optional<double> retry_after_s) const {
  double ms = config_.initial_backoff_ms * std::pow(2.0, std::min(attempt, 30));
  if (retry_after_s && *retry_after_s * 1000.0 > ms) ms = *retry_after_s * 1000.0;
  ms = std::min(ms, static_cast<double>(config_.max_backoff_ms));
  return std::chrono::milliseconds(static_cast<int64_t>(ms));
}

void Gateway::acquire_slot() {
  std::unique_lock<std::mutex> lock(slot_mu_);
  slot_cv_.wait(lock, [&] { return in_flight_ < config_.max_concurrency; });
  ++in_flight_;
}

void Gateway::release_slot() {
  {
    std::lock_guard<std::mutex> lock(slot_mu_);
    --in_flight_;
  }
  slot_cv_.notify_one();
}

std::string Gateway::send_with_retries(const std::string& path,
                                       const std::string& body, bool structured) {
  if (!transport_) throw TransportError(config_.name, "no transport configured");
  TransportResponse resp;
  for (int attempt = 0;; ++attempt) {
    acquire_slot();
    try {
      resp = transport_->post(path, body);
    } catch (...) {
      release_slot();
      throw;
    }
    release_slot();
    ++requests_;

    if (resp.status >= 200 && resp.status < 300) return resp.body;
    if (structured && (resp.status == 400 || resp.status == 422)) {
      throw CapabilityError(config_.name + ": structured output rejected (" +
                            describe_failure(resp) + ")");
    }
    if (!is_transient(resp.status)) {
      throw TransportError(config_.name + " " + config_.url + path,
                           describe_failure(resp));
    }
    if (attempt >= config_.max_retries) break;
    ++retries_;
    sleep_(backoff_for(attempt, resp.retry_after_s));
  }
  throw TransportError(config_.name + " " + config_.url + path,
                       "retries exhausted after " +
                           std::to_string(config_.max_retries + 1) +
                           " attempts, last: " + describe_failure(resp));
}

ChatResult Gateway::chat_complete(const ChatRequest& req) {
  if (req.messages.empty()) throw DataError("chat request without messages");
  if (req.temperature < 0) throw DataError("chat request with negative temperature");

  const std::string model = req.model_tag.empty() ? config_.model : req.model_tag;
  json body;
  body["model"] = model;
  body["temperature"] = req.temperature;
  body["max_tokens"] = req.max_tokens > 0 ? req.max_tokens : config_.max_tokens;
  body["messages"] = json::array();
  for (const auto& m : req.messages) {
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  const bool structured = req.response_schema.has_value();
  if (structured) {
    body["response_format"] = {
        {"type", "json_schema"},
        {"json_schema",
         {{"name", req.schema_name}, {"schema", *req.response_schema}, {"strict", true}}}};
  }
  const std::string payload = body.dump();
  const std::string key = cache_key("chat", model, payload);

  ChatResult result;
  std::string raw;
  if (cache_) {
    if (auto hit = cache_->get(key)) {
      raw = std::move(*hit);
      result.from_cache = true;
      ++cache_hits_;
    }
  }
  if (!result.from_cache) raw = send_with_retries(config_.chat_path, payload, structured);

  try {
    json parsed = json::parse(raw);
    const auto& choice = parsed.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    result.text = content.is_string() ? content.get<std::string>() : std::string();
    if (choice.contains("finish_reason") && choice.at("finish_reason").is_string()) {
      result.finish_reason = choice.at("finish_reason").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ProtocolError(config_.name + ": malformed chat response: " + e.what());
  }
  if (cache_ && !result.from_cache) cache_->put(key, raw);
  result.raw_hash = sha256_hex(raw);
  return result;
}

ChatResult Gateway::chat_complete_structured(ChatRequest req) {
  if (req.response_schema && !structured_ok_.load()) req.response_schema.reset();
  if (!req.response_schema) return chat_complete(req);
  try {
    return chat_complete(req);
  } catch (const CapabilityError&) {
    structured_ok_ = false;
    req.response_schema.reset();
    return chat_complete(req);
  }
}

void normalize_l2(std::vector<float>& v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw ProtocolError("embedding has zero or non-finite norm");
  }
  for (float& x : v) x = static_cast<float>(x / norm);
}

std::vector<std::vector<float>> Gateway::embed(const EmbeddingRequest& req) {
  if (req.texts.empty()) throw DataError("embedding request without texts");
  for (const auto& t : req.texts) {
    if (t.empty()) throw DataError("embedding request contains an empty text");
  }
  const std::string model = req.model_tag.empty() ? config_.model : req.model_tag;
  const size_t batch = std::max(1, config_.embedding_batch_size);

  std::vector<std::vector<float>> out;
  out.reserve(req.texts.size());
  size_t dim = 0;
  for (size_t start = 0; start < req.texts.size(); start += batch) {
    const size_t end = std::min(req.texts.size(), start + batch);
    json body;
    body["model"] = model;
    body["input"] = std::vector<std::string>(req.texts.begin() + start,
                                             req.texts.begin() + end);
    const std::string payload = body.dump();
    const std::string key = cache_key("embed", model, payload);

    std::string raw;
    bool hit = false;
    if (cache_) {
      if (auto cached = cache_->get(key)) {
        raw = std::move(*cached);
        hit = true;
        ++cache_hits_;
      }
    }
    if (!hit) raw = send_with_retries(config_.embeddings_path, payload, false);

    std::vector<std::vector<float>> vectors(end - start);
    try {
      json parsed = json::parse(raw);
      const auto& data = parsed.at("data");
      if (data.size() != end - start) {
        throw ProtocolError(config_.name + ": expected " + std::to_string(end - start) +
                            " embeddings, got " + std::to_string(data.size()));
      }
      for (size_t i = 0; i < data.size(); ++i) {
        size_t idx = data[i].contains("index") ? data[i].at("index").get<size_t>() : i;
        if (idx >= vectors.size() || !vectors[idx].empty()) {
          throw ProtocolError(config_.name + ": bad embedding index");
        }
        vectors[idx] = data[i].at("embedding").get<std::vector<float>>();
      }
    } catch (const json::exception& e) {
      throw ProtocolError(config_.name + ": malformed embedding response: " + e.what());
    }
    for (auto& v : vectors) {
      if (dim == 0) dim = v.size();
      if (v.empty() || v.size() != dim) {
        throw ProtocolError(config_.name + ": embedding dimension mismatch (" +
                            std::to_string(v.size()) + " vs " + std::to_string(dim) + ")");
      }
      normalize_l2(v);
    }
    if (cache_ && !hit) cache_->put(key, raw);
    for (auto& v : vectors) out.push_back(std::move(v));
  }
  return out;
}

GenerationTemplate GenerationTemplate::load(const std::string& dir) {
  GenerationTemplate t;
  t.system = read_file(dir + "/system.txt");
  t.user = read_file(dir + "/user.txt");
  t.context_block = read_file(dir + "/context_block.txt");
  return t;
}

std::string GenerationTemplate::hash() const {
  return sha256_fields({system, user, context_block});
}

std::vector<ChatMessage> render_generation_prompt(const EvaluationInstance& instance,
                                                  const GenerationTemplate& tmpl) {
  std::string context_block;
  if (!instance.context_chunks.empty()) {
    std::string chunks;
    for (size_t i = 0; i < instance.context_chunks.size(); ++i) {
      if (i) chunks += "\n";
      chunks += "[" + std::to_string(i + 1) + "] " + instance.context_chunks[i];
    }
    context_block = render_placeholders(tmpl.context_block, {{"chunks", chunks}});
  }
  std::vector<ChatMessage> messages;
  if (!trim(tmpl.system).empty()) {
    messages.push_back({"system", std::string(trim(tmpl.system))});
  }
  messages.push_back(
      {"user", render_placeholders(tmpl.user, {{"context_block", context_block},
                                               {"user_query", instance.user_query}})});
  return messages;
}

std::string generate_response(Gateway& gateway, EvaluationInstance& instance,
                              const GenerationTemplate& tmpl) {
  if (instance.generated) {
    throw StructuralError(instance.instance_id + ": already has a generated response");
  }
  ChatRequest req;
  req.messages = render_generation_prompt(instance, tmpl);
  req.temperature = 0.0;
  ChatResult result = gateway.chat_complete(req);
  instance.generated = result.text;
  return result.text;
}

}  // namespace tripleval
