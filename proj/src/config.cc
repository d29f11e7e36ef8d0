#include "tripleval/config.h"

#include <filesystem>
#include <set>

#include "tripleval/errors.h"
#include "tripleval/hashing.h"
#include "tripleval/strings.h"

namespace tripleval {
namespace {

namespace fs = std::filesystem;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read_into(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

std::string resolve(const std::string& base, const std::string& path) {
  if (path.empty()) return path;
  fs::path p(path);
  if (p.is_absolute() || base.empty()) return p.lexically_normal().string();
  return (fs::path(base) / p).lexically_normal().string();
}

std::vector<Condition> conditions_from(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected a list of conditions");
  std::vector<Condition> out;
  for (const auto& c : j) {
    try {
      out.push_back(parse_condition(c.get<std::string>()));
    } catch (const std::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return out;
}

json conditions_json(const std::vector<Condition>& conditions) {
  json out = json::array();
  for (Condition c : conditions) out.push_back(to_string(c));
  return out;
}

}  // namespace

std::string default_prompts_dir() {
#ifdef TRIPLEVAL_DEFAULT_PROMPTS_DIR
  return TRIPLEVAL_DEFAULT_PROMPTS_DIR;
#else
  return "prompts";
#endif
}

EndpointConfig endpoint_from_json(const json& j, const std::string& name) {
  const std::string where = "endpoints." + name;
  check_keys(j,
             {"tag", "url", "model", "chat_path", "embeddings_path", "api_key_env",
              "max_concurrency", "timeout_s", "max_retries", "initial_backoff_ms",
              "max_backoff_ms", "max_tokens", "embedding_batch_size", "structured_output"},
             where);
  EndpointConfig e;
  e.name = name;
  read_into(j, "url", e.url, where);
  read_into(j, "model", e.model, where);
  read_into(j, "chat_path", e.chat_path, where);
  read_into(j, "embeddings_path", e.embeddings_path, where);
  read_into(j, "api_key_env", e.api_key_env, where);
  read_into(j, "max_concurrency", e.max_concurrency, where);
  read_into(j, "timeout_s", e.timeout_s, where);
  read_into(j, "max_retries", e.max_retries, where);
  read_into(j, "initial_backoff_ms", e.initial_backoff_ms, where);
  read_into(j, "max_backoff_ms", e.max_backoff_ms, where);
  read_into(j, "max_tokens", e.max_tokens, where);
  read_into(j, "embedding_batch_size", e.embedding_batch_size, where);
  read_into(j, "structured_output", e.structured_output, where);
  if (e.url.empty()) throw ConfigError(where + ".url is required");
  if (e.url.find("://") == std::string::npos) throw ConfigError(where + ".url needs a scheme");
  if (e.model.empty()) e.model = name;
  if (e.max_concurrency < 1) throw ConfigError(where + ".max_concurrency must be >= 1");
  if (e.max_retries < 0) throw ConfigError(where + ".max_retries must be >= 0");
  if (e.timeout_s <= 0) throw ConfigError(where + ".timeout_s must be positive");
  return e;
}

json endpoint_to_json(const EndpointConfig& e) {
  return json{{"url", e.url},
              {"model", e.model},
              {"chat_path", e.chat_path},
              {"embeddings_path", e.embeddings_path},
              {"api_key_env", e.api_key_env},
              {"max_concurrency", e.max_concurrency},
              {"timeout_s", e.timeout_s},
              {"max_retries", e.max_retries},
              {"initial_backoff_ms", e.initial_backoff_ms},
              {"max_backoff_ms", e.max_backoff_ms},
              {"max_tokens", e.max_tokens},
              {"embedding_batch_size", e.embedding_batch_size},
              {"structured_output", e.structured_output}};
}

std::string Config::resolved_cache_dir() const {
  return cache_dir.empty() ? run_root + "/cache" : cache_dir;
}

json Config::to_json() const {
  json generators_json = json::array();
  for (const auto& g : generators) {
    json e = endpoint_to_json(g);
    e["tag"] = g.name;
    generators_json.push_back(std::move(e));
  }
  const ConditionOptions& co = condition_options;
  json j = {
      {"run_root", run_root},
      {"run_id", run_id},
      {"seed", seed},
      {"prompts_dir", prompts_dir},
      {"cache_dir", resolved_cache_dir()},
      {"workers", workers},
      {"corpus",
       {{"path", corpus_path},
        {"chunk_tokens", co.chunk_tokens},
        {"max_chunks", co.max_chunks},
        {"irrelevant_chunks", co.irrelevant_chunks},
        {"noisy_chunks", co.noisy_chunks},
        {"noisy_min_slots", co.noisy_min_slots},
        {"noisy_max_slots", co.noisy_max_slots},
        {"noisy_relevant_probability", co.noisy_relevant_probability},
        {"conditions", conditions_json(conditions)},
        {"subsample_per_condition",
         subsample_per_condition ? json(*subsample_per_condition) : json(nullptr)}}},
      {"endpoints",
       {{"extractor", endpoint_to_json(extractor)},
        {"judge", endpoint_to_json(judge)},
        {"embedder", endpoint_to_json(embedder)}}},
      {"generators", generators_json},
      {"retrieval",
       {{"user", quotas.user}, {"context", quotas.context}, {"reference", quotas.reference}}},
      {"judge", {{"batch_size", judge_options.batch_size}}},
      {"analysis",
       {{"baseline_model", baseline_model},
        {"grouping", to_string(grouping)},
        {"models", analysis_filter.models},
        {"conditions", conditions_json(analysis_filter.conditions)},
        {"external_scores", external_scores_path}}},
      {"humaneval",
       {{"n_extraction", humaneval.n_extraction},
        {"n_attribution", humaneval.n_attribution},
        {"max_triples", humaneval.max_triples},
        {"seed", humaneval.seed},
        {"labels_path", humaneval.labels_path}}},
  };
  return j;
}

std::string Config::hash() const { return sha256_hex(to_json().dump()); }

Config config_from_json(const json& doc, const std::string& base_dir,
                        const ConfigOverrides& overrides) {
  check_keys(doc,
             {"run_root", "run_id", "seed", "prompts_dir", "cache_dir", "workers", "corpus",
              "endpoints", "generators", "retrieval", "judge", "analysis", "humaneval"},
             "config");
  Config c;
  c.base_dir = base_dir;
  read_into(doc, "run_root", c.run_root, "config");
  read_into(doc, "run_id", c.run_id, "config");
  read_into(doc, "seed", c.seed, "config");
  read_into(doc, "prompts_dir", c.prompts_dir, "config");
  read_into(doc, "cache_dir", c.cache_dir, "config");
  read_into(doc, "workers", c.workers, "config");
  if (c.workers < 1) throw ConfigError("config.workers must be >= 1");

  if (!doc.contains("corpus")) throw ConfigError("config.corpus is required");
  const json& corpus = doc.at("corpus");
  check_keys(corpus,
             {"path", "chunk_tokens", "max_chunks", "irrelevant_chunks", "noisy_chunks",
              "noisy_min_slots", "noisy_max_slots", "noisy_relevant_probability", "conditions",
              "subsample_per_condition"},
             "corpus");
  read_into(corpus, "path", c.corpus_path, "corpus");
  if (c.corpus_path.empty()) throw ConfigError("corpus.path is required");
  ConditionOptions& co = c.condition_options;
  read_into(corpus, "chunk_tokens", co.chunk_tokens, "corpus");
  read_into(corpus, "max_chunks", co.max_chunks, "corpus");
  read_into(corpus, "irrelevant_chunks", co.irrelevant_chunks, "corpus");
  read_into(corpus, "noisy_chunks", co.noisy_chunks, "corpus");
  read_into(corpus, "noisy_min_slots", co.noisy_min_slots, "corpus");
  read_into(corpus, "noisy_max_slots", co.noisy_max_slots, "corpus");
  read_into(corpus, "noisy_relevant_probability", co.noisy_relevant_probability, "corpus");
  if (co.chunk_tokens == 0 || co.max_chunks == 0) {
    throw ConfigError("corpus.chunk_tokens and corpus.max_chunks must be positive");
  }
  if (co.noisy_min_slots > co.noisy_max_slots || co.noisy_max_slots > co.noisy_chunks) {
    throw ConfigError("corpus: need noisy_min_slots <= noisy_max_slots <= noisy_chunks");
  }
  if (co.noisy_relevant_probability < 0 || co.noisy_relevant_probability > 1) {
    throw ConfigError("corpus.noisy_relevant_probability must be in [0, 1]");
  }
  if (corpus.contains("conditions")) {
    c.conditions = conditions_from(corpus.at("conditions"), "corpus.conditions");
  }
  if (corpus.contains("subsample_per_condition") &&
      !corpus.at("subsample_per_condition").is_null()) {
    size_t n = 0;
    read_into(corpus, "subsample_per_condition", n, "corpus");
    c.subsample_per_condition = n;
  }

  if (!doc.contains("endpoints")) throw ConfigError("config.endpoints is required");
  const json& endpoints = doc.at("endpoints");
  check_keys(endpoints, {"extractor", "judge", "embedder"}, "endpoints");
  for (const char* name : {"extractor", "judge", "embedder"}) {
    if (!endpoints.contains(name)) throw ConfigError(std::string("endpoints.") + name + " is required");
  }
  c.extractor = endpoint_from_json(endpoints.at("extractor"), "extractor");
  c.judge = endpoint_from_json(endpoints.at("judge"), "judge");
  c.embedder = endpoint_from_json(endpoints.at("embedder"), "embedder");

  if (!doc.contains("generators") || !doc.at("generators").is_array() ||
      doc.at("generators").empty()) {
    throw ConfigError("config.generators must list at least one model");
  }
  std::set<std::string> tags;
  for (const auto& g : doc.at("generators")) {
    if (!g.is_object() || !g.contains("tag") || !g.at("tag").is_string()) {
      throw ConfigError("generators: every entry needs a string tag");
    }
    const std::string tag = g.at("tag").get<std::string>();
    if (tag.empty() || tag.find('/') != std::string::npos) {
      throw ConfigError("generators: tag '" + tag + "' must be non-empty without '/'");
    }
    if (!tags.insert(tag).second) throw ConfigError("generators: duplicate tag '" + tag + "'");
    c.generators.push_back(endpoint_from_json(g, tag));
  }

  if (doc.contains("retrieval")) {
    const json& r = doc.at("retrieval");
    check_keys(r, {"user", "context", "reference"}, "retrieval");
    read_into(r, "user", c.quotas.user, "retrieval");
    read_into(r, "context", c.quotas.context, "retrieval");
    read_into(r, "reference", c.quotas.reference, "retrieval");
    if (c.quotas.user < 0 || c.quotas.context < 0 || c.quotas.reference < 0) {
      throw ConfigError("retrieval quotas must be >= 0");
    }
  }
  if (doc.contains("judge")) {
    const json& jd = doc.at("judge");
    check_keys(jd, {"batch_size"}, "judge");
    read_into(jd, "batch_size", c.judge_options.batch_size, "judge");
    if (c.judge_options.batch_size == 0) throw ConfigError("judge.batch_size must be >= 1");
  }
  if (doc.contains("analysis")) {
    const json& a = doc.at("analysis");
    check_keys(a, {"baseline_model", "grouping", "models", "conditions", "external_scores"},
               "analysis");
    read_into(a, "baseline_model", c.baseline_model, "analysis");
    std::string grouping = std::string(to_string(c.grouping));
    read_into(a, "grouping", grouping, "analysis");
    c.grouping = parse_grouping(grouping);
    read_into(a, "models", c.analysis_filter.models, "analysis");
    if (a.contains("conditions")) {
      c.analysis_filter.conditions = conditions_from(a.at("conditions"), "analysis.conditions");
    }
    read_into(a, "external_scores", c.external_scores_path, "analysis");
  }
  if (doc.contains("humaneval")) {
    const json& h = doc.at("humaneval");
    check_keys(h, {"n_extraction", "n_attribution", "max_triples", "seed", "labels_path"},
               "humaneval");
    read_into(h, "n_extraction", c.humaneval.n_extraction, "humaneval");
    read_into(h, "n_attribution", c.humaneval.n_attribution, "humaneval");
    read_into(h, "max_triples", c.humaneval.max_triples, "humaneval");
    read_into(h, "seed", c.humaneval.seed, "humaneval");
    read_into(h, "labels_path", c.humaneval.labels_path, "humaneval");
  }

  if (overrides.run_id) c.run_id = *overrides.run_id;
  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.subsample_per_condition) c.subsample_per_condition = overrides.subsample_per_condition;
  if (c.run_id.empty() || c.run_id.find('/') != std::string::npos) {
    throw ConfigError("run_id must be non-empty without '/'");
  }

  c.run_root = resolve(base_dir, c.run_root);
  c.prompts_dir = c.prompts_dir.empty() ? default_prompts_dir() : resolve(base_dir, c.prompts_dir);
  c.cache_dir = resolve(base_dir, c.cache_dir);
  c.corpus_path = resolve(base_dir, c.corpus_path);
  c.external_scores_path = resolve(base_dir, c.external_scores_path);
  c.humaneval.labels_path = resolve(base_dir, c.humaneval.labels_path);
  return c;
}

Config load_config(const std::string& path, const ConfigOverrides& overrides) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  json doc = json::parse(text, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError(path + ": not valid JSON");
  const std::string base = fs::absolute(fs::path(path)).parent_path().string();
  return config_from_json(doc, base, overrides);
}

}  // namespace tripleval
