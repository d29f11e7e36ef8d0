#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tripleval/analysis.h"
#include "tripleval/corpus.h"
#include "tripleval/judge.h"
#include "tripleval/llm_gateway.h"
#include "tripleval/retriever.h"

namespace tripleval {

struct HumanEvalConfig {
  size_t n_extraction = 128;
  size_t n_attribution = 256;
  size_t max_triples = 8;
  uint64_t seed = 0;  // 0: derived from the run seed
  std::string labels_path;  // empty: score the exported pseudo-labels
};

// Relative paths in the file are resolved against the file's directory.
struct Config {
  std::string base_dir;
  std::string run_root = "runs";
  std::string run_id = "default";
  uint64_t seed = 13;
  std::string prompts_dir;
  std::string cache_dir;  // empty: <run_root>/cache, shared by runs
  int workers = 4;

  std::string corpus_path;
  ConditionOptions condition_options;
  std::vector<Condition> conditions{kAllConditions.begin(), kAllConditions.end()};
  std::optional<size_t> subsample_per_condition;

  EndpointConfig extractor;
  EndpointConfig judge;
  EndpointConfig embedder;
  std::vector<EndpointConfig> generators;  // name is the model tag

  Quotas quotas;
  JudgeOptions judge_options;

  std::string baseline_model;
  Grouping grouping = Grouping::kWithinModel;
  CellFilter analysis_filter;
  std::string external_scores_path;

  HumanEvalConfig humaneval;

  std::string run_dir() const { return run_root + "/" + run_id; }
  std::string resolved_cache_dir() const;
  json to_json() const;
  // Hash of the canonical JSON form.
  std::string hash() const;
};

struct ConfigOverrides {
  std::optional<std::string> run_id;
  std::optional<uint64_t> seed;
  std::optional<size_t> subsample_per_condition;
};

// Throws ConfigError on unknown keys, wrong types or missing endpoints.
Config config_from_json(const json& doc, const std::string& base_dir,
                        const ConfigOverrides& overrides = ConfigOverrides{});
Config load_config(const std::string& path, const ConfigOverrides& overrides = ConfigOverrides{});

EndpointConfig endpoint_from_json(const json& j, const std::string& name);
json endpoint_to_json(const EndpointConfig& e);

std::string default_prompts_dir();

}  // namespace tripleval
