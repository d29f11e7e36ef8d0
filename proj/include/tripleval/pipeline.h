#pragma once

#include <exception>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tripleval/config.h"
#include "tripleval/manifest.h"
#include "tripleval/prompts.h"

namespace tripleval {

// Runs fn(0..n-1) on up to `workers` threads. Returns one exception slot per
// index (null on success); fn never runs twice for the same index.
std::vector<std::exception_ptr> parallel_for(size_t n, int workers,
                                             const std::function<void(size_t)>& fn);

// Rethrows the first captured exception, if any.
void rethrow_first(const std::vector<std::exception_ptr>& errors);

using TransportFactory = std::function<std::unique_ptr<Transport>(const EndpointConfig&)>;

struct PipelineOptions {
  bool force = false;
  TransportFactory transport_factory;  // empty: HTTP
};

enum class StageOutcome { kRan, kSkipped };

// Stages read and write artifacts under config.run_dir(); the manifest at
// <run_dir>/manifest.json is saved after every transition.
class Pipeline {
 public:
  // Throws ConfigError when the prompt templates are unusable.
  Pipeline(Config config, PipelineOptions options = PipelineOptions{});

  // Throws StructuralError when an upstream stage is not done or its
  // artifacts changed, and the stage's own error when it fails (the manifest
  // then marks it failed and every downstream stage pending).
  StageOutcome run_stage(const std::string& stage);
  // Every stage in order; stops at the first failure.
  std::vector<StageOutcome> run_all();

  const RunManifest& manifest() const { return manifest_; }
  const Config& config() const { return config_; }
  std::string run_dir() const { return config_.run_dir(); }
  std::string manifest_path() const { return run_dir() + "/manifest.json"; }

  // Artifact stages read beyond their direct upstream.
  static const std::vector<std::string>& consumed_stages(const std::string& stage);

 private:
  json stage_fragment(const std::string& stage) const;
  std::string input_key(const std::string& stage) const;
  void check_upstream(const std::string& stage) const;
  void invalidate_downstream(const std::string& stage);

  struct Outputs;
  json run_ingest(Outputs& out);
  json run_conditions(Outputs& out);
  json run_generate(Outputs& out);
  json run_extract(Outputs& out);
  json run_embed(Outputs& out);
  json run_judge(Outputs& out);
  json run_metrics(Outputs& out);
  json run_analyze(Outputs& out);
  json run_humaneval_export(Outputs& out);
  json run_humaneval_score(Outputs& out);

  std::unique_ptr<Gateway> make_gateway(const EndpointConfig& endpoint) const;
  std::string path(const std::string& rel) const { return run_dir() + "/" + rel; }
  uint64_t humaneval_seed() const;

  Config config_;
  PipelineOptions options_;
  PromptSet prompts_;
  std::shared_ptr<ResponseCache> cache_;
  RunManifest manifest_;
};

}  // namespace tripleval
