#pragma once

#include <map>
#include <string>
#include <vector>

#include "tripleval/jsonl.h"

namespace tripleval {

enum class StageStatus { kPending, kDone, kFailed };

std::string_view to_string(StageStatus s);
StageStatus parse_stage_status(std::string_view label);

// Stage names in execution order.
const std::vector<std::string>& stage_order();
bool is_stage(std::string_view name);
// Direct upstream stages.
const std::vector<std::string>& upstream_stages(const std::string& stage);

struct StageRecord {
  StageStatus status = StageStatus::kPending;
  std::string input_key;  // hash over config fragment, prompts and upstream outputs
  std::map<std::string, std::string> outputs;  // path relative to the run dir -> sha256
  std::string error;
  json stats = json::object();
};

// Written to <run_dir>/manifest.json after every stage transition.
struct RunManifest {
  std::string run_id;
  std::string config_hash;
  std::map<std::string, std::string> prompt_hashes;
  std::map<std::string, uint64_t> seeds;
  std::map<std::string, StageRecord> stages;

  StageRecord& stage(const std::string& name);
  const StageRecord* find(const std::string& name) const;
  bool done(const std::string& name) const;

  // Throws StructuralError when a done stage has a non-done upstream.
  void check_dag() const;

  // Files of the stage whose content hash differs from the record (or that
  // are missing). Paths are relative to run_dir.
  std::vector<std::string> stale_outputs(const std::string& stage, const std::string& run_dir) const;

  static RunManifest load(const std::string& path);  // missing file: empty manifest
  void save(const std::string& path) const;
};

void to_json(json& j, const RunManifest& m);
void from_json(const json& j, RunManifest& m);

}  // namespace tripleval
