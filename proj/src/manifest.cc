#include "tripleval/manifest.h"

#include <algorithm>
#include <filesystem>

#include "tripleval/errors.h"
#include "tripleval/hashing.h"
#include "tripleval/strings.h"

namespace tripleval {

std::string_view to_string(StageStatus s) {
  switch (s) {
    case StageStatus::kPending: return "pending";
    case StageStatus::kDone: return "done";
    case StageStatus::kFailed: return "failed";
  }
  return "pending";
}

StageStatus parse_stage_status(std::string_view label) {
  if (label == "pending") return StageStatus::kPending;
  if (label == "done") return StageStatus::kDone;
  if (label == "failed") return StageStatus::kFailed;
  throw DataError("unknown stage status '" + std::string(label) + "'");
}

const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> kStages = {
      "ingest", "conditions", "generate", "extract", "embed", "judge",
      "metrics", "analyze", "humaneval-export", "humaneval-score"};
  return kStages;
}

bool is_stage(std::string_view name) {
  const auto& s = stage_order();
  return std::find(s.begin(), s.end(), name) != s.end();
}

const std::vector<std::string>& upstream_stages(const std::string& stage) {
  static const std::map<std::string, std::vector<std::string>> kUpstream = {
      {"ingest", {}},
      {"conditions", {"ingest"}},
      {"generate", {"conditions"}},
      {"extract", {"generate"}},
      {"embed", {"extract"}},
      {"judge", {"embed"}},
      {"metrics", {"judge"}},
      {"analyze", {"metrics"}},
      {"humaneval-export", {"judge"}},
      {"humaneval-score", {"humaneval-export"}},
  };
  auto it = kUpstream.find(stage);
  if (it == kUpstream.end()) throw ConfigError("unknown stage '" + stage + "'");
  return it->second;
}

StageRecord& RunManifest::stage(const std::string& name) {
  if (!is_stage(name)) throw ConfigError("unknown stage '" + name + "'");
  return stages[name];
}

const StageRecord* RunManifest::find(const std::string& name) const {
  auto it = stages.find(name);
  return it == stages.end() ? nullptr : &it->second;
}

bool RunManifest::done(const std::string& name) const {
  const StageRecord* r = find(name);
  return r && r->status == StageStatus::kDone;
}

void RunManifest::check_dag() const {
  for (const auto& [name, rec] : stages) {
    if (rec.status != StageStatus::kDone) continue;
    for (const auto& up : upstream_stages(name)) {
      if (!done(up)) {
        throw StructuralError("manifest: stage " + name + " is done but upstream " + up +
                              " is not");
      }
    }
  }
}

std::vector<std::string> RunManifest::stale_outputs(const std::string& stage,
                                                    const std::string& run_dir) const {
  std::vector<std::string> stale;
  const StageRecord* rec = find(stage);
  if (!rec) return stale;
  for (const auto& [rel, hash] : rec->outputs) {
    const std::string path = run_dir + "/" + rel;
    if (!std::filesystem::exists(path) || sha256_file(path) != hash) stale.push_back(rel);
  }
  return stale;
}

RunManifest RunManifest::load(const std::string& path) {
  if (!std::filesystem::exists(path)) return RunManifest{};
  json doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded()) throw DataError(path + ": manifest is not valid JSON");
  try {
    return doc.get<RunManifest>();
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed manifest: " + e.what());
  }
}

void RunManifest::save(const std::string& path) const {
  write_file_atomic(path, json(*this).dump(2) + "\n");
}

void to_json(json& j, const RunManifest& m) {
  json stages = json::object();
  for (const auto& name : stage_order()) {
    const StageRecord* r = m.find(name);
    if (!r) continue;
    json s = {{"status", to_string(r->status)},
              {"input_key", r->input_key},
              {"outputs", r->outputs},
              {"stats", r->stats}};
    if (!r->error.empty()) s["error"] = r->error;
    stages[name] = std::move(s);
  }
  j = json{{"run_id", m.run_id},
           {"config_hash", m.config_hash},
           {"prompt_hashes", m.prompt_hashes},
           {"seeds", m.seeds},
           {"stages", stages}};
}

void from_json(const json& j, RunManifest& m) {
  m.run_id = j.at("run_id").get<std::string>();
  m.config_hash = j.value("config_hash", std::string());
  m.prompt_hashes = j.value("prompt_hashes", std::map<std::string, std::string>{});
  m.seeds = j.value("seeds", std::map<std::string, uint64_t>{});
  m.stages.clear();
  if (j.contains("stages")) {
    for (auto it = j.at("stages").begin(); it != j.at("stages").end(); ++it) {
      if (!is_stage(it.key())) throw DataError("manifest: unknown stage " + it.key());
      StageRecord r;
      r.status = parse_stage_status(it->at("status").get<std::string>());
      r.input_key = it->value("input_key", std::string());
      r.outputs = it->value("outputs", std::map<std::string, std::string>{});
      r.error = it->value("error", std::string());
      r.stats = it->value("stats", json::object());
      m.stages[it.key()] = std::move(r);
    }
  }
}

}  // namespace tripleval
