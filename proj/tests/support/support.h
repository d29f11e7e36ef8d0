#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tripleval/config.h"
#include "tripleval/core.h"
#include "tripleval/jsonl.h"

namespace tripleval::testing {

std::string fixture_path(const std::string& name);
std::string prompts_dir();
std::string cli_path();

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// pipeline_config.json with every endpoint pointing at `url`, run_root and
// the cache under `root`, and the corpus path made absolute.
json fixture_config_json(const std::string& url, const std::string& root,
                         const std::string& run_id = "fixture");
Config fixture_config(const std::string& url, const std::string& root,
                      const std::string& run_id = "fixture");

// Brute force over persisted artifacts: a generated triple is supported by a
// source when some triple of that source with identical (s, p, o) is among
// its candidates.
struct OracleUnit {
  std::string model;
  Condition condition = Condition::kNa;
  size_t generated = 0;
  size_t reference = 0;
  std::set<std::string> s_r, s_c, s_u;
};

std::map<std::string, OracleUnit> brute_force_attribution(const std::string& run_dir);

struct OracleRatios {
  std::optional<double> prec, rec, f1, pkp, pr, sk, cu, uu;
};

OracleRatios oracle_ratios(const OracleUnit& u);

// Sums the sets of several units (ids are unique per unit) into one.
OracleUnit merge_units(const std::vector<const OracleUnit*>& units);

std::string read_text(const std::string& path);

}  // namespace tripleval::testing
