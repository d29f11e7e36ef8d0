#include "support.h"

#include <stdlib.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tripleval::testing {

namespace fs = std::filesystem;

std::string fixture_path(const std::string& name) {
  return std::string(TRIPLEVAL_TEST_FIXTURES) + "/" + name;
}

std::string prompts_dir() { return TRIPLEVAL_TEST_PROMPTS; }

std::string cli_path() { return TRIPLEVAL_TEST_CLI; }

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "tripleval-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json fixture_config_json(const std::string& url, const std::string& root,
                         const std::string& run_id) {
  json doc = json::parse(read_text(fixture_path("pipeline_config.json")), nullptr, true, true);
  for (auto& [name, ep] : doc["endpoints"].items()) ep["url"] = url;
  for (auto& g : doc["generators"]) g["url"] = url;
  doc["run_root"] = root + "/runs";
  doc["cache_dir"] = root + "/cache";
  doc["run_id"] = run_id;
  doc["prompts_dir"] = prompts_dir();
  doc["corpus"]["path"] = fixture_path("corpus.jsonl");
  return doc;
}

Config fixture_config(const std::string& url, const std::string& root, const std::string& run_id) {
  return config_from_json(fixture_config_json(url, root, run_id), root);
}

namespace {

std::vector<json> rows_of(const std::string& path) {
  std::vector<json> rows;
  std::istringstream in(read_text(path));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) rows.push_back(json::parse(line));
  }
  return rows;
}

std::string spo(const json& t) {
  return t.at("subject").get<std::string>() + "\x1f" + t.at("predicate").get<std::string>() +
         "\x1f" + t.at("object").get<std::string>();
}

}  // namespace

std::map<std::string, OracleUnit> brute_force_attribution(const std::string& run_dir) {
  std::map<std::string, json> triple_by_id;
  std::map<std::string, std::vector<json>> by_owner;
  for (const auto& t : rows_of(run_dir + "/triples.jsonl")) {
    triple_by_id[t.at("id").get<std::string>()] = t;
    by_owner[t.at("instance_id").get<std::string>()].push_back(t);
  }
  std::map<std::string, OracleUnit> units;
  for (const auto& g : rows_of(run_dir + "/generations.jsonl")) {
    const std::string unit = g.at("unit_id").get<std::string>();
    const std::string inst = g.at("instance_id").get<std::string>();
    OracleUnit u;
    u.model = g.at("model_tag").get<std::string>();
    u.condition = parse_condition(inst.substr(inst.rfind('/') + 1));
    for (const auto& t : by_owner[unit]) u.generated += t.at("source") == "generated";
    for (const auto& t : by_owner[inst]) u.reference += t.at("source") == "reference";
    units[unit] = u;
  }
  for (const auto& row : rows_of(run_dir + "/candidates.jsonl")) {
    const std::string unit = row.at("unit_id").get<std::string>();
    const std::string inst = unit.substr(unit.find('/') + 1);
    const json& gen = triple_by_id.at(row.at("generated_triple_id").get<std::string>());
    std::set<std::string> shown;
    for (const auto& c : row.at("candidates")) shown.insert(c.at("triple_id").get<std::string>());
    OracleUnit& u = units.at(unit);
    // Every source triple of the instance, restricted to the shown ones.
    for (const auto& t : by_owner[inst]) {
      if (!shown.count(t.at("id").get<std::string>()) || spo(t) != spo(gen)) continue;
      const std::string src = t.at("source").get<std::string>();
      const std::string gid = gen.at("id").get<std::string>();
      if (src == "reference") u.s_r.insert(gid);
      if (src == "context") u.s_c.insert(gid);
      if (src == "user") u.s_u.insert(gid);
    }
  }
  return units;
}

OracleRatios oracle_ratios(const OracleUnit& u) {
  OracleRatios r;
  std::set<std::string> grounded = u.s_c;
  grounded.insert(u.s_u.begin(), u.s_u.end());
  size_t r_param = 0;
  for (const auto& id : u.s_r) r_param += grounded.count(id) == 0;
  const size_t parametric = u.generated - grounded.size();
  const double g = static_cast<double>(u.generated);
  if (u.generated > 0) {
    r.prec = u.s_r.size() / g;
    r.pr = parametric / g;
    r.sk = r_param / g;
    r.uu = u.s_u.size() / g;
    if (u.condition != Condition::kNa) r.cu = u.s_c.size() / g;
  }
  if (u.reference > 0) r.rec = static_cast<double>(u.s_r.size()) / u.reference;
  if (parametric > 0) r.pkp = static_cast<double>(r_param) / parametric;
  if (r.prec || r.rec) {
    const double p = r.prec.value_or(0), q = r.rec.value_or(0);
    r.f1 = (p > 0 && q > 0) ? 2 * p * q / (p + q) : 0.0;
  }
  return r;
}

OracleUnit merge_units(const std::vector<const OracleUnit*>& units) {
  OracleUnit m;
  for (const OracleUnit* u : units) {
    m.model = u->model;
    m.condition = u->condition;
    m.generated += u->generated;
    m.reference += u->reference;
    m.s_r.insert(u->s_r.begin(), u->s_r.end());
    m.s_c.insert(u->s_c.begin(), u->s_c.end());
    m.s_u.insert(u->s_u.begin(), u->s_u.end());
  }
  return m;
}

}  // namespace tripleval::testing
