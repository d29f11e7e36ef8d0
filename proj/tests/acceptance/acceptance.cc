// Acceptance suite: one PASS/FAIL line per primary criterion. Exits nonzero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>

#include "support.h"
#include "tripleval/analysis.h"
#include "tripleval/corpus.h"
#include "tripleval/hashing.h"
#include "tripleval/humaneval.h"
#include "tripleval/metrics.h"
#include "tripleval/mock_server.h"
#include "tripleval/pipeline.h"
#include "tripleval/strings.h"
#include "tripleval/textmetrics.h"

using namespace tripleval;
namespace tt = tripleval::testing;

namespace {

// Tolerances and limits.
constexpr double kIdentityTol = 1e-12;
constexpr double kTableTol = 5e-4;
constexpr double kSkIdentitySeconds = 1.0;
constexpr double kOracleSeconds = 10.0;
constexpr double kE2eSeconds = 30.0;
constexpr double kSharePrLo = 0.65, kSharePrHi = 0.85;
constexpr double kSharePkpLo = 0.09, kSharePkpHi = 0.29;
constexpr double kCvPkpMax = 0.10;
constexpr int kMaxComparisonsPerTriple = 7;

struct Result {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 6) { return format_fixed(v, digits); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// --- comparison-table fixture -------------------------------------------------

struct TableRow {
  std::string model;
  Condition condition;
  std::map<std::string, std::optional<double>> pct;  // column -> percent
};

std::vector<TableRow> load_table() {
  auto csv = parse_csv(tt::read_text(tt::fixture_path("table2.csv")));
  const std::vector<std::string> header = csv.at(0);
  std::vector<TableRow> rows;
  for (size_t k = 1; k < csv.size(); ++k) {
    const auto& cells = csv[k];
    if (cells.size() < header.size()) continue;
    TableRow r;
    r.model = cells.at(0);
    r.condition = parse_condition(cells.at(1));
    for (size_t i = 2; i < header.size(); ++i) {
      if (cells.at(i) != "n/a") r.pct[header[i]] = std::stod(cells.at(i));
      else r.pct[header[i]] = std::nullopt;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

MetricsReport table_cell(const TableRow& r) {
  MetricsReport m;
  m.scope = Scope::kAggregate;
  m.model_tag = r.model;
  m.condition = r.condition;
  for (const auto& col : table_columns()) {
    auto it = r.pct.find(col.name);
    if (it != r.pct.end() && it->second) m.*(col.field) = *it->second / 100.0;
  }
  return m;
}

const std::set<std::string> kLoraModels = {"woctx", "wrel", "parag", "raft", "wall"};

// --- shared fixture run ---------------------------------------------------------

struct FixtureRun {
  tt::TempDir dir;
  std::unique_ptr<MockServer> server;
  std::string run_dir;
  double seconds = 0.0;
  std::string error;
};

FixtureRun& fixture_run() {
  static FixtureRun* run = [] {
    auto* r = new FixtureRun;
    try {
      r->server = std::make_unique<MockServer>(MockFixture::load(tt::fixture_path("mock_fixture.json")));
      r->server->start();
      auto t0 = std::chrono::steady_clock::now();
      Pipeline p(tt::fixture_config(r->server->url(), r->dir.path(), "first"));
      p.run_all();
      r->seconds = seconds_since(t0);
      r->run_dir = p.run_dir();
    } catch (const std::exception& e) {
      r->error = e.what();
    }
    return r;
  }();
  return *run;
}

// --- criteria ---------------------------------------------------------------------

Result sk_identity() {
  std::mt19937_64 rng(1);
  auto t0 = std::chrono::steady_clock::now();
  size_t defined = 0;
  double worst = 0.0;
  bool prec_ok = true;
  for (int set = 0; set < 1000; ++set) {
    const size_t n = rng() % 25;
    std::vector<AttributionRecord> records;
    for (size_t i = 0; i < n; ++i) {
      std::vector<Evidence> ev;
      const auto mask = rng() % 8;
      int ci = 0;
      if (mask & 4) ev.push_back({SourceKind::kUserQuery, 1, ci++});
      if (mask & 2) ev.push_back({SourceKind::kContext, 1, ci++});
      if (mask & 1) ev.push_back({SourceKind::kReference, 1, ci++});
      records.push_back(make_record("t" + std::to_string(i), std::move(ev)));
    }
    const Condition c = static_cast<Condition>(rng() % 4);
    MetricsReport m = instance_metrics(records, n, 1 + rng() % 20, c);
    if (m.pkp && m.pr) {
      ++defined;
      worst = std::max(worst, std::abs(*m.sk - *m.pkp * *m.pr));
    }
    if (m.prec_ref && !(*m.prec_ref >= *m.sk)) prec_ok = false;
  }
  const double secs = seconds_since(t0);
  return {worst <= kIdentityTol && prec_ok && secs < kSkIdentitySeconds && defined > 0,
          "max |SK-PKP*PR|=" + sci(worst) + " over " + std::to_string(defined) +
              " defined sets, Prec>=SK " + (prec_ok ? "held" : "violated") + ", " + fmt(secs, 3) +
              "s"};
}

// Rebuilds counts from the table percentages (N = 10000 generated
// triples) and lets the metrics code compute SK.
Result table_consistency() {
  auto sk_from = [](double pkp, double pr) {
    MetricsReport m;
    m.counts.generated = 10000;
    m.counts.reference = 10000;
    m.counts.parametric = static_cast<size_t>(std::llround(pr * 10000));
    m.counts.r_param = static_cast<size_t>(std::llround(pkp * m.counts.parametric));
    compute_ratios(m);
    return *m.sk;
  };
  const double base = sk_from(0.5407, 0.6077);
  bool ok = std::abs(base - 0.3286) <= kTableTol;
  size_t checked = 0, passed = 0;
  double worst = 0.0;
  for (const auto& row : load_table()) {
    const auto pkp = row.pct.at("pkp"), pr = row.pct.at("pr"), sk = row.pct.at("sk");
    if (!pkp || !pr || !sk) continue;
    const double err = std::abs(sk_from(*pkp / 100, *pr / 100) - *sk / 100);
    worst = std::max(worst, err);
    ++checked;
    passed += err <= kTableTol;
  }
  ok = ok && checked >= 6 && passed == checked;
  return {ok, "7B no-context SK=" + fmt(base, 4) + ", " + std::to_string(passed) + "/" +
                  std::to_string(checked) + " table cells within 5e-4 (max err " + fmt(worst, 6) +
                  ")"};
}

Result oracle_equivalence() {
  FixtureRun& run = fixture_run();
  if (!run.error.empty()) return {false, "fixture run failed: " + run.error};
  auto oracle = tt::brute_force_attribution(run.run_dir);

  // Pipeline sets from attributions.jsonl.
  std::map<std::string, std::array<std::set<std::string>, 3>> sets;
  for (const auto& row : read_jsonl(run.run_dir + "/attributions.jsonl")) {
    auto& s = sets[row.at("unit_id").get<std::string>()];
    const std::string id = row.at("triple_id").get<std::string>();
    for (const auto& label : row.at("supported_by")) {
      const SourceKind k = parse_source_kind(label.get<std::string>());
      if (k == SourceKind::kReference) s[0].insert(id);
      if (k == SourceKind::kContext) s[1].insert(id);
      if (k == SourceKind::kUserQuery) s[2].insert(id);
    }
  }
  size_t set_mismatch = 0, metric_mismatch = 0, units = 0, cells = 0;
  for (const auto& [unit, o] : oracle) {
    const auto& s = sets[unit];
    if (s[0] != o.s_r || s[1] != o.s_c || s[2] != o.s_u) ++set_mismatch;
  }
  std::string first_diff;
  auto compare = [&](const MetricsReport& m, const tt::OracleRatios& r) {
    const std::pair<const char*, std::pair<std::optional<double>, std::optional<double>>> pairs[] = {
        {"prec", {m.prec_ref, r.prec}}, {"rec", {m.rec_ref, r.rec}}, {"f1", {m.f1_ref, r.f1}},
        {"pkp", {m.pkp, r.pkp}},        {"pr", {m.pr, r.pr}},        {"sk", {m.sk, r.sk}},
        {"cu", {m.cu, r.cu}},           {"uu", {m.uu, r.uu}}};
    for (const auto& [name, v] : pairs) {
      const auto& [a, b] = v;
      if (a.has_value() != b.has_value() || (a && *a != *b)) {
        if (first_diff.empty()) {
          first_diff = std::string(name) + " " + m.model_tag + "/" + m.instance_id + " " +
                       (a ? fmt(*a, 17) : "n/a") + " vs " + (b ? fmt(*b, 17) : "n/a");
        }
        return false;
      }
    }
    return true;
  };
  for (const auto& row : read_jsonl(run.run_dir + "/instance_metrics.jsonl")) {
    MetricsReport m = row.get<MetricsReport>();
    const std::string& unit = m.instance_id;  // already "<model>/<instance>"
    ++units;
    auto it = oracle.find(unit);
    if (it == oracle.end() || !compare(m, tt::oracle_ratios(it->second))) ++metric_mismatch;
  }
  for (const auto& row : read_jsonl(run.run_dir + "/cell_metrics.jsonl")) {
    MetricsReport m = row.get<MetricsReport>();
    std::vector<const tt::OracleUnit*> members;
    for (const auto& [unit, o] : oracle) {
      if (o.model == m.model_tag && o.condition == m.condition) members.push_back(&o);
    }
    ++cells;
    if (members.empty() || !compare(m, tt::oracle_ratios(tt::merge_units(members)))) {
      ++metric_mismatch;
    }
  }
  const bool ok = set_mismatch == 0 && metric_mismatch == 0 && units == oracle.size() &&
                  units > 0 && run.seconds < kOracleSeconds;
  return {ok, std::to_string(oracle.size()) + " units, " + std::to_string(cells) + " cells, " +
                  std::to_string(set_mismatch) + " set and " + std::to_string(metric_mismatch) +
                  " metric mismatches, run " + fmt(run.seconds, 2) + "s" +
                  (first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}

double pop_var(const std::vector<double>& x) {
  double m = 0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

Result variance_identity() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(1e-3, 1.0);
  double worst = 0.0, worst_direct = 0.0;
  for (int i = 0; i < 500; ++i) {
    std::vector<double> a(2 + rng() % 40), b(a.size()), logsk(a.size());
    for (size_t k = 0; k < a.size(); ++k) {
      a[k] = u(rng);
      b[k] = u(rng);
      logsk[k] = std::log(a[k] * b[k]);
    }
    auto d = decompose_sk_variance(a, b);
    worst = std::max(worst, std::abs(d.var_log_pkp + d.var_log_pr + d.cov_term - d.var_log_sk));
    worst_direct = std::max(worst_direct, std::abs(d.var_log_sk - pop_var(logsk)));
  }
  std::vector<MetricsReport> lora;
  for (const auto& row : load_table()) {
    if (kLoraModels.count(row.model)) lora.push_back(table_cell(row));
  }
  auto d = decompose_sk_variance(make_series(lora, "pkp"), make_series(lora, "pr"),
                                 Grouping::kWithinModel);
  const double pr = d.share_pr.value_or(-1), pkp = d.share_pkp.value_or(-1);
  const bool ok = worst <= kIdentityTol && worst_direct <= kIdentityTol && pr >= kSharePrLo &&
                  pr <= kSharePrHi && pkp >= kSharePkpLo && pkp <= kSharePkpHi;
  return {ok, "identity max err " + sci(std::max(worst, worst_direct)) + ", LoRA cells (" +
                  std::to_string(d.cells) + ", within-model) share_pr=" + fmt(pr, 3) +
                  " share_pkp=" + fmt(pkp, 3)};
}

Result cv_ordering() {
  std::vector<MetricsReport> cells;
  for (const auto& row : load_table()) cells.push_back(table_cell(row));
  auto cv = [&](const char* metric) {
    return coefficient_of_variation(make_series(cells, metric), Grouping::kWithinModel);
  };
  const auto pkp = cv("pkp"), pr = cv("pr"), sk = cv("sk");
  const auto pooled = coefficient_of_variation(make_series(cells, "pkp"), Grouping::kPooled);
  const bool ok = pkp && pr && sk && *pkp < *pr && *pr < *sk && *pkp < kCvPkpMax;
  return {ok, std::to_string(cells.size()) + " cells, within-model CV pkp=" +
                  fmt(pkp.value_or(-1), 3) + " pr=" + fmt(pr.value_or(-1), 3) +
                  " sk=" + fmt(sk.value_or(-1), 3) + " (pooled pkp=" +
                  fmt(pooled.value_or(-1), 3) + ")"};
}

size_t naive_lcs(const std::vector<std::string>& a, size_t i, const std::vector<std::string>& b,
                 size_t j) {
  if (i == a.size() || j == b.size()) return 0;
  if (a[i] == b[j]) return 1 + naive_lcs(a, i + 1, b, j + 1);
  return std::max(naive_lcs(a, i + 1, b, j), naive_lcs(a, i, b, j + 1));
}

size_t naive_clipped(const std::vector<std::string>& c, const std::vector<std::string>& r) {
  std::vector<bool> used(r.size(), false);
  size_t hits = 0;
  for (const auto& t : c) {
    for (size_t k = 0; k < r.size(); ++k) {
      if (!used[k] && r[k] == t) {
        used[k] = true;
        ++hits;
        break;
      }
    }
  }
  return hits;
}

bool score_matches(const RougeScore& s, size_t hits, size_t nc, size_t nr) {
  const double p = nc ? static_cast<double>(hits) / nc : 0.0;
  const double r = nr ? static_cast<double>(hits) / nr : 0.0;
  const double f = (p > 0 && r > 0) ? 2 * p * r / (p + r) : 0.0;
  return s.precision == p && s.recall == r && std::abs(s.f1 - f) <= kIdentityTol;
}

Result rouge_oracle() {
  std::mt19937_64 rng(3);
  const char* vocab[] = {"a", "b", "c", "d", "e", "f"};
  size_t mismatches = 0;
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> c(rng() % 11), r(rng() % 11);
    for (auto& t : c) t = vocab[rng() % 6];
    for (auto& t : r) t = vocab[rng() % 6];
    if (!score_matches(rouge1_tokens(c, r), naive_clipped(c, r), c.size(), r.size())) ++mismatches;
    const size_t lcs = naive_lcs(c, 0, r, 0);
    if (lcs_length(c, r) != lcs) ++mismatches;
    if (!score_matches(rougeL_tokens(c, r), lcs, c.size(), r.size())) ++mismatches;
    if (!c.empty()) {
      if (rouge1_tokens(c, c).f1 != 1.0 || rougeL_tokens(c, c).f1 != 1.0) ++mismatches;
    }
  }
  const bool ident = rouge1("the pump shall", "the pump shall").f1 == 1.0 &&
                     rougeL("the pump shall", "the pump shall").f1 == 1.0;
  return {mismatches == 0 && ident,
          "200 random pairs, " + std::to_string(mismatches) + " mismatches, identity " +
              (ident ? "1.0" : "wrong")};
}

Result condition_determinism() {
  tt::TempDir dir;
  Config cfg = tt::fixture_config("http://127.0.0.1:1", dir.path());
  const auto dps = read_datapoints(cfg.corpus_path);
  std::vector<Datapoint> test;
  for (const auto& dp : dps) {
    if (dp.split == Split::kTest) test.push_back(dp);
  }
  WhitespaceTokenizer tok;
  auto build = [&](const std::string& name) {
    ChunkPool pool(dps, tok, cfg.condition_options);
    auto m = build_test_matrix(test, cfg.conditions, pool, cfg.seed, cfg.subsample_per_condition,
                               cfg.condition_options);
    std::vector<json> rows;
    for (const auto& inst : m) rows.push_back(inst);
    write_jsonl(dir.path() + "/" + name, rows);
    return sha256_file(dir.path() + "/" + name);
  };
  const bool same = build("a.jsonl") == build("b.jsonl");

  // Every test datapoint, many seeds.
  ChunkPool pool(dps, tok, cfg.condition_options);
  size_t checked = 0, own = 0;
  for (const auto& dp : test) {
    for (uint64_t s = 0; s < 200; ++s) {
      auto inst = assemble_condition(dp, Condition::kIrrelevant, pool, s, cfg.condition_options);
      for (const auto& origin : inst.context_origins) {
        ++checked;
        own += origin == dp.instance_id;
      }
      for (const auto& text : inst.context_chunks) {
        for (size_t idx : pool.own(dp.instance_id)) own += pool.chunks()[idx].text == text;
      }
    }
  }
  return {same && own == 0 && checked > 0,
          std::string("instance files ") + (same ? "identical" : "differ") + ", " +
              std::to_string(checked) + " irrelevant chunks checked, " + std::to_string(own) +
              " own-seed"};
}

Result candidate_quotas() {
  FixtureRun& run = fixture_run();
  if (!run.error.empty()) return {false, "fixture run failed: " + run.error};
  size_t generated = 0, shown = 0, over = 0;
  for (const auto& row : read_jsonl(run.run_dir + "/candidates.jsonl")) {
    CandidateSet s = row.get<CandidateSet>();
    ++generated;
    shown += s.candidates.size();
    if (s.count(SourceKind::kUserQuery) > 2 || s.count(SourceKind::kContext) > 2 ||
        s.count(SourceKind::kReference) > 3) {
      ++over;
    }
  }
  RunManifest m = RunManifest::load(run.run_dir + "/manifest.json");
  const size_t judged = m.stages.at("judge").stats.at("judge").at("comparisons").get<size_t>();
  const bool ok = over == 0 && generated > 0 && shown <= kMaxComparisonsPerTriple * generated &&
                  judged == shown;
  return {ok, std::to_string(generated) + " candidate sets, " + std::to_string(over) +
                  " over quota, " + std::to_string(judged) + " comparisons <= 7*" +
                  std::to_string(generated)};
}

Result e2e_reproducibility() {
  FixtureRun& run = fixture_run();
  if (!run.error.empty()) return {false, "fixture run failed: " + run.error};
  const size_t before = run.server->stats().requests;
  auto t0 = std::chrono::steady_clock::now();
  std::string second_dir;
  try {
    Pipeline p(tt::fixture_config(run.server->url(), run.dir.path(), "second"));
    p.run_all();
    second_dir = p.run_dir();
  } catch (const std::exception& e) {
    return {false, std::string("second run failed: ") + e.what()};
  }
  const double secs = seconds_since(t0);
  const size_t extra = run.server->stats().requests - before;
  size_t differ = 0;
  const char* files[] = {"table2.csv", "table2_macro.csv", "rouge.csv", "heatmap.csv", "venn.csv"};
  for (const char* f : files) {
    if (sha256_file(run.run_dir + "/" + f) != sha256_file(second_dir + "/" + f)) ++differ;
  }
  const bool ok = differ == 0 && run.seconds + secs < kE2eSeconds;
  return {ok, std::to_string(std::size(files) - differ) + "/" + std::to_string(std::size(files)) +
                  " CSVs identical, warm run " + fmt(secs, 2) + "s with " +
                  std::to_string(extra) + " server requests"};
}

Result humaneval_scoring() {
  FixtureRun& run = fixture_run();
  if (!run.error.empty()) return {false, "fixture run failed: " + run.error};
  json summary = json::parse(tt::read_text(run.run_dir + "/validation_summary.json"));
  const double ext = summary.at("extraction_precision").at("precision").get<double>();
  const double att = summary.at("overall_attribution_accuracy").at("accuracy").get<double>();

  // Four tasks, one with a human set that differs from the pipeline.
  std::vector<AttributionUnit> units;
  std::map<std::string, AttributionRecord> pipeline;
  for (int i = 0; i < 4; ++i) {
    AttributionUnit u;
    u.unit_id = "u" + std::to_string(i);
    u.generated = make_triple("g" + std::to_string(i), "shall be", "x", SourceKind::kGenerated, u.unit_id);
    Triple ref = make_triple("g" + std::to_string(i), "shall be", "x", SourceKind::kReference, u.unit_id);
    u.candidates.push_back({0, Candidate{SourceKind::kReference, ref.id, 1.0, 1}, ref});
    u.pipeline = make_record(u.generated.id, {{SourceKind::kReference, 1, 0}});
    pipeline[u.generated.id] = u.pipeline;
    units.push_back(u);
  }
  auto tasks = sample_attribution_tasks(units, 4, 1);
  LabelSet labels = pseudo_labels({}, tasks, pipeline);
  labels.attribution[0].label = false;
  const double mixed = score_attribution(tasks, labels.attribution, pipeline).overall.accuracy;
  const bool ok = ext == 1.0 && att == 1.0 && mixed == 0.75;
  return {ok, "pseudo-label extraction precision " + fmt(ext, 4) + ", attribution accuracy " +
                  fmt(att, 4) + ", 1-of-4 mismatch " + fmt(mixed, 4)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Result()>>> criteria = {
      {"sk-identity", sk_identity},
      {"table-consistency", table_consistency},
      {"oracle-equivalence", oracle_equivalence},
      {"variance-decomposition", variance_identity},
      {"cv-ordering", cv_ordering},
      {"rouge-oracle", rouge_oracle},
      {"condition-determinism", condition_determinism},
      {"candidate-quotas", candidate_quotas},
      {"e2e-reproducibility", e2e_reproducibility},
      {"humaneval-scoring", humaneval_scoring},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Result r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", r.pass ? "PASS" : "FAIL", name.c_str(), r.detail.c_str());
    std::fflush(stdout);
    failed += r.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  FixtureRun& run = fixture_run();
  if (run.server) run.server->stop();
  delete &run;
  return failed == 0 ? 0 : 1;
}
