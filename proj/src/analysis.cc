#include "tripleval/analysis.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "tripleval/errors.h"
#include "tripleval/strings.h"

namespace tripleval {
namespace {

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Population covariance.
double covariance(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(a.size());
}

VarianceDecomposition decompose_logs(const std::vector<double>& log_pkp,
                                     const std::vector<double>& log_pr, size_t excluded) {
  VarianceDecomposition d;
  d.cells = log_pkp.size();
  d.excluded = excluded;
  if (d.cells == 0) return d;
  std::vector<double> log_sk(d.cells);
  for (size_t i = 0; i < d.cells; ++i) log_sk[i] = log_pkp[i] + log_pr[i];
  d.var_log_sk = covariance(log_sk, log_sk);
  d.var_log_pkp = covariance(log_pkp, log_pkp);
  d.var_log_pr = covariance(log_pr, log_pr);
  d.cov_term = 2.0 * covariance(log_pkp, log_pr);
  if (d.var_log_sk > 0.0) {
    d.share_pkp = d.var_log_pkp / d.var_log_sk;
    d.share_pr = d.var_log_pr / d.var_log_sk;
    d.share_cov = d.cov_term / d.var_log_sk;
  }
  return d;
}

std::string cell_key(const std::string& model, Condition c) {
  return model + '\x1f' + std::string(to_string(c));
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string pp_cell(const std::optional<double>& v) {
  return v ? format_fixed(*v, 4) : std::string("n/a");
}

const MetricsReport* find_cell(const std::vector<MetricsReport>& cells, const std::string& model,
                               Condition condition) {
  for (const auto& c : cells) {
    if (c.model_tag == model && c.condition == condition) return &c;
  }
  return nullptr;
}

}  // namespace

std::vector<double> ConditionSeries::values() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.value);
  return out;
}

bool CellFilter::accepts(const std::string& model, Condition condition) const {
  if (!models.empty() && std::find(models.begin(), models.end(), model) == models.end()) {
    return false;
  }
  return conditions.empty() ||
         std::find(conditions.begin(), conditions.end(), condition) != conditions.end();
}

ConditionSeries make_series(const std::vector<MetricsReport>& cells, std::string_view metric,
                            const CellFilter& filter) {
  ConditionSeries s;
  s.metric = std::string(metric);
  for (const auto& c : cells) {
    if (!filter.accepts(c.model_tag, c.condition)) continue;
    if (auto v = metric_value(c, metric)) {
      s.entries.push_back({c.model_tag, c.condition, *v});
    } else {
      ++s.excluded;
    }
  }
  return s;
}

std::string_view to_string(Grouping g) {
  return g == Grouping::kPooled ? "pooled" : "within_model";
}

Grouping parse_grouping(std::string_view label) {
  if (label == "pooled") return Grouping::kPooled;
  if (label == "within_model" || label == "within-model") return Grouping::kWithinModel;
  throw ConfigError("unknown grouping '" + std::string(label) + "'");
}

std::optional<double> coefficient_of_variation(const std::vector<double>& values) {
  if (values.size() < 2) return std::nullopt;
  const double m = mean(values);
  if (!(m > 0.0)) return std::nullopt;
  return std::sqrt(covariance(values, values)) / m;
}

std::optional<double> coefficient_of_variation(const ConditionSeries& series, Grouping grouping) {
  if (grouping == Grouping::kPooled) return coefficient_of_variation(series.values());
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> by_model;
  for (const auto& e : series.entries) {
    if (!by_model.count(e.model_tag)) order.push_back(e.model_tag);
    by_model[e.model_tag].push_back(e.value);
  }
  double sum = 0.0;
  size_t n = 0;
  for (const auto& model : order) {
    if (auto cv = coefficient_of_variation(by_model[model])) {
      sum += *cv;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

VarianceDecomposition decompose_sk_variance(const std::vector<double>& pkp,
                                            const std::vector<double>& pr) {
  if (pkp.size() != pr.size()) {
    throw StructuralError("decompose_sk_variance: series of different length");
  }
  std::vector<double> lp, lr;
  size_t excluded = 0;
  for (size_t i = 0; i < pkp.size(); ++i) {
    if (!(pkp[i] > 0.0) || !(pr[i] > 0.0)) {
      ++excluded;
      continue;
    }
    lp.push_back(std::log(pkp[i]));
    lr.push_back(std::log(pr[i]));
  }
  return decompose_logs(lp, lr, excluded);
}

VarianceDecomposition decompose_sk_variance(const ConditionSeries& pkp,
                                            const ConditionSeries& pr, Grouping grouping) {
  std::map<std::string, double> pr_by_cell;
  for (const auto& e : pr.entries) pr_by_cell[cell_key(e.model_tag, e.condition)] = e.value;

  struct Cell {
    std::string model;
    double log_pkp, log_pr;
  };
  std::vector<Cell> cells;
  size_t excluded = pkp.excluded + pr.excluded;
  size_t matched = 0;
  for (const auto& e : pkp.entries) {
    auto it = pr_by_cell.find(cell_key(e.model_tag, e.condition));
    if (it == pr_by_cell.end()) {
      ++excluded;
      continue;
    }
    ++matched;
    if (!(e.value > 0.0) || !(it->second > 0.0)) {
      ++excluded;
      continue;
    }
    cells.push_back({e.model_tag, std::log(e.value), std::log(it->second)});
  }
  excluded += pr.entries.size() - matched;

  if (grouping == Grouping::kWithinModel) {
    std::map<std::string, std::pair<double, double>> sums;
    std::map<std::string, size_t> counts;
    for (const auto& c : cells) {
      sums[c.model].first += c.log_pkp;
      sums[c.model].second += c.log_pr;
      ++counts[c.model];
    }
    for (auto& c : cells) {
      const double n = static_cast<double>(counts[c.model]);
      c.log_pkp -= sums[c.model].first / n;
      c.log_pr -= sums[c.model].second / n;
    }
  }
  std::vector<double> lp, lr;
  for (const auto& c : cells) {
    lp.push_back(c.log_pkp);
    lr.push_back(c.log_pr);
  }
  return decompose_logs(lp, lr, excluded);
}

void to_json(json& j, const VarianceDecomposition& d) {
  j = json{{"var_log_sk", d.var_log_sk},
           {"var_log_pkp", d.var_log_pkp},
           {"var_log_pr", d.var_log_pr},
           {"cov_term", d.cov_term},
           {"share_pkp", optional_json(d.share_pkp)},
           {"share_pr", optional_json(d.share_pr)},
           {"share_cov", optional_json(d.share_cov)},
           {"cells", d.cells},
           {"excluded", d.excluded}};
}

std::array<std::optional<double>, 8> region_percentages(const SourcePartition& p) {
  std::array<std::optional<double>, 8> out{};
  const size_t total = p.total();
  if (total == 0) return out;
  for (size_t m = 0; m < 8; ++m) {
    out[m] = 100.0 * static_cast<double>(p.regions[m]) / static_cast<double>(total);
  }
  return out;
}

std::array<std::optional<double>, 3> support_percentages(const SourcePartition& p) {
  std::array<std::optional<double>, 3> out{};
  const size_t total = p.total();
  if (total == 0) return out;
  const SourceKind kinds[] = {SourceKind::kReference, SourceKind::kContext,
                              SourceKind::kUserQuery};
  for (size_t i = 0; i < 3; ++i) {
    out[i] = 100.0 * static_cast<double>(p.support_count(kinds[i])) /
             static_cast<double>(total);
  }
  return out;
}

VennDelta venn_delta(const SourcePartition& model, const SourcePartition& baseline) {
  VennDelta d;
  const auto mr = region_percentages(model), br = region_percentages(baseline);
  for (size_t m = 0; m < 8; ++m) {
    if (mr[m] && br[m]) d.region_pp[m] = *mr[m] - *br[m];
  }
  const auto ms = support_percentages(model), bs = support_percentages(baseline);
  for (size_t i = 0; i < 3; ++i) {
    if (ms[i] && bs[i]) d.support_pp[i] = *ms[i] - *bs[i];
  }
  return d;
}

std::vector<MetricsReport> order_cells(std::vector<MetricsReport> cells) {
  std::map<std::string, size_t> rank;
  for (const auto& c : cells) rank.emplace(c.model_tag, rank.size());
  std::stable_sort(cells.begin(), cells.end(), [&](const auto& a, const auto& b) {
    if (a.model_tag != b.model_tag) return rank[a.model_tag] < rank[b.model_tag];
    return a.condition < b.condition;
  });
  return cells;
}

std::string delta_heatmap_csv(const std::vector<MetricsReport>& cells,
                              const std::string& baseline_model) {
  std::string out =
      csv_row({"metric", "model", "condition", "value_pp", "baseline_pp", "delta_pp"});
  const auto ordered = order_cells(cells);
  for (const auto& col : table_columns()) {
    for (const auto& c : ordered) {
      const MetricsReport* base = find_cell(cells, baseline_model, c.condition);
      std::optional<double> v, b, d;
      if (c.*(col.field)) v = 100.0 * *(c.*(col.field));
      if (base && base->*(col.field)) b = 100.0 * *(base->*(col.field));
      if (v && b) d = *v - *b;
      out += csv_row({col.name, c.model_tag, std::string(to_string(c.condition)), pp_cell(v),
                      pp_cell(b), pp_cell(d)});
    }
  }
  return out;
}

std::string venn_csv(const std::vector<MetricsReport>& cells, const std::string& baseline_model) {
  std::vector<std::string> header = {"model", "condition", "generated"};
  for (uint8_t m = 0; m < 8; ++m) header.push_back("n_" + std::string(region_label(m)));
  for (uint8_t m = 0; m < 8; ++m) header.push_back("pct_" + std::string(region_label(m)));
  for (const char* s : {"support_R", "support_C", "support_U"}) header.push_back(s);
  for (uint8_t m = 0; m < 8; ++m) header.push_back("delta_" + std::string(region_label(m)));
  for (const char* s : {"delta_support_R", "delta_support_C", "delta_support_U"}) {
    header.push_back(s);
  }
  std::string out = csv_row(header);
  for (const auto& c : order_cells(cells)) {
    std::vector<std::string> row = {c.model_tag, std::string(to_string(c.condition)),
                                    std::to_string(c.partition.total())};
    for (size_t m = 0; m < 8; ++m) row.push_back(std::to_string(c.partition.regions[m]));
    for (const auto& v : region_percentages(c.partition)) row.push_back(pp_cell(v));
    for (const auto& v : support_percentages(c.partition)) row.push_back(pp_cell(v));
    const MetricsReport* base =
        baseline_model.empty() ? nullptr : find_cell(cells, baseline_model, c.condition);
    VennDelta d;
    if (base) d = venn_delta(c.partition, base->partition);
    for (const auto& v : d.region_pp) row.push_back(pp_cell(v));
    for (const auto& v : d.support_pp) row.push_back(pp_cell(v));
    out += csv_row(row);
  }
  return out;
}

json decomposition_summary(const std::vector<MetricsReport>& cells, const CellFilter& filter) {
  json out;
  json cv = json::object();
  const auto pkp = make_series(cells, "pkp", filter);
  const auto pr = make_series(cells, "pr", filter);
  const auto sk = make_series(cells, "sk", filter);
  for (const auto* s : {&pkp, &pr, &sk}) {
    cv[s->metric] = {
        {"within_model", optional_json(coefficient_of_variation(*s, Grouping::kWithinModel))},
        {"pooled", optional_json(coefficient_of_variation(*s, Grouping::kPooled))},
        {"cells", s->entries.size()},
        {"excluded", s->excluded}};
  }
  out["cv"] = cv;
  out["decomposition"] = {
      {"within_model", decompose_sk_variance(pkp, pr, Grouping::kWithinModel)},
      {"pooled", decompose_sk_variance(pkp, pr, Grouping::kPooled)}};
  json conditions = json::array();
  for (Condition c : filter.conditions) conditions.push_back(to_string(c));
  out["filter"] = {{"models", filter.models}, {"conditions", conditions}};
  return out;
}

}  // namespace tripleval
