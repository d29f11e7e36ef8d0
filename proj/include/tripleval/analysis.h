#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "tripleval/metrics.h"

namespace tripleval {

struct SeriesEntry {
  std::string model_tag;
  Condition condition = Condition::kNa;
  double value = 0.0;
};

// One metric over model x condition cells. Undefined cells are left out and
// counted in `excluded`.
struct ConditionSeries {
  std::string metric;
  std::vector<SeriesEntry> entries;
  size_t excluded = 0;

  std::vector<double> values() const;
};

// Which cells enter the statistics. Empty lists select everything.
struct CellFilter {
  std::vector<std::string> models;
  std::vector<Condition> conditions;

  bool accepts(const std::string& model, Condition condition) const;
};

ConditionSeries make_series(const std::vector<MetricsReport>& cells, std::string_view metric,
                            const CellFilter& filter = CellFilter{});

// kPooled treats all cells as one population. kWithinModel removes each
// model's own level first, so only cross-condition variation remains.
enum class Grouping { kPooled, kWithinModel };

std::string_view to_string(Grouping g);
Grouping parse_grouping(std::string_view label);

// Population standard deviation over mean. Undefined for fewer than two
// values or a non-positive mean.
std::optional<double> coefficient_of_variation(const std::vector<double>& values);

// kPooled: CV over all entries. kWithinModel: mean over models of each
// model's CV across its conditions (models with fewer than two cells skip).
std::optional<double> coefficient_of_variation(const ConditionSeries& series,
                                               Grouping grouping = Grouping::kWithinModel);

// log SK = log PKP + log PR, so
//   Var(log SK) = Var(log PKP) + Var(log PR) + 2 Cov(log PKP, log PR).
// Population moments, natural log. Shares are undefined when Var(log SK) = 0.
struct VarianceDecomposition {
  double var_log_sk = 0.0;
  double var_log_pkp = 0.0;
  double var_log_pr = 0.0;
  double cov_term = 0.0;  // 2 Cov
  std::optional<double> share_pkp;
  std::optional<double> share_pr;
  std::optional<double> share_cov;
  size_t cells = 0;
  size_t excluded = 0;  // cells with a non-positive value in either series
};

// Aligned by position. Cells where either value is <= 0 are excluded.
// Throws StructuralError when the lengths differ.
VarianceDecomposition decompose_sk_variance(const std::vector<double>& pkp,
                                            const std::vector<double>& pr);

// Aligned by (model, condition); cells missing from either series are
// excluded. kWithinModel centers the logs per model before pooling.
VarianceDecomposition decompose_sk_variance(const ConditionSeries& pkp,
                                            const ConditionSeries& pr,
                                            Grouping grouping = Grouping::kWithinModel);

void to_json(json& j, const VarianceDecomposition& d);

// Region shares in percent of each partition's own total, minus the
// baseline's. `support` holds the union over regions containing R, C, U.
struct VennDelta {
  std::array<std::optional<double>, 8> region_pp{};
  std::array<std::optional<double>, 3> support_pp{};  // R, C, U
};

VennDelta venn_delta(const SourcePartition& model, const SourcePartition& baseline);

// Per-region and per-source percentages of one partition; undefined when
// the partition is empty.
std::array<std::optional<double>, 8> region_percentages(const SourcePartition& p);
std::array<std::optional<double>, 3> support_percentages(const SourcePartition& p);

// Cells sorted by model (in first-seen order) then condition.
std::vector<MetricsReport> order_cells(std::vector<MetricsReport> cells);

// metric,model,condition,value_pp,baseline_pp,delta_pp for every metric of
// the comparison table, against the baseline model's cell of the same
// condition.
std::string delta_heatmap_csv(const std::vector<MetricsReport>& cells,
                              const std::string& baseline_model);

// Region counts, region and support percentages, and deltas against the
// baseline model (empty when no baseline is given).
std::string venn_csv(const std::vector<MetricsReport>& cells, const std::string& baseline_model);

// CV of PKP, PR and SK under both groupings plus both decompositions.
json decomposition_summary(const std::vector<MetricsReport>& cells, const CellFilter& filter);

}  // namespace tripleval
