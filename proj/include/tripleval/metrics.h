#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tripleval/core.h"

namespace tripleval {

// Set sizes behind every ratio. With G the generated triples:
//   s_r, s_c, s_u   supported by reference / context / user query
//   parametric      |G \ (S_C ∪ S_U)|
//   r_param         |S_R \ (S_C ∪ S_U)|
//   any_source      supported by at least one source
struct MetricCounts {
  size_t generated = 0;
  size_t reference = 0;
  size_t s_r = 0;
  size_t s_c = 0;
  size_t s_u = 0;
  size_t parametric = 0;
  size_t r_param = 0;
  size_t any_source = 0;

  MetricCounts& operator+=(const MetricCounts& o);
  friend bool operator==(const MetricCounts&, const MetricCounts&) = default;
};

MetricCounts counts_from_partition(const SourcePartition& p, size_t reference_count);

enum class Scope { kInstance, kAggregate };

// Ratios are fractions; std::nullopt marks an undefined value (zero
// denominator, or CU without context). Undefined is never reported as 0.
struct MetricsReport {
  Scope scope = Scope::kInstance;
  std::string model_tag;
  Condition condition = Condition::kNa;
  std::string instance_id;  // instance scope only
  size_t instances = 1;
  MetricCounts counts;
  SourcePartition partition;

  std::optional<double> prec_ref;
  std::optional<double> rec_ref;
  std::optional<double> f1_ref;
  std::optional<double> pkp;
  std::optional<double> pr;
  std::optional<double> sk;
  std::optional<double> cu;
  std::optional<double> uu;
  std::optional<double> any_source;
};

// Fills every ratio from counts and condition.
void compute_ratios(MetricsReport& report);

// Throws DataError when reference_count is 0 and StructuralError when the
// records do not cover generated_count distinct triples.
MetricsReport instance_metrics(const std::vector<AttributionRecord>& records,
                               size_t generated_count, size_t reference_count,
                               Condition condition, const std::string& model_tag = "",
                               const std::string& instance_id = "");

// Micro average: counts are summed, ratios recomputed. All reports must share
// (model_tag, condition); otherwise StructuralError. An empty list is a
// StructuralError too.
MetricsReport aggregate(const std::vector<MetricsReport>& reports);

// Mean of per-instance ratios, each over the instances where it is defined.
MetricsReport macro_aggregate(const std::vector<MetricsReport>& reports);

std::optional<double> any_source_rate(const std::vector<AttributionRecord>& records,
                                      size_t generated_count);

// Harmonic mean; undefined only when both inputs are.
std::optional<double> f1_score(std::optional<double> precision, std::optional<double> recall);

struct MetricColumn {
  const char* name;
  std::optional<double> MetricsReport::*field;
};

// Column order of the comparison table: F1, Prec, Rec, SK, PKP, PR, CU, UU.
const std::vector<MetricColumn>& table_columns();

std::optional<double> metric_value(const MetricsReport& r, std::string_view name);

void to_json(json& j, const MetricCounts& c);
void from_json(const json& j, MetricCounts& c);
void to_json(json& j, const MetricsReport& r);
void from_json(const json& j, MetricsReport& r);

// One row per report, fractions with six decimals, "n/a" for undefined.
std::string metrics_csv(const std::vector<MetricsReport>& reports);

}  // namespace tripleval
