#include "tripleval/metrics.h"

#include "tripleval/errors.h"
#include "tripleval/strings.h"

namespace tripleval {
namespace {

std::optional<double> ratio(size_t num, size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

MetricCounts& MetricCounts::operator+=(const MetricCounts& o) {
  generated += o.generated;
  reference += o.reference;
  s_r += o.s_r;
  s_c += o.s_c;
  s_u += o.s_u;
  parametric += o.parametric;
  r_param += o.r_param;
  any_source += o.any_source;
  return *this;
}

MetricCounts counts_from_partition(const SourcePartition& p, size_t reference_count) {
  MetricCounts c;
  c.generated = p.total();
  c.reference = reference_count;
  c.s_r = p.support_count(SourceKind::kReference);
  c.s_c = p.support_count(SourceKind::kContext);
  c.s_u = p.support_count(SourceKind::kUserQuery);
  c.parametric = p.none() + p.r_param();
  c.r_param = p.r_param();
  c.any_source = c.generated - p.none();
  return c;
}

std::optional<double> f1_score(std::optional<double> precision, std::optional<double> recall) {
  if (!precision && !recall) return std::nullopt;
  const double p = precision.value_or(0.0);
  const double r = recall.value_or(0.0);
  if (p == 0.0 || r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

void compute_ratios(MetricsReport& r) {
  const MetricCounts& c = r.counts;
  r.prec_ref = ratio(c.s_r, c.generated);
  r.rec_ref = ratio(c.s_r, c.reference);
  r.f1_ref = f1_score(r.prec_ref, r.rec_ref);
  r.pkp = ratio(c.r_param, c.parametric);
  r.pr = ratio(c.parametric, c.generated);
  r.sk = ratio(c.r_param, c.generated);
  r.cu = r.condition == Condition::kNa ? std::nullopt : ratio(c.s_c, c.generated);
  r.uu = ratio(c.s_u, c.generated);
  r.any_source = ratio(c.any_source, c.generated);
}

MetricsReport instance_metrics(const std::vector<AttributionRecord>& records,
                               size_t generated_count, size_t reference_count,
                               Condition condition, const std::string& model_tag,
                               const std::string& instance_id) {
  if (reference_count == 0) {
    throw DataError("instance_metrics: reference has no triples" +
                    (instance_id.empty() ? std::string() : " (" + instance_id + ")"));
  }
  MetricsReport r;
  r.scope = Scope::kInstance;
  r.model_tag = model_tag;
  r.condition = condition;
  r.instance_id = instance_id;
  r.partition = partition(records, generated_count);
  r.counts = counts_from_partition(r.partition, reference_count);
  compute_ratios(r);
  return r;
}

MetricsReport aggregate(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw StructuralError("aggregate: no reports");
  MetricsReport out;
  out.scope = Scope::kAggregate;
  out.model_tag = reports.front().model_tag;
  out.condition = reports.front().condition;
  out.instances = 0;
  for (const auto& r : reports) {
    if (r.model_tag != out.model_tag || r.condition != out.condition) {
      throw StructuralError("aggregate: mixed cells (" + out.model_tag + "/" +
                            std::string(to_string(out.condition)) + " vs " + r.model_tag +
                            "/" + std::string(to_string(r.condition)) + ")");
    }
    out.counts += r.counts;
    out.partition += r.partition;
    out.instances += r.instances;
  }
  compute_ratios(out);
  return out;
}

MetricsReport macro_aggregate(const std::vector<MetricsReport>& reports) {
  MetricsReport out = aggregate(reports);
  for (const auto& col : table_columns()) {
    double sum = 0.0;
    size_t n = 0;
    for (const auto& r : reports) {
      if (const auto& v = r.*(col.field)) {
        sum += *v;
        ++n;
      }
    }
    out.*(col.field) = n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt;
  }
  double sum = 0.0;
  size_t n = 0;
  for (const auto& r : reports) {
    if (r.any_source) {
      sum += *r.any_source;
      ++n;
    }
  }
  out.any_source = n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt;
  return out;
}

std::optional<double> any_source_rate(const std::vector<AttributionRecord>& records,
                                      size_t generated_count) {
  const SourcePartition p = partition(records, generated_count);
  return ratio(p.total() - p.none(), p.total());
}

const std::vector<MetricColumn>& table_columns() {
  static const std::vector<MetricColumn> kColumns = {
      {"f1", &MetricsReport::f1_ref}, {"prec", &MetricsReport::prec_ref},
      {"rec", &MetricsReport::rec_ref}, {"sk", &MetricsReport::sk},
      {"pkp", &MetricsReport::pkp},   {"pr", &MetricsReport::pr},
      {"cu", &MetricsReport::cu},     {"uu", &MetricsReport::uu},
  };
  return kColumns;
}

std::optional<double> metric_value(const MetricsReport& r, std::string_view name) {
  for (const auto& col : table_columns()) {
    if (name == col.name) return r.*(col.field);
  }
  if (name == "any_source") return r.any_source;
  throw DataError("unknown metric '" + std::string(name) + "'");
}

void to_json(json& j, const MetricCounts& c) {
  j = json{{"generated", c.generated}, {"reference", c.reference},
           {"s_r", c.s_r},             {"s_c", c.s_c},
           {"s_u", c.s_u},             {"parametric", c.parametric},
           {"r_param", c.r_param},     {"any_source", c.any_source}};
}

void from_json(const json& j, MetricCounts& c) {
  c.generated = j.at("generated").get<size_t>();
  c.reference = j.at("reference").get<size_t>();
  c.s_r = j.at("s_r").get<size_t>();
  c.s_c = j.at("s_c").get<size_t>();
  c.s_u = j.at("s_u").get<size_t>();
  c.parametric = j.at("parametric").get<size_t>();
  c.r_param = j.at("r_param").get<size_t>();
  c.any_source = j.at("any_source").get<size_t>();
}

void to_json(json& j, const MetricsReport& r) {
  j = json{{"scope", r.scope == Scope::kInstance ? "instance" : "aggregate"},
           {"model_tag", r.model_tag},
           {"condition", to_string(r.condition)},
           {"instances", r.instances},
           {"counts", r.counts}};
  if (!r.instance_id.empty()) j["instance_id"] = r.instance_id;
  json regions = json::object();
  for (uint8_t m = 0; m < 8; ++m) regions[std::string(region_label(m))] = r.partition.regions[m];
  j["regions"] = regions;
  for (const auto& col : table_columns()) j[col.name] = optional_json(r.*(col.field));
  j["any_source"] = optional_json(r.any_source);
}

void from_json(const json& j, MetricsReport& r) {
  r.scope = j.at("scope").get<std::string>() == "instance" ? Scope::kInstance : Scope::kAggregate;
  r.model_tag = j.at("model_tag").get<std::string>();
  r.condition = parse_condition(j.at("condition").get<std::string>());
  r.instances = j.value("instances", size_t{1});
  r.instance_id = j.value("instance_id", std::string());
  r.counts = j.at("counts").get<MetricCounts>();
  if (j.contains("regions")) {
    for (uint8_t m = 0; m < 8; ++m) {
      r.partition.regions[m] = j.at("regions").value(std::string(region_label(m)), size_t{0});
    }
  }
  for (const auto& col : table_columns()) r.*(col.field) = optional_from(j, col.name);
  r.any_source = optional_from(j, "any_source");
}

std::string metrics_csv(const std::vector<MetricsReport>& reports) {
  std::vector<std::string> header = {"model", "condition", "instances"};
  for (const auto& col : table_columns()) header.push_back(col.name);
  for (const char* h : {"any_source", "generated", "reference", "s_r", "s_c", "s_u",
                        "parametric", "r_param"}) {
    header.push_back(h);
  }
  std::string out = csv_row(header);
  for (const auto& r : reports) {
    std::vector<std::string> row = {r.model_tag, std::string(to_string(r.condition)),
                                    std::to_string(r.instances)};
    auto cell = [](const std::optional<double>& v) {
      return v ? format_fixed(*v, 6) : std::string("n/a");
    };
    for (const auto& col : table_columns()) row.push_back(cell(r.*(col.field)));
    row.push_back(cell(r.any_source));
    const MetricCounts& c = r.counts;
    for (size_t n : {c.generated, c.reference, c.s_r, c.s_c, c.s_u, c.parametric, c.r_param}) {
      row.push_back(std::to_string(n));
    }
    out += csv_row(row);
  }
  return out;
}

}  // namespace tripleval
