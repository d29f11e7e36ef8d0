#include "tripleval/humaneval.h"

#include <algorithm>
#include <set>

#include "tripleval/errors.h"
#include "tripleval/hashing.h"

namespace tripleval {
namespace {

std::string task_id(const char* prefix, size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%04zu", prefix, i + 1);
  return buf;
}

json triple_view(const Triple& t) {
  json j = {{"id", t.id}, {"subject", t.subject}, {"predicate", t.predicate},
            {"object", t.object}, {"source", to_string(t.source)},
            {"instance_id", t.instance_id}};
  if (t.raw_span) j["excerpt"] = *t.raw_span;
  return j;
}

Triple triple_from_view(const json& j) {
  Triple t;
  t.id = j.at("id").get<std::string>();
  t.subject = j.at("subject").get<std::string>();
  t.predicate = j.at("predicate").get<std::string>();
  t.object = j.at("object").get<std::string>();
  t.source = parse_source_kind(j.at("source").get<std::string>());
  t.instance_id = j.value("instance_id", std::string());
  if (j.contains("excerpt")) t.raw_span = j.at("excerpt").get<std::string>();
  return t;
}

// Label with its agreement test for one task.
struct LabelRule {
  const char* name;
  bool (*member)(SourceSet);
};

constexpr LabelRule kLabelRules[] = {
    {"reference", [](SourceSet s) { return s.contains(SourceKind::kReference); }},
    {"context", [](SourceSet s) { return s.contains(SourceKind::kContext); }},
    {"user", [](SourceSet s) { return s.contains(SourceKind::kUserQuery); }},
    {"none", [](SourceSet s) { return s.empty(); }},
};

}  // namespace

void to_json(json& j, const ExtractionTask& t) {
  json triples = json::array();
  for (size_t i = 0; i < t.triples.size(); ++i) {
    json v = triple_view(t.triples[i]);
    v["triple_index"] = i;
    v["unit_triple_index"] = t.triple_indices.at(i);
    triples.push_back(std::move(v));
  }
  j = json{{"type", "extraction"},
           {"task_id", t.task_id},
           {"unit_id", t.unit_id},
           {"source", to_string(t.source)},
           {"source_text", t.source_text},
           {"triples", triples},
           {"annotator", t.annotator}};
}

void from_json(const json& j, ExtractionTask& t) {
  if (j.value("type", "") != "extraction") throw DataError("not an extraction task");
  t.task_id = j.at("task_id").get<std::string>();
  t.unit_id = j.at("unit_id").get<std::string>();
  t.source = parse_source_kind(j.at("source").get<std::string>());
  t.source_text = j.at("source_text").get<std::string>();
  t.annotator = j.value("annotator", std::string());
  t.triples.clear();
  t.triple_indices.clear();
  for (const auto& v : j.at("triples")) {
    t.triples.push_back(triple_from_view(v));
    t.triple_indices.push_back(v.value("unit_triple_index", 0));
  }
}

void to_json(json& j, const AttributionTask& t) {
  json cands = json::array();
  for (const auto& c : t.candidates) {
    json v = triple_view(c.triple);
    v["candidate_index"] = c.candidate_index;
    v["rank"] = c.candidate.rank;
    v["similarity"] = c.candidate.similarity;
    cands.push_back(std::move(v));
  }
  j = json{{"type", "attribution"},
           {"task_id", t.task_id},
           {"unit_id", t.unit_id},
           {"generated", triple_view(t.generated)},
           {"candidates", cands},
           {"annotator", t.annotator}};
}

void from_json(const json& j, AttributionTask& t) {
  if (j.value("type", "") != "attribution") throw DataError("not an attribution task");
  t.task_id = j.at("task_id").get<std::string>();
  t.unit_id = j.at("unit_id").get<std::string>();
  t.generated = triple_from_view(j.at("generated"));
  t.annotator = j.value("annotator", std::string());
  t.candidates.clear();
  for (const auto& v : j.at("candidates")) {
    CandidateView c;
    c.candidate_index = v.at("candidate_index").get<int>();
    c.triple = triple_from_view(v);
    c.candidate.source = c.triple.source;
    c.candidate.triple_id = c.triple.id;
    c.candidate.rank = v.at("rank").get<int>();
    c.candidate.similarity = v.value("similarity", 0.0);
    t.candidates.push_back(std::move(c));
  }
}

std::vector<ExtractionTask> sample_extraction_tasks(const std::vector<ExtractionUnit>& units,
                                                    size_t n, uint64_t seed,
                                                    size_t max_triples) {
  std::vector<const ExtractionUnit*> population;
  for (const auto& u : units) {
    if (!u.triples.empty()) population.push_back(&u);
  }
  if (n > population.size()) {
    throw DataError("sample_extraction_tasks: " + std::to_string(n) + " tasks requested, " +
                    std::to_string(population.size()) + " units with triples available");
  }
  DeterministicRng rng(seed);
  std::vector<ExtractionTask> out;
  const auto picks = rng.sample_indices(population.size(), n);
  for (size_t i = 0; i < picks.size(); ++i) {
    const ExtractionUnit& u = *population[picks[i]];
    ExtractionTask t;
    t.task_id = task_id("ext", i);
    t.unit_id = u.unit_id;
    t.source = u.source;
    t.source_text = u.text;
    std::vector<size_t> which =
        rng.sample_indices(u.triples.size(), std::min(max_triples, u.triples.size()));
    std::sort(which.begin(), which.end());
    for (size_t k : which) {
      t.triples.push_back(u.triples[k]);
      t.triple_indices.push_back(static_cast<int>(k));
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<AttributionTask> sample_attribution_tasks(const std::vector<AttributionUnit>& units,
                                                      size_t n, uint64_t seed) {
  if (n > units.size()) {
    throw DataError("sample_attribution_tasks: " + std::to_string(n) + " tasks requested, " +
                    std::to_string(units.size()) + " generated triples available");
  }
  DeterministicRng rng(seed);
  std::vector<AttributionTask> out;
  const auto picks = rng.sample_indices(units.size(), n);
  for (size_t i = 0; i < picks.size(); ++i) {
    const AttributionUnit& u = units[picks[i]];
    out.push_back(AttributionTask{task_id("att", i), u.unit_id, u.generated, u.candidates, ""});
  }
  return out;
}

LabelSet parse_labels(const std::vector<json>& rows, const std::string& origin) {
  LabelSet out;
  std::map<std::pair<std::string, int>, bool> seen_ext, seen_att;
  for (size_t i = 0; i < rows.size(); ++i) {
    const std::string where = origin + ":" + std::to_string(i + 1);
    const json& row = rows[i];
    try {
      const std::string task = row.at("task_id").get<std::string>();
      if (row.contains("candidate_index")) {
        CandidateLabel l{task, row.at("candidate_index").get<int>(), row.at("label").get<bool>()};
        auto [it, fresh] = seen_att.emplace(std::make_pair(task, l.candidate_index), l.label);
        if (!fresh && it->second != l.label) throw DataError(where + ": conflicting label");
        if (fresh) out.attribution.push_back(std::move(l));
      } else if (row.contains("triple_index")) {
        ExtractionLabel l{task, row.at("triple_index").get<int>(),
                          row.at("faithful").get<bool>()};
        auto [it, fresh] = seen_ext.emplace(std::make_pair(task, l.triple_index), l.faithful);
        if (!fresh && it->second != l.faithful) throw DataError(where + ": conflicting label");
        if (fresh) out.extraction.push_back(std::move(l));
      } else {
        throw DataError(where + ": neither candidate_index nor triple_index");
      }
    } catch (const json::exception& e) {
      throw DataError(where + ": bad label row: " + e.what());
    }
  }
  return out;
}

LabelSet read_labels(const std::string& path) { return parse_labels(read_jsonl(path), path); }

std::vector<json> labels_to_rows(const LabelSet& labels) {
  std::vector<json> rows;
  for (const auto& l : labels.extraction) {
    rows.push_back({{"task_id", l.task_id}, {"triple_index", l.triple_index},
                    {"faithful", l.faithful}});
  }
  for (const auto& l : labels.attribution) {
    rows.push_back({{"task_id", l.task_id}, {"candidate_index", l.candidate_index},
                    {"label", l.label}});
  }
  return rows;
}

ExtractionScore score_extraction(const std::vector<ExtractionTask>& tasks,
                                 const std::vector<ExtractionLabel>& labels) {
  std::map<std::pair<std::string, int>, bool> by_key;
  for (const auto& l : labels) by_key[{l.task_id, l.triple_index}] = l.faithful;
  ExtractionScore s;
  std::vector<std::string> missing;
  for (const auto& t : tasks) {
    bool complete = true;
    for (size_t i = 0; i < t.triples.size(); ++i) {
      auto it = by_key.find({t.task_id, static_cast<int>(i)});
      if (it == by_key.end()) {
        complete = false;
        continue;
      }
      ++s.total;
      if (it->second) ++s.faithful;
    }
    if (!complete) missing.push_back(t.task_id);
  }
  if (!missing.empty()) throw IncompleteLabelsError(std::move(missing));
  if (s.total == 0) throw DataError("score_extraction: no labeled triples");
  s.precision = static_cast<double>(s.faithful) / static_cast<double>(s.total);
  return s;
}

ValidationSummary score_attribution(const std::vector<AttributionTask>& tasks,
                                    const std::vector<CandidateLabel>& labels,
                                    const std::map<std::string, AttributionRecord>& pipeline) {
  std::map<std::pair<std::string, int>, bool> by_key;
  for (const auto& l : labels) by_key[{l.task_id, l.candidate_index}] = l.label;

  std::vector<std::string> missing;
  std::vector<std::pair<SourceSet, SourceSet>> pairs;  // (human, pipeline)
  for (const auto& t : tasks) {
    SourceSet human;
    bool complete = true;
    for (const auto& c : t.candidates) {
      auto it = by_key.find({t.task_id, c.candidate_index});
      if (it == by_key.end()) {
        complete = false;
      } else if (it->second) {
        human.insert(c.candidate.source);
      }
    }
    if (!complete) {
      missing.push_back(t.task_id);
      continue;
    }
    auto rec = pipeline.find(t.generated.id);
    if (rec == pipeline.end()) {
      throw DataError("score_attribution: no pipeline record for " + t.generated.id);
    }
    pairs.emplace_back(human, rec->second.supported_by);
  }
  if (!missing.empty()) throw IncompleteLabelsError(std::move(missing));
  if (pairs.empty()) throw DataError("score_attribution: no tasks");

  ValidationSummary s;
  const double n = static_cast<double>(pairs.size());
  double macro = 0.0;
  for (const auto& rule : kLabelRules) {
    LabelAccuracy acc;
    acc.total = pairs.size();
    for (const auto& [h, p] : pairs) {
      if (rule.member(h) == rule.member(p)) ++acc.agree;
    }
    acc.accuracy = static_cast<double>(acc.agree) / n;
    macro += acc.accuracy;
    s.per_label[rule.name] = acc;
  }
  s.macro_per_label = macro / static_cast<double>(std::size(kLabelRules));
  s.overall.total = pairs.size();
  for (const auto& [h, p] : pairs) {
    if (h == p) ++s.overall.agree;
  }
  s.overall.accuracy = static_cast<double>(s.overall.agree) / n;
  return s;
}

void to_json(json& j, const ValidationSummary& s) {
  auto acc_json = [](const LabelAccuracy& a) {
    return json{{"accuracy", a.accuracy}, {"agree", a.agree}, {"total", a.total}};
  };
  j = json::object();
  if (s.extraction) {
    j["extraction_precision"] = {{"precision", s.extraction->precision},
                                 {"faithful", s.extraction->faithful},
                                 {"total", s.extraction->total}};
  }
  json per = json::object();
  for (const auto& [label, acc] : s.per_label) per[label] = acc_json(acc);
  j["attribution_accuracy_per_label"] = per;
  j["attribution_accuracy_macro"] = s.macro_per_label;
  j["overall_attribution_accuracy"] = acc_json(s.overall);
}

LabelSet pseudo_labels(const std::vector<ExtractionTask>& extraction_tasks,
                       const std::vector<AttributionTask>& attribution_tasks,
                       const std::map<std::string, AttributionRecord>& pipeline) {
  LabelSet out;
  for (const auto& t : extraction_tasks) {
    for (size_t i = 0; i < t.triples.size(); ++i) {
      out.extraction.push_back({t.task_id, static_cast<int>(i), true});
    }
  }
  for (const auto& t : attribution_tasks) {
    auto rec = pipeline.find(t.generated.id);
    if (rec == pipeline.end()) {
      throw DataError("pseudo_labels: no pipeline record for " + t.generated.id);
    }
    std::set<int> chosen;
    for (const auto& e : rec->second.evidence) chosen.insert(e.candidate_index);
    for (const auto& c : t.candidates) {
      out.attribution.push_back({t.task_id, c.candidate_index, chosen.count(c.candidate_index) > 0});
    }
  }
  return out;
}

}  // namespace tripleval
