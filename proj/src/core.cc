#include "tripleval/core.h"

#include <algorithm>
#include <unordered_set>

#include "tripleval/errors.h"
#include "tripleval/hashing.h"
#include "tripleval/strings.h"

namespace tripleval {

std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::kUserQuery: return "user";
    case SourceKind::kContext: return "context";
    case SourceKind::kReference: return "reference";
    case SourceKind::kGenerated: return "generated";
  }
  return "unknown";
}

SourceKind parse_source_kind(std::string_view label) {
  if (label == "user") return SourceKind::kUserQuery;
  if (label == "context") return SourceKind::kContext;
  if (label == "reference") return SourceKind::kReference;
  if (label == "generated") return SourceKind::kGenerated;
  throw DataError("unknown source kind '" + std::string(label) + "'");
}

std::string_view to_string(Condition condition) {
  switch (condition) {
    case Condition::kNa: return "na";
    case Condition::kRelevant: return "relevant";
    case Condition::kIrrelevant: return "irrelevant";
    case Condition::kNoisy: return "noisy";
  }
  return "unknown";
}

Condition parse_condition(std::string_view label) {
  if (label == "na" || label == "n/a") return Condition::kNa;
  if (label == "relevant") return Condition::kRelevant;
  if (label == "irrelevant") return Condition::kIrrelevant;
  if (label == "noisy") return Condition::kNoisy;
  throw DataError("unknown condition '" + std::string(label) + "'");
}

std::string triple_id(std::string_view instance_id, SourceKind source,
                      std::string_view subject, std::string_view predicate,
                      std::string_view object) {
  // 16 hex chars is plenty within one run and keeps artifacts readable.
  return sha256_fields({instance_id, to_string(source), subject, predicate, object})
      .substr(0, 16);
}

Triple make_triple(std::string subject, std::string predicate, std::string object,
                   SourceKind source, std::string instance_id,
                   std::optional<std::string> raw_span) {
  if (trim(subject).empty() || trim(predicate).empty() || trim(object).empty()) {
    throw DataError("triple fields must be non-empty");
  }
  Triple t;
  t.id = triple_id(instance_id, source, subject, predicate, object);
  t.subject = std::move(subject);
  t.predicate = std::move(predicate);
  t.object = std::move(object);
  t.source = source;
  t.instance_id = std::move(instance_id);
  t.raw_span = std::move(raw_span);
  return t;
}

std::string dedup_key(const Triple& t) {
  std::string key = ascii_lower(collapse_whitespace(t.subject));
  key += '\x1f';
  key += ascii_lower(collapse_whitespace(t.predicate));
  key += '\x1f';
  key += ascii_lower(collapse_whitespace(t.object));
  return key;
}

std::vector<Triple> dedup_triples(const std::vector<Triple>& triples) {
  std::vector<Triple> out;
  if (triples.empty()) return out;
  const auto& first = triples.front();
  std::unordered_set<std::string> seen;
  for (const auto& t : triples) {
    if (t.source != first.source || t.instance_id != first.instance_id) {
      throw StructuralError("dedup_triples: mixed sources or instances");
    }
    if (seen.insert(dedup_key(t)).second) out.push_back(t);
  }
  return out;
}

uint8_t SourceSet::bit_for(SourceKind kind) {
  switch (kind) {
    case SourceKind::kReference: return kReferenceBit;
    case SourceKind::kContext: return kContextBit;
    case SourceKind::kUserQuery: return kUserBit;
    case SourceKind::kGenerated: break;
  }
  throw StructuralError("generated text is not an evidence source");
}

std::vector<SourceKind> SourceSet::kinds() const {
  std::vector<SourceKind> out;
  if (mask_ & kReferenceBit) out.push_back(SourceKind::kReference);
  if (mask_ & kContextBit) out.push_back(SourceKind::kContext);
  if (mask_ & kUserBit) out.push_back(SourceKind::kUserQuery);
  return out;
}

void EvaluationInstance::validate() const {
  if (trim(user_query).empty()) throw DataError(instance_id + ": empty user query");
  if (trim(reference).empty()) throw DataError(instance_id + ": empty reference");
  if ((condition == Condition::kNa) != context_chunks.empty()) {
    throw DataError(instance_id + ": condition na requires empty context and vice versa");
  }
  if (!context_origins.empty() && context_origins.size() != context_chunks.size()) {
    throw DataError(instance_id + ": context origins do not match chunks");
  }
}

AttributionRecord make_record(std::string triple_id, std::vector<Evidence> evidence) {
  AttributionRecord r;
  r.triple_id = std::move(triple_id);
  for (const auto& e : evidence) r.supported_by.insert(e.source);
  r.evidence = std::move(evidence);
  return r;
}

size_t SourcePartition::total() const {
  size_t n = 0;
  for (size_t c : regions) n += c;
  return n;
}

size_t SourcePartition::support_count(SourceKind kind) const {
  const uint8_t bit = SourceSet::bit_for(kind);
  size_t n = 0;
  for (uint8_t mask = 0; mask < 8; ++mask) {
    if (mask & bit) n += regions[mask];
  }
  return n;
}

SourcePartition& SourcePartition::operator+=(const SourcePartition& other) {
  for (size_t i = 0; i < regions.size(); ++i) regions[i] += other.regions[i];
  return *this;
}

std::string_view region_label(uint8_t mask) {
  static constexpr std::array<std::string_view, 8> kLabels = {
      "none", "R", "C", "RC", "U", "RU", "CU", "RCU"};
  return kLabels[mask & 7];
}

SourcePartition partition(const std::vector<AttributionRecord>& records,
                          size_t total_generated) {
  if (records.size() != total_generated) {
    throw StructuralError("partition: " + std::to_string(records.size()) +
                          " records for " + std::to_string(total_generated) +
                          " generated triples");
  }
  std::unordered_set<std::string> ids;
  SourcePartition p;
  for (const auto& r : records) {
    if (!ids.insert(r.triple_id).second) {
      throw StructuralError("partition: duplicate triple_id " + r.triple_id);
    }
    ++p.regions[r.supported_by.mask()];
  }
  return p;
}

void to_json(json& j, const Triple& t) {
  j = json{{"id", t.id},
           {"subject", t.subject},
           {"predicate", t.predicate},
           {"object", t.object},
           {"source", to_string(t.source)},
           {"instance_id", t.instance_id}};
  if (t.raw_span) j["raw_span"] = *t.raw_span;
}

void from_json(const json& j, Triple& t) {
  t.subject = j.at("subject").get<std::string>();
  t.predicate = j.at("predicate").get<std::string>();
  t.object = j.at("object").get<std::string>();
  t.source = parse_source_kind(j.at("source").get<std::string>());
  t.instance_id = j.at("instance_id").get<std::string>();
  t.id = j.contains("id") ? j.at("id").get<std::string>()
                          : triple_id(t.instance_id, t.source, t.subject,
                                      t.predicate, t.object);
  if (j.contains("raw_span") && !j.at("raw_span").is_null()) {
    t.raw_span = j.at("raw_span").get<std::string>();
  } else {
    t.raw_span.reset();
  }
}

void to_json(json& j, const EvaluationInstance& inst) {
  j = json{{"instance_id", inst.instance_id},
           {"datapoint_id", inst.datapoint_id},
           {"user_query", inst.user_query},
           {"context_chunks", inst.context_chunks},
           {"context_origins", inst.context_origins},
           {"reference", inst.reference},
           {"condition", to_string(inst.condition)},
           {"model_tag", inst.model_tag}};
  if (inst.generated) j["generated"] = *inst.generated;
}

void from_json(const json& j, EvaluationInstance& inst) {
  inst.instance_id = j.at("instance_id").get<std::string>();
  inst.datapoint_id = j.value("datapoint_id", inst.instance_id);
  inst.user_query = j.at("user_query").get<std::string>();
  inst.context_chunks = j.value("context_chunks", std::vector<std::string>{});
  inst.context_origins = j.value("context_origins", std::vector<std::string>{});
  inst.reference = j.at("reference").get<std::string>();
  inst.condition = parse_condition(j.at("condition").get<std::string>());
  inst.model_tag = j.value("model_tag", std::string());
  if (j.contains("generated") && !j.at("generated").is_null()) {
    inst.generated = j.at("generated").get<std::string>();
  } else {
    inst.generated.reset();
  }
}

void to_json(json& j, const Evidence& e) {
  j = json{{"source", to_string(e.source)},
           {"rank", e.rank},
           {"candidate_index", e.candidate_index}};
}

void from_json(const json& j, Evidence& e) {
  e.source = parse_source_kind(j.at("source").get<std::string>());
  e.rank = j.at("rank").get<int>();
  e.candidate_index = j.value("candidate_index", -1);
}

void to_json(json& j, SourceSet s) {
  j = json::array();
  for (SourceKind k : s.kinds()) j.push_back(to_string(k));
}

void to_json(json& j, const AttributionRecord& r) {
  j = json{{"triple_id", r.triple_id}, {"evidence", r.evidence}};
  to_json(j["supported_by"], r.supported_by);
}

void from_json(const json& j, AttributionRecord& r) {
  r = make_record(j.at("triple_id").get<std::string>(),
                  j.at("evidence").get<std::vector<Evidence>>());
  SourceSet declared;
  for (const auto& label : j.value("supported_by", json::array())) {
    declared.insert(parse_source_kind(label.get<std::string>()));
  }
  if (!(declared == r.supported_by)) {
    throw DataError("attribution record " + r.triple_id +
                    ": supported_by disagrees with evidence");
  }
}

}  // namespace tripleval
