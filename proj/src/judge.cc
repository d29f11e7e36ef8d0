#include "tripleval/judge.h"

#include <algorithm>
#include <set>

#include "tripleval/errors.h"
#include "tripleval/hashing.h"
#include "tripleval/strings.h"

namespace tripleval {
namespace {

std::string strip_fences(std::string_view raw) {
  std::string_view s = trim(raw);
  if (s.substr(0, 3) != "```") return std::string(s);
  size_t nl = s.find('\n');
  if (nl == std::string_view::npos) return std::string();
  s.remove_prefix(nl + 1);
  size_t close = s.rfind("```");
  if (close != std::string_view::npos) s = s.substr(0, close);
  return std::string(trim(s));
}

json parse_verdict_document(const std::string& raw) {
  const std::string text = strip_fences(raw);
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) {
    size_t open = text.find('[');
    size_t close = text.rfind(']');
    if (open != std::string::npos && close != std::string::npos && close > open) {
      doc = json::parse(text.substr(open, close - open + 1), nullptr, false);
    }
  }
  if (doc.is_discarded()) {
    size_t open = text.find('{');
    size_t close = text.rfind('}');
    if (open != std::string::npos && close != std::string::npos && close > open) {
      doc = json::parse(text.substr(open, close - open + 1), nullptr, false);
    }
  }
  if (doc.is_discarded()) throw ParseError("judge output is not JSON");
  if (doc.is_object()) {
    if (doc.contains("verdicts") && doc.at("verdicts").is_array()) return doc.at("verdicts");
    return json::array({doc});
  }
  if (!doc.is_array()) throw ParseError("judge output is neither an array nor an object");
  return doc;
}

// Reads a single-quoted field starting at s[pos] == '\''. Advances pos past
// the closing quote.
std::string read_quoted(std::string_view s, size_t& pos) {
  if (pos >= s.size() || s[pos] != '\'') throw ParseError("expected quoted field");
  std::string out;
  for (++pos; pos < s.size(); ++pos) {
    char c = s[pos];
    if (c == '\\' && pos + 1 < s.size()) {
      char n = s[++pos];
      out += n == 'n' ? '\n' : n;
    } else if (c == '\'') {
      ++pos;
      return out;
    } else {
      out += c;
    }
  }
  throw ParseError("unterminated quoted field");
}

std::array<std::string, 3> read_spo(std::string_view line, size_t pos) {
  std::array<std::string, 3> out;
  const char* keys[] = {"s=", "p=", "o="};
  for (int i = 0; i < 3; ++i) {
    size_t at = line.find(keys[i], pos);
    if (at == std::string_view::npos) throw ParseError("missing field in prompt line");
    pos = at + 2;
    out[i] = read_quoted(line, pos);
  }
  return out;
}

struct BatchOutcome {
  std::vector<JudgedRecord> records;
  bool ok = false;
  std::string error;
};

}  // namespace

GroundingTemplate GroundingTemplate::load(const std::string& dir) {
  GroundingTemplate t;
  t.prompt = read_file(dir + "/grounding.txt");
  t.repair = read_file(dir + "/repair.txt");
  for (const char* ph : {"{{indices}}", "{{items}}"}) {
    if (t.prompt.find(ph) == std::string::npos) {
      throw ConfigError(dir + "/grounding.txt lacks " + ph);
    }
  }
  return t;
}

std::string GroundingTemplate::hash() const { return sha256_fields({prompt, repair}); }

std::string quote_field(std::string_view value) {
  std::string out = "'";
  for (char c : value) {
    if (c == '\'' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else if (c != '\r') {
      out += c;
    }
  }
  out += '\'';
  return out;
}

std::string render_batch_indices(const MicroBatch& batch) {
  std::string out = "{";
  for (size_t i = 0; i < batch.items.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(batch.items[i].index);
  }
  return out + "}";
}

std::string render_grounding_items(const MicroBatch& batch) {
  std::string out;
  for (const auto& item : batch.items) {
    const Triple& g = item.generated;
    out += "--- GENERATED index: " + std::to_string(item.index) + " ---\n\n";
    out += "GENERATED: s=" + quote_field(g.subject) + ", p=" + quote_field(g.predicate) +
           ", o=" + quote_field(g.object) + "\n\n";
    out += "CANDIDATES:\n";
    const auto& cands = item.candidates.candidates;
    for (size_t i = 0; i < cands.size(); ++i) {
      const Triple& t = item.candidate_triples.at(i);
      out += "[" + std::to_string(i) + "] (" + std::string(to_string(cands[i].source)) + "#" +
             std::to_string(cands[i].rank) + ", s=" + quote_field(t.subject) +
             ", p=" + quote_field(t.predicate) + ", o=" + quote_field(t.object) + ")\n";
    }
    if (cands.empty()) out += "(none)\n";
    out += "\n";
  }
  return out;
}

std::string render_grounding_prompt(const MicroBatch& batch, const GroundingTemplate& tmpl) {
  if (batch.items.empty()) throw StructuralError("render_grounding_prompt: empty batch");
  return render_placeholders(tmpl.prompt, {{"indices", render_batch_indices(batch)},
                                           {"items", render_grounding_items(batch)}});
}

ParsedVerdicts parse_verdicts(const std::string& raw, const MicroBatch& batch) {
  json doc = parse_verdict_document(raw);
  std::map<int, const JudgeItem*> by_index;
  for (const auto& item : batch.items) by_index[item.index] = &item;

  ParsedVerdicts out;
  std::map<int, JudgeVerdict> seen;
  for (const auto& el : doc) {
    if (!el.is_object() || !el.contains("index") || !el.at("index").is_number_integer()) {
      throw ParseError("verdict without an integer \"index\"");
    }
    const int index = el.at("index").get<int>();
    auto it = by_index.find(index);
    if (it == by_index.end()) {
      throw ParseError("verdict for index " + std::to_string(index) + " not in batch");
    }
    if (seen.count(index)) {
      throw ParseError("duplicate verdict for index " + std::to_string(index));
    }
    if (!el.contains("evidence") || !el.at("evidence").is_array()) {
      throw ParseError("verdict " + std::to_string(index) + " without an \"evidence\" list");
    }
    const int shown = static_cast<int>(it->second->candidates.candidates.size());
    JudgeVerdict v;
    v.index = index;
    std::set<int> have;
    for (const auto& e : el.at("evidence")) {
      if (!e.is_number_integer()) {
        ++out.dropped_indices;
        continue;
      }
      const int ci = e.get<int>();
      if (ci < 0 || ci >= shown) {
        ++out.dropped_indices;
        continue;
      }
      if (have.insert(ci).second) v.evidence.push_back(ci);
    }
    seen.emplace(index, std::move(v));
  }
  std::vector<int> missing;
  for (const auto& item : batch.items) {
    auto it = seen.find(item.index);
    if (it == seen.end()) {
      missing.push_back(item.index);
    } else {
      out.verdicts.push_back(std::move(it->second));
    }
  }
  if (!missing.empty()) {
    std::string msg = "no verdict for index";
    for (int m : missing) msg += " " + std::to_string(m);
    throw ParseError(msg);
  }
  return out;
}

AttributionRecord record_from_verdict(const JudgeItem& item, const JudgeVerdict& verdict) {
  std::vector<Evidence> evidence;
  for (int ci : verdict.evidence) {
    const Candidate& c = item.candidates.candidates.at(static_cast<size_t>(ci));
    evidence.push_back(Evidence{c.source, c.rank, ci});
  }
  return make_record(item.generated.id, std::move(evidence));
}

json grounding_response_schema() {
  json item = {{"type", "object"},
               {"properties",
                {{"index", {{"type", "integer"}}},
                 {"evidence", {{"type", "array"}, {"items", {{"type", "integer"}}}}}}},
               {"required", {"index", "evidence"}},
               {"additionalProperties", false}};
  return json{{"type", "array"}, {"items", item}};
}

JudgeStats& JudgeStats::operator+=(const JudgeStats& o) {
  batches += o.batches;
  calls += o.calls;
  repairs += o.repairs;
  split_retries += o.split_retries;
  dropped_indices += o.dropped_indices;
  comparisons += o.comparisons;
  return *this;
}

void to_json(json& j, const JudgeStats& s) {
  j = json{{"batches", s.batches},
           {"calls", s.calls},
           {"repairs", s.repairs},
           {"split_retries", s.split_retries},
           {"dropped_indices", s.dropped_indices},
           {"comparisons", s.comparisons}};
}

void to_json(json& j, const JudgedRecord& r) {
  j = json(r.record);
  j["batch_id"] = r.batch_id;
  j["raw_hash"] = r.raw_hash;
}

void from_json(const json& j, JudgedRecord& r) {
  r.record = j.get<AttributionRecord>();
  r.batch_id = j.value("batch_id", std::string());
  r.raw_hash = j.value("raw_hash", std::string());
}

namespace {

BatchOutcome judge_batch(Gateway& gateway, const GroundingTemplate& tmpl, MicroBatch& batch,
                         JudgeStats& stats) {
  BatchOutcome outcome;
  batch.rendered_prompt = render_grounding_prompt(batch, tmpl);
  ChatRequest req;
  req.messages = {{"user", batch.rendered_prompt}};
  req.response_schema = grounding_response_schema();
  req.schema_name = "verdicts";

  ChatResult result = gateway.chat_complete_structured(req);
  ++stats.calls;
  ParsedVerdicts parsed;
  try {
    parsed = parse_verdicts(result.text, batch);
  } catch (const ParseError& e) {
    ChatRequest repair = req;
    repair.messages.push_back({"assistant", result.text});
    repair.messages.push_back(
        {"user", render_placeholders(tmpl.repair, {{"error", e.what()},
                                                   {"output", result.text},
                                                   {"indices", render_batch_indices(batch)}})});
    result = gateway.chat_complete_structured(repair);
    ++stats.calls;
    ++stats.repairs;
    try {
      parsed = parse_verdicts(result.text, batch);
    } catch (const ParseError& e2) {
      outcome.error = e2.what();
      return outcome;
    }
  }
  stats.dropped_indices += parsed.dropped_indices;
  for (size_t i = 0; i < batch.items.size(); ++i) {
    outcome.records.push_back(JudgedRecord{
        record_from_verdict(batch.items[i], parsed.verdicts[i]), batch.batch_id,
        result.raw_hash});
  }
  outcome.ok = true;
  return outcome;
}

}  // namespace

std::vector<JudgedRecord> attribute_instance(Gateway& gateway, const GroundingTemplate& tmpl,
                                             const std::string& unit_id,
                                             const std::vector<JudgeItem>& items,
                                             const JudgeOptions& options, JudgeStats* stats) {
  JudgeStats local;
  std::set<int> indices;
  for (const auto& item : items) {
    if (!indices.insert(item.index).second) {
      throw StructuralError(unit_id + ": duplicate GENERATED index " +
                            std::to_string(item.index));
    }
    if (item.candidate_triples.size() != item.candidates.candidates.size()) {
      throw StructuralError(unit_id + ": candidate triples misaligned for index " +
                            std::to_string(item.index));
    }
    local.comparisons += item.candidates.candidates.size();
  }

  const size_t size = std::max<size_t>(1, options.batch_size);
  std::vector<JudgedRecord> out;
  out.reserve(items.size());
  for (size_t start = 0, b = 0; start < items.size(); start += size, ++b) {
    MicroBatch batch;
    batch.batch_id = unit_id + "#b" + std::to_string(b);
    batch.items.assign(items.begin() + start,
                       items.begin() + std::min(items.size(), start + size));
    ++local.batches;
    BatchOutcome outcome = judge_batch(gateway, tmpl, batch, local);
    if (!outcome.ok) {
      if (batch.items.size() < 2) {
        if (stats) *stats += local;
        throw JudgeError(batch.batch_id + ": " + outcome.error, batch.batch_id);
      }
      ++local.split_retries;
      const size_t half = (batch.items.size() + 1) / 2;
      outcome.records.clear();
      for (int part = 0; part < 2; ++part) {
        MicroBatch sub;
        sub.batch_id = batch.batch_id + "." + std::to_string(part);
        auto first = batch.items.begin() + (part == 0 ? 0 : half);
        auto last = part == 0 ? batch.items.begin() + half : batch.items.end();
        sub.items.assign(first, last);
        ++local.batches;
        BatchOutcome sub_outcome = judge_batch(gateway, tmpl, sub, local);
        if (!sub_outcome.ok) {
          if (stats) *stats += local;
          throw JudgeError(sub.batch_id + ": " + sub_outcome.error +
                               " (after repair and half-size retry)",
                           batch.batch_id);
        }
        for (auto& r : sub_outcome.records) outcome.records.push_back(std::move(r));
      }
    }
    for (auto& r : outcome.records) out.push_back(std::move(r));
  }
  if (stats) *stats += local;
  return out;
}

std::vector<PromptItem> parse_grounding_prompt(const std::string& prompt) {
  const size_t section = prompt.find("=== MICRO-BATCH ===");
  if (section == std::string::npos) throw ParseError("no MICRO-BATCH section");
  const size_t end = prompt.find("=== OUTPUT FORMAT ===", section);
  std::string_view body = std::string_view(prompt).substr(
      section, end == std::string::npos ? std::string::npos : end - section);

  std::vector<PromptItem> items;
  size_t pos = 0;
  while (pos < body.size()) {
    size_t nl = body.find('\n', pos);
    if (nl == std::string_view::npos) nl = body.size();
    std::string_view line = trim(body.substr(pos, nl - pos));
    pos = nl + 1;

    constexpr std::string_view kHeader = "--- GENERATED index: ";
    if (line.substr(0, kHeader.size()) == kHeader) {
      PromptItem item;
      item.index = std::stoi(std::string(line.substr(kHeader.size())));
      items.push_back(std::move(item));
    } else if (line.substr(0, 11) == "GENERATED: ") {
      if (items.empty()) throw ParseError("GENERATED line before its header");
      items.back().generated = read_spo(line, 11);
    } else if (!line.empty() && line.front() == '[' && !items.empty()) {
      size_t open = line.find('(');
      size_t comma = line.find(',', open);
      if (open == std::string_view::npos || comma == std::string_view::npos) continue;
      items.back().candidate_labels.emplace_back(line.substr(open + 1, comma - open - 1));
      items.back().candidates.push_back(read_spo(line, comma));
    }
  }
  return items;
}

}  // namespace tripleval
