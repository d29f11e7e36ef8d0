#include "tripleval/extractor.h"

#include <array>
#include <regex>

#include "tripleval/errors.h"
#include "tripleval/hashing.h"
#include "tripleval/strings.h"

namespace tripleval {
namespace {

// Longest spellings first so ">=" is not read as ">".
constexpr std::array<std::pair<std::string_view, std::string_view>, 8> kComparators = {{
    {"\xE2\x89\xA5", "\xE2\x89\xA5"},  // ≥
    {"\xE2\x89\xA4", "\xE2\x89\xA4"},  // ≤
    {">=", "\xE2\x89\xA5"},
    {"<=", "\xE2\x89\xA4"},
    {"==", "="},
    {"=", "="},
    {"<", "<"},
    {">", ">"},
}};

// Returns the spelling length and its canonical form, or {0, ""}.
std::pair<size_t, std::string_view> leading_comparator(std::string_view s) {
  for (const auto& [spelling, canonical] : kComparators) {
    if (s.substr(0, spelling.size()) == spelling) return {spelling.size(), canonical};
  }
  return {0, {}};
}

std::string strip_code_fences(std::string_view raw) {
  std::string_view s = trim(raw);
  if (s.substr(0, 3) != "```") return std::string(s);
  size_t nl = s.find('\n');
  if (nl == std::string_view::npos) return std::string();
  s.remove_prefix(nl + 1);
  size_t close = s.rfind("```");
  if (close != std::string_view::npos) s = s.substr(0, close);
  return std::string(trim(s));
}

std::optional<std::string> string_field(const json& obj, std::string_view name) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (ascii_lower(it.key()) == name) {
      if (it->is_string()) return it->get<std::string>();
      if (it->is_number()) return it->dump();
      return std::nullopt;
    }
  }
  return std::nullopt;
}

bool record_from_object(const json& obj, int line_no, RawTripleLine& out) {
  if (!obj.is_object()) return false;
  auto s = string_field(obj, "subject");
  auto p = string_field(obj, "predicate");
  auto o = string_field(obj, "object");
  if (!s || !p || !o) return false;
  out = RawTripleLine{*s, *p, *o, line_no};
  return true;
}

// The array of records inside a parsed document, or nullptr.
const json* record_array(const json& doc) {
  if (doc.is_array()) return &doc;
  if (doc.is_object()) {
    for (const char* key : {"triples", "claims", "records"}) {
      if (doc.contains(key) && doc.at(key).is_array()) return &doc.at(key);
    }
  }
  return nullptr;
}

bool parse_json_document(const std::string& text, ParsedExtraction& out) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) return false;
  if (doc.is_object() && !record_array(doc)) {
    RawTripleLine rec;
    if (!record_from_object(doc, 1, rec)) return false;
    out.records.push_back(std::move(rec));
    return true;
  }
  const json* arr = record_array(doc);
  if (!arr) return false;
  int line = 0;
  for (const auto& el : *arr) {
    ++line;
    RawTripleLine rec;
    if (record_from_object(el, line, rec)) {
      out.records.push_back(std::move(rec));
    } else {
      ++out.garbage;
    }
  }
  return true;
}

struct LabeledGroup {
  std::optional<std::string> subject, predicate, object;
  int line_no = 0;
  bool any() const { return subject || predicate || object; }
  bool complete() const { return subject && predicate && object; }
};

std::string clean_labeled_value(std::string_view v) {
  std::string s(trim(v));
  // "Subject: System, Predicate: ..." leaves a trailing separator.
  while (!s.empty() && (s.back() == ',' || s.back() == ';' || s.back() == '|')) s.pop_back();
  return std::string(trim(s));
}

void parse_lines(const std::string& text, ParsedExtraction& out) {
  static const std::regex kLabel(R"((subject|predicate|object)\s*:)", std::regex::icase);
  LabeledGroup group;
  auto flush = [&] {
    if (group.complete()) {
      out.records.push_back(
          RawTripleLine{*group.subject, *group.predicate, *group.object, group.line_no});
    } else if (group.any()) {
      ++out.garbage;
    }
    group = LabeledGroup{};
  };

  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line(trim(std::string_view(text).substr(pos, nl - pos)));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line == "[" || line == "]" || line.substr(0, 3) == "```") continue;

    if (line.front() == '{') {
      std::string obj = line;
      while (!obj.empty() && (obj.back() == ',')) obj.pop_back();
      json doc = json::parse(obj, nullptr, false);
      RawTripleLine rec;
      if (!doc.is_discarded() && record_from_object(doc, line_no, rec)) {
        flush();
        out.records.push_back(std::move(rec));
      } else {
        ++out.garbage;
      }
      continue;
    }

    std::vector<std::pair<std::string, std::string>> fields;
    auto begin = std::sregex_iterator(line.begin(), line.end(), kLabel);
    std::vector<std::smatch> matches(begin, std::sregex_iterator());
    for (size_t i = 0; i < matches.size(); ++i) {
      const size_t value_start = matches[i].position(0) + matches[i].length(0);
      const size_t value_end =
          i + 1 < matches.size() ? static_cast<size_t>(matches[i + 1].position(0)) : line.size();
      fields.emplace_back(ascii_lower(matches[i].str(1)),
                          clean_labeled_value(std::string_view(line).substr(
                              value_start, value_end - value_start)));
    }
    if (fields.empty()) {
      ++out.garbage;
      continue;
    }
    for (auto& [label, value] : fields) {
      if (label == "subject") {
        flush();
        group.subject = std::move(value);
        group.line_no = line_no;
      } else if (label == "predicate") {
        if (group.predicate) flush();
        if (!group.any()) group.line_no = line_no;
        group.predicate = std::move(value);
      } else {
        if (group.object) flush();
        if (!group.any()) group.line_no = line_no;
        group.object = std::move(value);
      }
      if (group.complete()) flush();
    }
  }
  flush();
}

bool is_article(std::string_view w) { return w == "the" || w == "a" || w == "an"; }

std::string singularize(const std::string& word) {
  auto ends = [&](std::string_view suffix) {
    return word.size() >= suffix.size() &&
           std::string_view(word).substr(word.size() - suffix.size()) == suffix;
  };
  if (word.size() <= 3) return word;
  for (std::string_view keep : {"ss", "us", "is", "ics", "ous"}) {
    if (ends(keep)) return word;
  }
  if (ends("ies")) return word.substr(0, word.size() - 3) + "y";
  for (std::string_view es : {"sses", "ches", "shes", "xes", "zes"}) {
    if (ends(es)) return word.substr(0, word.size() - 2);
  }
  if (ends("s")) return word.substr(0, word.size() - 1);
  return word;
}

}  // namespace

ExtractionPromptBundle ExtractionPromptBundle::load(const std::string& dir) {
  ExtractionPromptBundle b;
  b.claim_definition = read_file(dir + "/claim_definition.txt");
  b.core_rules = read_file(dir + "/core_rules.txt");
  b.subject_rules = read_file(dir + "/subject_rules.txt");
  b.predicate_rules = read_file(dir + "/predicate_rules.txt");
  b.object_rules = read_file(dir + "/object_rules.txt");
  b.output_format_instructions = read_file(dir + "/output_format.txt");
  b.input_template = read_file(dir + "/input.txt");
  b.repair_template = read_file(dir + "/repair.txt");
  b.validate();
  return b;
}

void ExtractionPromptBundle::validate() const {
  const std::pair<const char*, const std::string*> parts[] = {
      {"claim_definition", &claim_definition},
      {"core_rules", &core_rules},
      {"subject_rules", &subject_rules},
      {"predicate_rules", &predicate_rules},
      {"object_rules", &object_rules},
      {"output_format_instructions", &output_format_instructions},
      {"input_template", &input_template},
      {"repair_template", &repair_template},
  };
  for (const auto& [name, text] : parts) {
    if (trim(*text).empty()) throw ConfigError(std::string("extraction prompt part empty: ") + name);
  }
  if (input_template.find("{{text}}") == std::string::npos) {
    throw ConfigError("extraction input template lacks {{text}}");
  }
}

std::string ExtractionPromptBundle::system_prompt() const {
  std::string out;
  for (const std::string* part : {&claim_definition, &core_rules, &subject_rules,
                                  &predicate_rules, &object_rules,
                                  &output_format_instructions}) {
    if (!out.empty()) out += "\n\n";
    out += trim(*part);
  }
  return out;
}

std::string ExtractionPromptBundle::hash() const {
  return sha256_fields({claim_definition, core_rules, subject_rules, predicate_rules,
                        object_rules, output_format_instructions, input_template,
                        repair_template});
}

ParsedExtraction parse_extraction_output(const std::string& raw) {
  ParsedExtraction out;
  const std::string text = strip_code_fences(raw);
  if (parse_json_document(text, out)) return out;

  // Prose around an array: try the outermost bracket span.
  size_t open = text.find('[');
  size_t close = text.rfind(']');
  if (open != std::string::npos && close != std::string::npos && close > open) {
    ParsedExtraction inner;
    if (parse_json_document(text.substr(open, close - open + 1), inner)) return inner;
  }

  parse_lines(text, out);
  if (out.records.empty()) {
    throw ParseError("no triple records found in extractor output (" +
                     std::to_string(out.garbage) + " unparseable line(s))");
  }
  return out;
}

bool object_starts_with_comparator(std::string_view object) {
  return leading_comparator(trim(object)).first > 0;
}

std::string normalize_subject(std::string_view subject) {
  std::string s = collapse_whitespace(subject);
  const size_t paren = s.find('(');
  std::string head = paren == std::string::npos ? s : s.substr(0, paren);
  std::string qualifier = paren == std::string::npos ? std::string() : s.substr(paren);

  std::vector<std::string> words = split_whitespace(ascii_lower(head));
  while (words.size() > 1 && is_article(words.front())) words.erase(words.begin());
  // Several parts in the qualifier mark a group subject, which stays plural.
  const bool group = qualifier.find(',') != std::string::npos;
  if (!words.empty() && !group) words.back() = singularize(words.back());

  std::string out = join(words, " ");
  std::string q(trim(qualifier));
  if (!q.empty()) out += out.empty() ? q : " " + q;
  return out;
}

std::string normalize_predicate(std::string_view predicate) {
  std::vector<std::string> words = split_whitespace(ascii_lower(predicate));
  if (words.empty()) return std::string();

  auto replace_prefix = [&](size_t n, std::vector<std::string> with) {
    words.erase(words.begin(), words.begin() + n);
    words.insert(words.begin(), with.begin(), with.end());
  };
  const std::string& w0 = words[0];
  const std::string w1 = words.size() > 1 ? words[1] : std::string();
  if (w0 == "must" || w0 == "will") {
    replace_prefix(1, {"shall"});
  } else if (w0 == "measured" || w0 == "observed") {
    replace_prefix(1, {"has", "measured"});
  } else if ((w0 == "has" || w0 == "have" || w0 == "is" || w0 == "was" || w0 == "were") &&
             (w1 == "measured" || w1 == "observed")) {
    replace_prefix(2, {"has", "measured"});
  } else if (w0 == "anticipates" || w0 == "anticipated" || w0 == "aims" ||
             w0 == "aimed" || w0 == "targeted" || w0 == "target") {
    replace_prefix(1, {"targets"});
    if (words.size() > 1 && words[1] == "to") words.erase(words.begin() + 1);
  }
  return join(words, " ");
}

NormalForm validate_normal_form(const RawTripleLine& line) {
  NormalForm nf;
  nf.subject = normalize_subject(line.subject);
  nf.predicate = normalize_predicate(line.predicate);
  nf.object = std::string(trim(line.object));

  // Comparators belong to the predicate.
  for (;;) {
    auto [len, canonical] = leading_comparator(nf.object);
    if (len == 0) break;
    nf.object = std::string(trim(std::string_view(nf.object).substr(len)));
    const std::string suffix = " " + std::string(canonical);
    const bool already = nf.predicate.size() >= suffix.size() &&
                         nf.predicate.compare(nf.predicate.size() - suffix.size(),
                                              suffix.size(), suffix) == 0;
    if (!already) nf.predicate += nf.predicate.empty() ? std::string(canonical) : suffix;
  }

  if (nf.subject.empty()) {
    nf.reject_reason = "empty subject";
  } else if (nf.predicate.empty()) {
    nf.reject_reason = "empty predicate";
  } else if (nf.object.empty()) {
    nf.reject_reason = "empty object";
  }
  return nf;
}

ExtractionStats& ExtractionStats::operator+=(const ExtractionStats& o) {
  calls += o.calls;
  repairs += o.repairs;
  records += o.records;
  garbage += o.garbage;
  rejected += o.rejected;
  duplicates += o.duplicates;
  empty_results += o.empty_results;
  triples += o.triples;
  return *this;
}

void to_json(json& j, const ExtractionStats& s) {
  j = json{{"calls", s.calls},         {"repairs", s.repairs},
           {"records", s.records},     {"garbage", s.garbage},
           {"rejected", s.rejected},   {"duplicates", s.duplicates},
           {"empty_results", s.empty_results}, {"triples", s.triples}};
}

json extraction_response_schema() {
  json item = {{"type", "object"},
               {"properties",
                {{"subject", {{"type", "string"}}},
                 {"predicate", {{"type", "string"}}},
                 {"object", {{"type", "string"}}}}},
               {"required", {"subject", "predicate", "object"}},
               {"additionalProperties", false}};
  return json{{"type", "array"}, {"items", item}};
}

std::optional<std::string> locate_sentence(const std::string& text,
                                           const std::string& needle) {
  if (trim(needle).empty()) return std::nullopt;
  const std::string hay = ascii_lower(text);
  const size_t at = hay.find(ascii_lower(std::string(trim(needle))));
  if (at == std::string::npos) return std::nullopt;

  auto is_break = [&](size_t i) {
    if (text[i] == '\n') return true;
    return (text[i] == '.' || text[i] == '!' || text[i] == '?') &&
           (i + 1 == text.size() || text[i + 1] == ' ' || text[i + 1] == '\n');
  };
  size_t start = at;
  while (start > 0 && !is_break(start - 1)) --start;
  size_t end = at + trim(needle).size();
  while (end < text.size() && !is_break(end)) ++end;
  if (end < text.size() && text[end] != '\n') ++end;
  return std::string(trim(std::string_view(text).substr(start, end - start)));
}

std::vector<Triple> extract_triples(Gateway& gateway, const ExtractionPromptBundle& bundle,
                                    const std::string& text, SourceKind source,
                                    const std::string& instance_id,
                                    ExtractionStats* stats) {
  if (trim(text).empty()) {
    throw DataError(instance_id + ": empty " + std::string(to_string(source)) + " text");
  }
  ExtractionStats local;

  ChatRequest req;
  req.messages = {{"system", bundle.system_prompt()},
                  {"user", render_placeholders(bundle.input_template, {{"text", text}})}};
  req.response_schema = extraction_response_schema();
  req.schema_name = "triples";

  ChatResult first = gateway.chat_complete_structured(req);
  ++local.calls;
  ParsedExtraction parsed;
  try {
    parsed = parse_extraction_output(first.text);
  } catch (const ParseError& e) {
    ChatRequest repair = req;
    repair.messages.push_back({"assistant", first.text});
    repair.messages.push_back(
        {"user", render_placeholders(bundle.repair_template,
                                     {{"error", e.what()}, {"output", first.text}})});
    ChatResult second = gateway.chat_complete_structured(repair);
    ++local.calls;
    ++local.repairs;
    try {
      parsed = parse_extraction_output(second.text);
    } catch (const ParseError& e2) {
      if (stats) *stats += local;
      throw ExtractionError(instance_id + "/" + std::string(to_string(source)) +
                                ": extractor output unparseable after repair: " + e2.what(),
                            second.text);
    }
  }

  local.records += parsed.records.size();
  local.garbage += parsed.garbage;
  std::vector<Triple> triples;
  for (const auto& rec : parsed.records) {
    NormalForm nf = validate_normal_form(rec);
    if (!nf.ok()) {
      ++local.rejected;
      continue;
    }
    auto span = locate_sentence(text, nf.object);
    triples.push_back(make_triple(std::move(nf.subject), std::move(nf.predicate),
                                  std::move(nf.object), source, instance_id,
                                  std::move(span)));
  }
  std::vector<Triple> unique = dedup_triples(triples);
  local.duplicates += triples.size() - unique.size();
  local.triples += unique.size();
  if (unique.empty()) ++local.empty_results;
  if (stats) *stats += local;
  return unique;
}

}  // namespace tripleval
