#pragma once

#include <string>
#include <vector>

#include "tripleval/core.h"
#include "tripleval/llm_gateway.h"

namespace tripleval {

// The extraction instructions, one file per part. The system prompt is the
// six rule parts joined in a fixed order; `input` wraps the source text and
// `repair` is sent after an unparseable answer.
struct ExtractionPromptBundle {
  std::string claim_definition;
  std::string core_rules;
  std::string subject_rules;
  std::string predicate_rules;
  std::string object_rules;
  std::string output_format_instructions;
  std::string input_template;   // {{text}}
  std::string repair_template;  // {{error}}, {{output}}

  // Reads claim_definition.txt, core_rules.txt, subject_rules.txt,
  // predicate_rules.txt, object_rules.txt, output_format.txt, input.txt and
  // repair.txt from `dir`.
  static ExtractionPromptBundle load(const std::string& dir);

  // Throws ConfigError naming the first empty part.
  void validate() const;
  std::string system_prompt() const;
  std::string hash() const;
};

struct RawTripleLine {
  std::string subject;
  std::string predicate;
  std::string object;
  int line_no = 0;  // 1-based: array position or text line
};

struct ParsedExtraction {
  std::vector<RawTripleLine> records;
  size_t garbage = 0;  // lines or array elements that were not records
};

// Accepts a JSON array of {subject, predicate, object} (optionally fenced or
// wrapped in an object), one JSON object per line, or labeled
// "Subject: / Predicate: / Object:" groups. A well-formed empty array is a
// valid answer. Throws ParseError when nothing parseable is found.
ParsedExtraction parse_extraction_output(const std::string& raw);

struct NormalForm {
  std::string subject;
  std::string predicate;
  std::string object;
  std::string reject_reason;  // empty when accepted

  bool ok() const { return reject_reason.empty(); }
};

// Leading comparator tokens of the object (after trimming), if any.
// Recognizes ≥ ≤ = < > and the ASCII spellings >= <= ==.
bool object_starts_with_comparator(std::string_view object);

NormalForm validate_normal_form(const RawTripleLine& line);

// Lowercase outside parentheses, leading article dropped, head noun
// singularized unless the qualifier lists several items.
std::string normalize_subject(std::string_view subject);
std::string normalize_predicate(std::string_view predicate);

struct ExtractionStats {
  size_t calls = 0;
  size_t repairs = 0;
  size_t records = 0;
  size_t garbage = 0;
  size_t rejected = 0;
  size_t duplicates = 0;
  size_t empty_results = 0;
  size_t triples = 0;

  ExtractionStats& operator+=(const ExtractionStats& o);
};

void to_json(json& j, const ExtractionStats& s);

json extraction_response_schema();

// One extractor call (plus at most one repair call). Returns deduplicated
// triples tagged with `source` and `instance_id`. Throws DataError on empty
// text and ExtractionError when the repaired answer is still unparseable.
std::vector<Triple> extract_triples(Gateway& gateway, const ExtractionPromptBundle& bundle,
                                    const std::string& text, SourceKind source,
                                    const std::string& instance_id,
                                    ExtractionStats* stats = nullptr);

// The sentence of `text` that contains `needle` (case-insensitive), if any.
std::optional<std::string> locate_sentence(const std::string& text,
                                           const std::string& needle);

}  // namespace tripleval
