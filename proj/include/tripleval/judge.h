#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "tripleval/core.h"
#include "tripleval/llm_gateway.h"
#include "tripleval/retriever.h"

namespace tripleval {

// grounding.txt takes {{indices}} and {{items}}; repair.txt takes {{error}},
// {{output}} and {{indices}}.
struct GroundingTemplate {
  std::string prompt;
  std::string repair;

  static GroundingTemplate load(const std::string& dir);
  std::string hash() const;
};

// One generated triple with its candidates in display order.
struct JudgeItem {
  int index = 0;  // GENERATED index, unique within an instance
  Triple generated;
  CandidateSet candidates;
  std::vector<Triple> candidate_triples;  // aligned with candidates.candidates
};

struct MicroBatch {
  std::string batch_id;
  std::vector<JudgeItem> items;
  std::string rendered_prompt;
};

// "{3, 4, 5}"
std::string render_batch_indices(const MicroBatch& batch);
std::string render_grounding_items(const MicroBatch& batch);
std::string render_grounding_prompt(const MicroBatch& batch, const GroundingTemplate& tmpl);

// Single-quoted field as shown in the prompt; ' and \ are backslash-escaped,
// line breaks become \n.
std::string quote_field(std::string_view value);

struct JudgeVerdict {
  int index = 0;
  std::vector<int> evidence;  // in range, without duplicates
};

struct ParsedVerdicts {
  std::vector<JudgeVerdict> verdicts;  // batch order
  size_t dropped_indices = 0;
};

// Accepts a JSON array (or a lone object) of {"index", "evidence"}. Every
// batch item needs exactly one verdict; otherwise ParseError.
ParsedVerdicts parse_verdicts(const std::string& raw, const MicroBatch& batch);

AttributionRecord record_from_verdict(const JudgeItem& item, const JudgeVerdict& verdict);

json grounding_response_schema();

struct JudgeOptions {
  size_t batch_size = 8;
};

struct JudgeStats {
  size_t batches = 0;
  size_t calls = 0;
  size_t repairs = 0;
  size_t split_retries = 0;
  size_t dropped_indices = 0;
  size_t comparisons = 0;  // candidates shown, summed over items

  JudgeStats& operator+=(const JudgeStats& o);
};

void to_json(json& j, const JudgeStats& s);

struct JudgedRecord {
  AttributionRecord record;
  std::string batch_id;
  std::string raw_hash;
};

void to_json(json& j, const JudgedRecord& r);
void from_json(const json& j, JudgedRecord& r);

// Judges all items of one instance in micro-batches. A batch that stays
// unparseable after one repair is split in half once; if a half fails too,
// JudgeError names the batch. Records come back in item order.
std::vector<JudgedRecord> attribute_instance(Gateway& gateway, const GroundingTemplate& tmpl,
                                             const std::string& unit_id,
                                             const std::vector<JudgeItem>& items,
                                             const JudgeOptions& options = JudgeOptions{},
                                             JudgeStats* stats = nullptr);

// Reads a rendered grounding prompt back into its items. Used by the mock
// server; throws ParseError if no MICRO-BATCH section is present.
struct PromptItem {
  int index = 0;
  std::array<std::string, 3> generated;
  std::vector<std::array<std::string, 3>> candidates;
  std::vector<std::string> candidate_labels;  // "user#1"
};
std::vector<PromptItem> parse_grounding_prompt(const std::string& prompt);

}  // namespace tripleval
