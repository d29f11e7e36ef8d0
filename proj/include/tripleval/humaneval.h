#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tripleval/core.h"
#include "tripleval/retriever.h"

namespace tripleval {

// One source text of one unit with its extracted triples.
struct ExtractionUnit {
  std::string unit_id;
  SourceKind source = SourceKind::kGenerated;
  std::string text;
  std::vector<Triple> triples;
};

struct ExtractionTask {
  std::string task_id;
  std::string unit_id;
  SourceKind source = SourceKind::kGenerated;
  std::string source_text;
  std::vector<Triple> triples;  // at most max_triples, in extraction order
  std::vector<int> triple_indices;  // positions within the unit's triple list
  std::string annotator;
};

struct CandidateView {
  int candidate_index = 0;
  Candidate candidate;
  Triple triple;
};

// A generated triple with the candidates exactly as the judge saw them.
struct AttributionUnit {
  std::string unit_id;
  Triple generated;
  std::vector<CandidateView> candidates;
  AttributionRecord pipeline;
};

struct AttributionTask {
  std::string task_id;
  std::string unit_id;
  Triple generated;
  std::vector<CandidateView> candidates;
  std::string annotator;
};

void to_json(json& j, const ExtractionTask& t);
void from_json(const json& j, ExtractionTask& t);
void to_json(json& j, const AttributionTask& t);
void from_json(const json& j, AttributionTask& t);

// Uniform without replacement over units that have triples; up to
// max_triples triples per task, also sampled. DataError if n exceeds the
// population.
std::vector<ExtractionTask> sample_extraction_tasks(const std::vector<ExtractionUnit>& units,
                                                    size_t n, uint64_t seed,
                                                    size_t max_triples = 8);

std::vector<AttributionTask> sample_attribution_tasks(const std::vector<AttributionUnit>& units,
                                                      size_t n, uint64_t seed);

struct ExtractionLabel {
  std::string task_id;
  int triple_index = 0;  // index into the task's triples
  bool faithful = false;
};

struct CandidateLabel {
  std::string task_id;
  int candidate_index = 0;
  bool label = false;
};

struct LabelSet {
  std::vector<ExtractionLabel> extraction;
  std::vector<CandidateLabel> attribution;
};

// Reads both label kinds from one JSONL stream. Conflicting duplicates are a
// DataError naming the line.
LabelSet parse_labels(const std::vector<json>& rows, const std::string& origin);
LabelSet read_labels(const std::string& path);
std::vector<json> labels_to_rows(const LabelSet& labels);

struct ExtractionScore {
  double precision = 0.0;
  size_t faithful = 0;
  size_t total = 0;
};

// Throws IncompleteLabelsError listing tasks with unlabeled triples.
ExtractionScore score_extraction(const std::vector<ExtractionTask>& tasks,
                                 const std::vector<ExtractionLabel>& labels);

struct LabelAccuracy {
  double accuracy = 0.0;
  size_t agree = 0;
  size_t total = 0;
};

struct ValidationSummary {
  std::optional<ExtractionScore> extraction;
  // Keys: "reference", "context", "user", "none".
  std::map<std::string, LabelAccuracy> per_label;
  LabelAccuracy overall;  // exact-set agreement
  double macro_per_label = 0.0;
};

void to_json(json& j, const ValidationSummary& s);

// Human per-candidate booleans reduce to a source set per task; "none"
// agreement means both sets are empty. `pipeline` maps generated triple id
// to the pipeline's record. Throws IncompleteLabelsError when a candidate is
// unlabeled, DataError when a task has no pipeline record.
ValidationSummary score_attribution(const std::vector<AttributionTask>& tasks,
                                    const std::vector<CandidateLabel>& labels,
                                    const std::map<std::string, AttributionRecord>& pipeline);

// Labels that restate the pipeline: every extracted triple faithful, and a
// candidate labeled a source iff it is in the pipeline's evidence.
LabelSet pseudo_labels(const std::vector<ExtractionTask>& extraction_tasks,
                       const std::vector<AttributionTask>& attribution_tasks,
                       const std::map<std::string, AttributionRecord>& pipeline);

}  // namespace tripleval
