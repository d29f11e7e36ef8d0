#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tripleval/jsonl.h"

namespace tripleval {

// The four texts of an evaluation instance. Generated is never evidence.
enum class SourceKind : uint8_t { kUserQuery, kContext, kReference, kGenerated };

// Short wire labels: "user", "context", "reference", "generated".
std::string_view to_string(SourceKind kind);
SourceKind parse_source_kind(std::string_view label);

enum class Condition : uint8_t { kNa, kRelevant, kIrrelevant, kNoisy };

std::string_view to_string(Condition condition);
Condition parse_condition(std::string_view label);
inline constexpr std::array<Condition, 4> kAllConditions = {
    Condition::kNa, Condition::kRelevant, Condition::kIrrelevant, Condition::kNoisy};

// A normalized subject-predicate-object claim. Construct through make_triple
// so the id is the content hash of (instance_id, source, s, p, o).
struct Triple {
  std::string id;
  std::string subject;
  std::string predicate;
  std::string object;
  SourceKind source = SourceKind::kGenerated;
  std::string instance_id;
  std::optional<std::string> raw_span;

  bool same_claim(const Triple& other) const {
    return subject == other.subject && predicate == other.predicate &&
           object == other.object;
  }
};

// Throws DataError if any of s/p/o is empty after trimming.
Triple make_triple(std::string subject, std::string predicate, std::string object,
                   SourceKind source, std::string instance_id,
                   std::optional<std::string> raw_span = std::nullopt);

std::string triple_id(std::string_view instance_id, SourceKind source,
                      std::string_view subject, std::string_view predicate,
                      std::string_view object);

// Case-folded, whitespace-collapsed "s\x1fp\x1fo" used for deduplication.
std::string dedup_key(const Triple& t);

// Keeps the first occurrence per dedup_key, order stable. All triples must
// share instance_id and source; otherwise StructuralError.
std::vector<Triple> dedup_triples(const std::vector<Triple>& triples);

// Subset of {Reference, Context, UserQuery} as a 3-bit mask:
// bit 0 = Reference, bit 1 = Context, bit 2 = UserQuery. Mask 0 is "None".
class SourceSet {
 public:
  static constexpr uint8_t kReferenceBit = 1;
  static constexpr uint8_t kContextBit = 2;
  static constexpr uint8_t kUserBit = 4;

  constexpr SourceSet() = default;
  static constexpr SourceSet from_mask(uint8_t mask) {
    SourceSet s;
    s.mask_ = mask & 7;
    return s;
  }

  static uint8_t bit_for(SourceKind kind);

  void insert(SourceKind kind) { mask_ |= bit_for(kind); }
  bool contains(SourceKind kind) const { return (mask_ & bit_for(kind)) != 0; }
  bool empty() const { return mask_ == 0; }
  uint8_t mask() const { return mask_; }

  std::vector<SourceKind> kinds() const;

  friend bool operator==(SourceSet a, SourceSet b) { return a.mask_ == b.mask_; }

 private:
  uint8_t mask_ = 0;
};

struct EvaluationInstance {
  std::string instance_id;
  std::string datapoint_id;
  std::string user_query;
  std::vector<std::string> context_chunks;
  std::vector<std::string> context_origins;  // origin datapoint per chunk
  std::string reference;
  std::optional<std::string> generated;
  Condition condition = Condition::kNa;
  std::string model_tag;

  // condition == na <=> no chunks; reference and user_query non-empty.
  void validate() const;
};

struct Evidence {
  SourceKind source;
  int rank;  // 1-based rank within the source's candidates
  int candidate_index;  // 0-based display index in the judged candidate list

  friend bool operator==(const Evidence&, const Evidence&) = default;
};

struct AttributionRecord {
  std::string triple_id;
  SourceSet supported_by;
  std::vector<Evidence> evidence;

  bool is_fact() const { return supported_by.contains(SourceKind::kReference); }
  bool is_parametric() const {
    return !supported_by.contains(SourceKind::kContext) &&
           !supported_by.contains(SourceKind::kUserQuery);
  }
};

// supported_by is derived from the evidence, which keeps the two consistent.
AttributionRecord make_record(std::string triple_id, std::vector<Evidence> evidence);

// Counts of generated triples per membership mask over (R, C, U); index 0 is
// the None region.
struct SourcePartition {
  std::array<size_t, 8> regions{};

  size_t total() const;
  size_t region(SourceSet set) const { return regions[set.mask()]; }
  size_t none() const { return regions[0]; }
  // In R, in neither C nor U.
  size_t r_param() const { return regions[SourceSet::kReferenceBit]; }
  // Union of every region containing `kind`.
  size_t support_count(SourceKind kind) const;

  SourcePartition& operator+=(const SourcePartition& other);
};

// Region label for CSV headers: "none", "R", "C", "U", "RC", "RU", "CU", "RCU".
std::string_view region_label(uint8_t mask);

// Errors: duplicate triple_id or records.size() != total_generated ->
// StructuralError.
SourcePartition partition(const std::vector<AttributionRecord>& records,
                          size_t total_generated);

void to_json(json& j, const Triple& t);
void from_json(const json& j, Triple& t);
void to_json(json& j, const EvaluationInstance& inst);
void from_json(const json& j, EvaluationInstance& inst);
void to_json(json& j, const Evidence& e);
void from_json(const json& j, Evidence& e);
void to_json(json& j, const AttributionRecord& r);
void from_json(const json& j, AttributionRecord& r);
void to_json(json& j, SourceSet s);

}  // namespace tripleval
