#pragma once

#include <map>
#include <string>
#include <vector>

#include "tripleval/core.h"
#include "tripleval/llm_gateway.h"

namespace tripleval {

// "subject | predicate | object"
std::string embedding_text(const Triple& t);

struct TripleEmbedding {
  std::string triple_id;
  std::vector<float> vector;  // unit norm
};

// One vector per triple, in input order. Identical texts are embedded once.
std::vector<TripleEmbedding> embed_triples(Gateway& gateway, const std::vector<Triple>& triples);

// triple_id -> vector, persisted as a binary sidecar plus a JSON manifest.
//
// Sidecar layout (little-endian): "TVEMB1\0\0", uint32 dimension, uint64
// count, then per record a uint32 id length, the id bytes and `dimension`
// float32 values.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::string model) : model_(std::move(model)) {}

  // Throws ProtocolError on a dimension mismatch. Re-adding an id replaces it.
  void add(const std::string& triple_id, std::vector<float> vector);
  void add(const std::vector<TripleEmbedding>& embeddings);
  bool contains(const std::string& triple_id) const { return vectors_.count(triple_id) > 0; }
  // Throws DataError for unknown ids.
  const std::vector<float>& get(const std::string& triple_id) const;

  size_t size() const { return vectors_.size(); }
  size_t dimension() const { return dimension_; }
  const std::string& model() const { return model_; }

  // Writes `<prefix>.bin` and `<prefix>.manifest.json`.
  void save(const std::string& prefix) const;
  static EmbeddingStore load(const std::string& prefix);

 private:
  std::string model_;
  size_t dimension_ = 0;
  std::map<std::string, std::vector<float>> vectors_;
};

double cosine(const std::vector<float>& a, const std::vector<float>& b);

struct Quotas {
  int user = 2;
  int context = 2;
  int reference = 3;

  int total() const { return user + context + reference; }
  int for_source(SourceKind kind) const;
};

struct Candidate {
  SourceKind source = SourceKind::kReference;
  std::string triple_id;
  double similarity = 0.0;
  int rank = 0;  // 1-based within its source
};

// Candidates are listed user first, then context, then reference; the
// position in `candidates` is the display index shown to the judge.
struct CandidateSet {
  std::string generated_triple_id;
  std::vector<Candidate> candidates;

  int count(SourceKind kind) const;
};

void to_json(json& j, const Candidate& c);
void from_json(const json& j, Candidate& c);
void to_json(json& j, const CandidateSet& c);
void from_json(const json& j, CandidateSet& c);

struct EmbeddedTriple {
  const Triple* triple = nullptr;
  const std::vector<float>* vector = nullptr;
};

struct CandidatePools {
  std::vector<EmbeddedTriple> user;
  std::vector<EmbeddedTriple> context;
  std::vector<EmbeddedTriple> reference;
};

// Top `quota` per source by cosine similarity; ties go to the smaller
// triple_id. Empty pools contribute nothing.
CandidateSet select_candidates(const EmbeddedTriple& generated, const CandidatePools& pools,
                               const Quotas& quotas = Quotas{});

}  // namespace tripleval
