#include "tripleval/retriever.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "tripleval/errors.h"
#include "tripleval/hashing.h"
#include "tripleval/strings.h"

namespace tripleval {
namespace {

static_assert(std::endian::native == std::endian::little,
              "embedding sidecar is written in host order");

constexpr char kMagic[8] = {'T', 'V', 'E', 'M', 'B', '1', '\0', '\0'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, size_t& pos, const std::string& path) {
  if (pos + sizeof(T) > in.size()) throw DataError(path + ": truncated embedding sidecar");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

std::string embedding_text(const Triple& t) {
  return t.subject + " | " + t.predicate + " | " + t.object;
}

std::vector<TripleEmbedding> embed_triples(Gateway& gateway, const std::vector<Triple>& triples) {
  if (triples.empty()) throw DataError("embed_triples: no triples");
  std::vector<std::string> texts;
  std::unordered_map<std::string, size_t> slot;
  std::vector<size_t> index_of(triples.size());
  for (size_t i = 0; i < triples.size(); ++i) {
    std::string text = embedding_text(triples[i]);
    auto [it, inserted] = slot.emplace(text, texts.size());
    if (inserted) texts.push_back(std::move(text));
    index_of[i] = it->second;
  }
  EmbeddingRequest req;
  req.texts = std::move(texts);
  auto vectors = gateway.embed(req);

  std::vector<TripleEmbedding> out;
  out.reserve(triples.size());
  for (size_t i = 0; i < triples.size(); ++i) {
    out.push_back({triples[i].id, vectors[index_of[i]]});
  }
  return out;
}

void EmbeddingStore::add(const std::string& triple_id, std::vector<float> vector) {
  if (vector.empty()) throw ProtocolError("empty embedding for " + triple_id);
  if (dimension_ == 0) dimension_ = vector.size();
  if (vector.size() != dimension_) {
    throw ProtocolError("embedding dimension mismatch for " + triple_id + ": " +
                        std::to_string(vector.size()) + " vs " + std::to_string(dimension_));
  }
  vectors_[triple_id] = std::move(vector);
}

void EmbeddingStore::add(const std::vector<TripleEmbedding>& embeddings) {
  for (const auto& e : embeddings) add(e.triple_id, e.vector);
}

const std::vector<float>& EmbeddingStore::get(const std::string& triple_id) const {
  auto it = vectors_.find(triple_id);
  if (it == vectors_.end()) throw DataError("no embedding for triple " + triple_id);
  return it->second;
}

void EmbeddingStore::save(const std::string& prefix) const {
  std::string bin(kMagic, sizeof(kMagic));
  put<uint32_t>(bin, static_cast<uint32_t>(dimension_));
  put<uint64_t>(bin, static_cast<uint64_t>(vectors_.size()));
  for (const auto& [id, vec] : vectors_) {
    put<uint32_t>(bin, static_cast<uint32_t>(id.size()));
    bin += id;
    for (float x : vec) put<float>(bin, x);
  }
  write_file_atomic(prefix + ".bin", bin);

  json manifest = {{"format", "TVEMB1"},
                   {"model", model_},
                   {"dimension", dimension_},
                   {"count", vectors_.size()},
                   {"sha256", sha256_hex(bin)}};
  write_file_atomic(prefix + ".manifest.json", manifest.dump(2) + "\n");
}

EmbeddingStore EmbeddingStore::load(const std::string& prefix) {
  const std::string manifest_path = prefix + ".manifest.json";
  const std::string bin_path = prefix + ".bin";
  json manifest = json::parse(read_file(manifest_path), nullptr, false);
  if (manifest.is_discarded() || manifest.value("format", "") != "TVEMB1") {
    throw DataError(manifest_path + ": not an embedding manifest");
  }
  const std::string bin = read_file(bin_path);
  if (manifest.value("sha256", "") != sha256_hex(bin)) {
    throw DataError(bin_path + ": content hash does not match manifest");
  }
  if (bin.size() < sizeof(kMagic) || std::memcmp(bin.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(bin_path + ": bad magic");
  }
  size_t pos = sizeof(kMagic);
  const auto dim = take<uint32_t>(bin, pos, bin_path);
  const auto count = take<uint64_t>(bin, pos, bin_path);
  if (dim != manifest.value("dimension", 0u) || count != manifest.value("count", 0ull)) {
    throw DataError(bin_path + ": header disagrees with manifest");
  }

  EmbeddingStore store(manifest.value("model", ""));
  for (uint64_t i = 0; i < count; ++i) {
    const auto len = take<uint32_t>(bin, pos, bin_path);
    if (pos + len > bin.size()) throw DataError(bin_path + ": truncated embedding sidecar");
    std::string id = bin.substr(pos, len);
    pos += len;
    std::vector<float> vec(dim);
    for (auto& x : vec) x = take<float>(bin, pos, bin_path);
    store.add(id, std::move(vec));
  }
  if (pos != bin.size()) throw DataError(bin_path + ": trailing bytes");
  return store;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw ProtocolError("cosine of vectors with different dimensions");
  double dot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
  return dot;  // both unit norm
}

int Quotas::for_source(SourceKind kind) const {
  switch (kind) {
    case SourceKind::kUserQuery: return user;
    case SourceKind::kContext: return context;
    case SourceKind::kReference: return reference;
    case SourceKind::kGenerated: break;
  }
  return 0;
}

int CandidateSet::count(SourceKind kind) const {
  return static_cast<int>(std::count_if(candidates.begin(), candidates.end(),
                                        [&](const Candidate& c) { return c.source == kind; }));
}

void to_json(json& j, const Candidate& c) {
  j = json{{"source", to_string(c.source)},
           {"triple_id", c.triple_id},
           {"similarity", c.similarity},
           {"rank", c.rank}};
}

void from_json(const json& j, Candidate& c) {
  c.source = parse_source_kind(j.at("source").get<std::string>());
  c.triple_id = j.at("triple_id").get<std::string>();
  c.similarity = j.at("similarity").get<double>();
  c.rank = j.at("rank").get<int>();
}

void to_json(json& j, const CandidateSet& c) {
  j = json{{"generated_triple_id", c.generated_triple_id}, {"candidates", c.candidates}};
}

void from_json(const json& j, CandidateSet& c) {
  c.generated_triple_id = j.at("generated_triple_id").get<std::string>();
  c.candidates = j.at("candidates").get<std::vector<Candidate>>();
}

CandidateSet select_candidates(const EmbeddedTriple& generated, const CandidatePools& pools,
                               const Quotas& quotas) {
  CandidateSet out;
  out.generated_triple_id = generated.triple->id;
  const std::pair<SourceKind, const std::vector<EmbeddedTriple>*> order[] = {
      {SourceKind::kUserQuery, &pools.user},
      {SourceKind::kContext, &pools.context},
      {SourceKind::kReference, &pools.reference},
  };
  for (const auto& [kind, pool] : order) {
    const int quota = quotas.for_source(kind);
    if (quota <= 0 || pool->empty()) continue;
    std::vector<Candidate> scored;
    scored.reserve(pool->size());
    for (const auto& e : *pool) {
      scored.push_back({kind, e.triple->id, cosine(*generated.vector, *e.vector), 0});
    }
    const size_t take_n = std::min(scored.size(), static_cast<size_t>(quota));
    std::partial_sort(scored.begin(), scored.begin() + take_n, scored.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.similarity != b.similarity) return a.similarity > b.similarity;
                        return a.triple_id < b.triple_id;
                      });
    for (size_t i = 0; i < take_n; ++i) {
      scored[i].rank = static_cast<int>(i + 1);
      out.candidates.push_back(std::move(scored[i]));
    }
  }
  return out;
}

}  // namespace tripleval
