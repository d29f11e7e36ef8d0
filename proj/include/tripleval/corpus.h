#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tripleval/core.h"

namespace tripleval {

enum class Split { kTrain, kTest };

std::string_view to_string(Split split);
Split parse_split(std::string_view label);

struct Datapoint {
  std::string instance_id;
  std::string user_query;
  std::string reference;
  std::string truth_seed;  // source text the context chunks are cut from
  Split split = Split::kTest;
};

// Rows of {id, user_query, reference, context_seed, split}. Throws DataError
// on empty texts or repeated ids, naming the row.
std::vector<Datapoint> parse_datapoints(const std::vector<json>& rows, const std::string& origin);
std::vector<Datapoint> read_datapoints(const std::string& path);

void to_json(json& j, const Datapoint& dp);

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(const std::vector<std::string>& tokens) const = 0;
  virtual std::string name() const = 0;
};

class WhitespaceTokenizer : public Tokenizer {
 public:
  std::vector<std::string> tokenize(std::string_view text) const override;
  std::string detokenize(const std::vector<std::string>& tokens) const override;
  std::string name() const override { return "whitespace"; }
};

struct Chunk {
  std::string text;
  size_t token_count = 0;
  std::string origin_instance_id;
  int index = 0;  // position within its seed
};

// Greedy left-to-right packing of whole tokens; everything past
// max_chunks * chunk_tokens is dropped.
std::vector<Chunk> chunk_seed(std::string_view seed, const Tokenizer& tokenizer,
                              const std::string& origin, size_t chunk_tokens = 128,
                              size_t max_chunks = 3);

struct ConditionOptions {
  size_t chunk_tokens = 128;
  size_t max_chunks = 3;
  size_t irrelevant_chunks = 3;
  size_t noisy_chunks = 3;
  size_t noisy_min_slots = 1;  // slots that may hold a relevant chunk
  size_t noisy_max_slots = 2;
  double noisy_relevant_probability = 0.5;
};

// All chunks of a corpus, in datapoint order.
class ChunkPool {
 public:
  ChunkPool() = default;
  ChunkPool(const std::vector<Datapoint>& datapoints, const Tokenizer& tokenizer,
            const ConditionOptions& options);

  const std::vector<Chunk>& chunks() const { return chunks_; }
  // Indices into chunks() for one origin, in seed order.
  const std::vector<size_t>& own(const std::string& instance_id) const;
  // Indices of chunks whose origin differs from instance_id.
  std::vector<size_t> foreign(const std::string& instance_id) const;
  std::string hash() const;

 private:
  std::vector<Chunk> chunks_;
  std::map<std::string, std::vector<size_t>> by_origin_;
};

// Per-(datapoint, condition) RNG seed derived from the global seed.
uint64_t derive_seed(uint64_t global_seed, const std::string& instance_id, Condition condition);

// instance_id is "<datapoint id>/<condition>". Throws DataError when the pool
// has too few foreign chunks for distinct sampling.
EvaluationInstance assemble_condition(const Datapoint& dp, Condition condition,
                                      const ChunkPool& pool, uint64_t rng_seed,
                                      const ConditionOptions& options = ConditionOptions{});

// Condition-major: every selected datapoint under the first condition, then
// the next. With subsample_per_condition, the same N datapoints (seeded
// draw, corpus order kept) are used for every condition.
std::vector<EvaluationInstance> build_test_matrix(
    const std::vector<Datapoint>& test_datapoints, const std::vector<Condition>& conditions,
    const ChunkPool& pool, uint64_t global_seed,
    std::optional<size_t> subsample_per_condition = std::nullopt,
    const ConditionOptions& options = ConditionOptions{});

// Training-set variants and the context conditions each pair is duplicated
// with: wo_context, w_relevant, pa_rag, raft, w_all.
const std::vector<std::pair<std::string, std::vector<Condition>>>& training_variants();

// One JSONL per variant under out_dir plus variants.json listing them.
// Returns the written paths.
std::vector<std::string> write_variant_manifests(const std::vector<Datapoint>& train_datapoints,
                                                 const ChunkPool& pool, uint64_t global_seed,
                                                 const std::string& out_dir,
                                                 const ConditionOptions& options = ConditionOptions{});

}  // namespace tripleval
