#include "tripleval/corpus.h"

#include <algorithm>
#include <filesystem>
#include <set>

#include "tripleval/errors.h"
#include "tripleval/hashing.h"
#include "tripleval/strings.h"

namespace tripleval {
namespace {

// Uniform double in [0, 1) from the top 53 bits.
double unit_draw(DeterministicRng& rng) {
  return static_cast<double>(rng.next() >> 11) * 0x1.0p-53;
}

std::string required_text(const json& row, const char* key, const std::string& where) {
  if (!row.contains(key) || !row.at(key).is_string()) {
    throw DataError(where + ": missing string field '" + key + "'");
  }
  std::string v = row.at(key).get<std::string>();
  if (trim(v).empty()) throw DataError(where + ": empty field '" + key + "'");
  return v;
}

}  // namespace

std::string_view to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

Split parse_split(std::string_view label) {
  if (label == "train") return Split::kTrain;
  if (label == "test") return Split::kTest;
  throw DataError("unknown split '" + std::string(label) + "'");
}

std::vector<Datapoint> parse_datapoints(const std::vector<json>& rows, const std::string& origin) {
  std::vector<Datapoint> out;
  std::set<std::string> ids;
  for (size_t i = 0; i < rows.size(); ++i) {
    const std::string where = origin + ":" + std::to_string(i + 1);
    const json& row = rows[i];
    if (!row.is_object()) throw DataError(where + ": not an object");
    Datapoint dp;
    dp.instance_id = required_text(row, "id", where);
    dp.user_query = required_text(row, "user_query", where);
    dp.reference = required_text(row, "reference", where);
    dp.truth_seed = required_text(row, "context_seed", where);
    dp.split = parse_split(row.value("split", std::string("test")));
    if (dp.instance_id.find('/') != std::string::npos) {
      throw DataError(where + ": id must not contain '/'");
    }
    if (!ids.insert(dp.instance_id).second) {
      throw DataError(where + ": duplicate id '" + dp.instance_id + "'");
    }
    out.push_back(std::move(dp));
  }
  return out;
}

std::vector<Datapoint> read_datapoints(const std::string& path) {
  return parse_datapoints(read_jsonl(path), path);
}

void to_json(json& j, const Datapoint& dp) {
  j = json{{"id", dp.instance_id},
           {"user_query", dp.user_query},
           {"reference", dp.reference},
           {"context_seed", dp.truth_seed},
           {"split", to_string(dp.split)}};
}

std::vector<std::string> WhitespaceTokenizer::tokenize(std::string_view text) const {
  return split_whitespace(text);
}

std::string WhitespaceTokenizer::detokenize(const std::vector<std::string>& tokens) const {
  return join(tokens, " ");
}

std::vector<Chunk> chunk_seed(std::string_view seed, const Tokenizer& tokenizer,
                              const std::string& origin, size_t chunk_tokens,
                              size_t max_chunks) {
  if (chunk_tokens == 0) throw ConfigError("chunk size must be positive");
  const std::vector<std::string> tokens = tokenizer.tokenize(seed);
  std::vector<Chunk> out;
  for (size_t start = 0; start < tokens.size() && out.size() < max_chunks;
       start += chunk_tokens) {
    const size_t end = std::min(tokens.size(), start + chunk_tokens);
    std::vector<std::string> part(tokens.begin() + start, tokens.begin() + end);
    out.push_back(Chunk{tokenizer.detokenize(part), part.size(), origin,
                        static_cast<int>(out.size())});
  }
  return out;
}

ChunkPool::ChunkPool(const std::vector<Datapoint>& datapoints, const Tokenizer& tokenizer,
                     const ConditionOptions& options) {
  for (const auto& dp : datapoints) {
    auto& own = by_origin_[dp.instance_id];
    for (auto& c : chunk_seed(dp.truth_seed, tokenizer, dp.instance_id, options.chunk_tokens,
                              options.max_chunks)) {
      own.push_back(chunks_.size());
      chunks_.push_back(std::move(c));
    }
  }
}

const std::vector<size_t>& ChunkPool::own(const std::string& instance_id) const {
  static const std::vector<size_t> kNone;
  auto it = by_origin_.find(instance_id);
  return it == by_origin_.end() ? kNone : it->second;
}

std::vector<size_t> ChunkPool::foreign(const std::string& instance_id) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < chunks_.size(); ++i) {
    if (chunks_[i].origin_instance_id != instance_id) out.push_back(i);
  }
  return out;
}

std::string ChunkPool::hash() const {
  std::string acc;
  for (const auto& c : chunks_) {
    acc += sha256_fields({c.origin_instance_id, std::to_string(c.index), c.text});
  }
  return sha256_hex(acc);
}

uint64_t derive_seed(uint64_t global_seed, const std::string& instance_id, Condition condition) {
  return stable_seed({std::to_string(global_seed), instance_id, to_string(condition)});
}

EvaluationInstance assemble_condition(const Datapoint& dp, Condition condition,
                                      const ChunkPool& pool, uint64_t rng_seed,
                                      const ConditionOptions& options) {
  EvaluationInstance inst;
  inst.instance_id = dp.instance_id + "/" + std::string(to_string(condition));
  inst.datapoint_id = dp.instance_id;
  inst.user_query = dp.user_query;
  inst.reference = dp.reference;
  inst.condition = condition;

  DeterministicRng rng(rng_seed);
  const std::vector<size_t>& own = pool.own(dp.instance_id);
  std::vector<size_t> picked;

  auto draw_foreign = [&](size_t n) {
    std::vector<size_t> foreign = pool.foreign(dp.instance_id);
    // Chunks already chosen are not drawn again.
    foreign.erase(std::remove_if(foreign.begin(), foreign.end(),
                                 [&](size_t i) {
                                   return std::find(picked.begin(), picked.end(), i) !=
                                          picked.end();
                                 }),
                  foreign.end());
    if (foreign.size() < n) {
      throw DataError(inst.instance_id + ": chunk pool too small (" +
                      std::to_string(foreign.size()) + " foreign chunks, need " +
                      std::to_string(n) + ")");
    }
    for (size_t k : rng.sample_indices(foreign.size(), n)) picked.push_back(foreign[k]);
  };

  switch (condition) {
    case Condition::kNa:
      break;
    case Condition::kRelevant:
      if (own.empty()) throw DataError(inst.instance_id + ": seed produced no chunks");
      picked = own;
      break;
    case Condition::kIrrelevant:
      draw_foreign(options.irrelevant_chunks);
      break;
    case Condition::kNoisy: {
      if (options.noisy_min_slots > options.noisy_max_slots ||
          options.noisy_max_slots > options.noisy_chunks) {
        throw ConfigError("noisy slot bounds out of order");
      }
      const size_t slots = static_cast<size_t>(
          rng.uniform_between(options.noisy_min_slots, options.noisy_max_slots));
      std::vector<size_t> own_left = own;
      size_t random_needed = options.noisy_chunks - slots;
      for (size_t s = 0; s < slots; ++s) {
        const bool relevant = unit_draw(rng) < options.noisy_relevant_probability;
        if (relevant && !own_left.empty()) {
          const size_t k = static_cast<size_t>(rng.uniform_below(own_left.size()));
          picked.push_back(own_left[k]);
          own_left.erase(own_left.begin() + static_cast<std::ptrdiff_t>(k));
        } else {
          ++random_needed;  // random draw, or no unused own chunk left
        }
      }
      draw_foreign(random_needed);
      rng.shuffle(picked);
      break;
    }
  }

  for (size_t i : picked) {
    inst.context_chunks.push_back(pool.chunks()[i].text);
    inst.context_origins.push_back(pool.chunks()[i].origin_instance_id);
  }
  inst.validate();
  return inst;
}

std::vector<EvaluationInstance> build_test_matrix(
    const std::vector<Datapoint>& test_datapoints, const std::vector<Condition>& conditions,
    const ChunkPool& pool, uint64_t global_seed, std::optional<size_t> subsample_per_condition,
    const ConditionOptions& options) {
  for (const auto& dp : test_datapoints) {
    if (dp.split != Split::kTest) {
      throw DataError("build_test_matrix: " + dp.instance_id + " is not a test datapoint");
    }
  }
  std::vector<size_t> chosen(test_datapoints.size());
  for (size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
  if (subsample_per_condition && *subsample_per_condition < test_datapoints.size()) {
    DeterministicRng rng(stable_seed({std::to_string(global_seed), "subsample"}));
    chosen = rng.sample_indices(test_datapoints.size(), *subsample_per_condition);
    std::sort(chosen.begin(), chosen.end());
  }

  std::vector<EvaluationInstance> out;
  out.reserve(chosen.size() * conditions.size());
  for (Condition c : conditions) {
    for (size_t i : chosen) {
      const Datapoint& dp = test_datapoints[i];
      out.push_back(assemble_condition(dp, c, pool, derive_seed(global_seed, dp.instance_id, c),
                                       options));
    }
  }
  return out;
}

const std::vector<std::pair<std::string, std::vector<Condition>>>& training_variants() {
  static const std::vector<std::pair<std::string, std::vector<Condition>>> kVariants = {
      {"wo_context", {Condition::kNa}},
      {"w_relevant", {Condition::kRelevant}},
      {"pa_rag", {Condition::kRelevant, Condition::kIrrelevant}},
      {"raft", {Condition::kNoisy, Condition::kIrrelevant}},
      {"w_all",
       {Condition::kNa, Condition::kRelevant, Condition::kIrrelevant, Condition::kNoisy}},
  };
  return kVariants;
}

std::vector<std::string> write_variant_manifests(const std::vector<Datapoint>& train_datapoints,
                                                 const ChunkPool& pool, uint64_t global_seed,
                                                 const std::string& out_dir,
                                                 const ConditionOptions& options) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> paths;
  json index = json::array();
  for (const auto& [name, conditions] : training_variants()) {
    std::vector<json> rows;
    for (const auto& dp : train_datapoints) {
      for (Condition c : conditions) {
        rows.push_back(json(assemble_condition(
            dp, c, pool, derive_seed(global_seed, dp.instance_id, c), options)));
      }
    }
    const std::string path = out_dir + "/" + name + ".jsonl";
    write_jsonl(path, rows);
    paths.push_back(path);
    json conds = json::array();
    for (Condition c : conditions) conds.push_back(to_string(c));
    index.push_back({{"variant", name},
                     {"conditions", conds},
                     {"rows", rows.size()},
                     {"file", name + ".jsonl"}});
  }
  const std::string index_path = out_dir + "/variants.json";
  write_file_atomic(index_path, index.dump(2) + "\n");
  paths.push_back(index_path);
  return paths;
}

}  // namespace tripleval
