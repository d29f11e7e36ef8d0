#include "tripleval/pipeline.h"

#include <atomic>
#include <filesystem>
#include <iostream>
#include <set>
#include <thread>

#include "tripleval/errors.h"
#include "tripleval/hashing.h"
#include "tripleval/humaneval.h"
#include "tripleval/metrics.h"
#include "tripleval/strings.h"
#include "tripleval/textmetrics.h"

namespace tripleval {

namespace fs = std::filesystem;

std::vector<std::exception_ptr> parallel_for(size_t n, int workers,
                                             const std::function<void(size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<size_t> next{0};
  auto loop = [&] {
    for (size_t i; (i = next++) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const size_t threads = std::min<size_t>(n, static_cast<size_t>(std::max(1, workers)));
  if (threads <= 1) {
    loop();
    return errors;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (size_t t = 0; t < threads; ++t) pool.emplace_back(loop);
  for (auto& t : pool) t.join();
  return errors;
}

void rethrow_first(const std::vector<std::exception_ptr>& errors) {
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

// Fails a stage after all items ran, so successful responses stay cached.
void raise_collected(const std::vector<std::exception_ptr>& errors, const std::string& stage) {
  size_t failed = 0;
  std::exception_ptr first;
  for (const auto& e : errors) {
    if (!e) continue;
    if (!first) first = e;
    ++failed;
  }
  if (!first) return;
  if (failed == 1) std::rethrow_exception(first);
  try {
    std::rethrow_exception(first);
  } catch (const std::exception& e) {
    throw Error(stage + ": " + std::to_string(failed) + " of " + std::to_string(errors.size()) +
                " items failed; first: " + e.what());
  }
}

json endpoint_fragment(const EndpointConfig& e) {
  return json{{"name", e.name},
              {"model", e.model},
              {"max_tokens", e.max_tokens},
              {"structured_output", e.structured_output}};
}

std::string file_hash_or_empty(const std::string& p) {
  return p.empty() ? std::string() : sha256_file(p);
}

struct GenUnit {
  std::string unit_id;
  std::string model;
  EvaluationInstance instance;
};

std::vector<EvaluationInstance> load_instances(const std::string& p) {
  return from_json_rows<EvaluationInstance>(read_jsonl(p));
}

std::vector<GenUnit> load_generations(const std::string& p) {
  std::vector<GenUnit> out;
  for (const auto& row : read_jsonl(p)) {
    GenUnit u;
    u.unit_id = row.at("unit_id").get<std::string>();
    u.instance = row.get<EvaluationInstance>();
    u.model = u.instance.model_tag;
    out.push_back(std::move(u));
  }
  return out;
}

// Triples grouped by owner id (instance id, or unit id for generated ones).
struct TripleIndex {
  std::vector<Triple> all;
  std::map<std::string, std::array<std::vector<const Triple*>, 4>> by_owner;
  std::map<std::string, const Triple*> by_id;

  explicit TripleIndex(std::vector<Triple> triples) : all(std::move(triples)) {
    for (const auto& t : all) {
      by_owner[t.instance_id][static_cast<size_t>(t.source)].push_back(&t);
      if (!by_id.emplace(t.id, &t).second) {
        throw StructuralError("triples: duplicate triple id " + t.id);
      }
    }
  }

  const std::vector<const Triple*>& of(const std::string& owner, SourceKind kind) const {
    static const std::vector<const Triple*> kEmpty;
    auto it = by_owner.find(owner);
    return it == by_owner.end() ? kEmpty : it->second[static_cast<size_t>(kind)];
  }

  const Triple& get(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("unknown triple id " + id);
    return *it->second;
  }
};

TripleIndex load_triples(const std::string& p) {
  return TripleIndex(from_json_rows<Triple>(read_jsonl(p)));
}

std::string fixed6(double v) { return format_fixed(v, 6); }

}  // namespace

struct Pipeline::Outputs {
  std::vector<std::string> files;

  void add(const std::string& rel) { files.push_back(rel); }

  std::map<std::string, std::string> hashes(const std::string& run_dir) const {
    std::map<std::string, std::string> out;
    for (const auto& rel : files) out[rel] = sha256_file(run_dir + "/" + rel);
    return out;
  }
};

Pipeline::Pipeline(Config config, PipelineOptions options)
    : config_(std::move(config)), options_(std::move(options)) {
  prompts_ = PromptSet::load(config_.prompts_dir);
  cache_ = std::make_shared<ResponseCache>(config_.resolved_cache_dir());
  manifest_ = RunManifest::load(manifest_path());
  manifest_.run_id = config_.run_id;
  manifest_.config_hash = config_.hash();
  manifest_.prompt_hashes = prompts_.hashes();
  manifest_.seeds = {{"global", config_.seed}, {"humaneval", humaneval_seed()}};
}

const std::vector<std::string>& Pipeline::consumed_stages(const std::string& stage) {
  static const std::map<std::string, std::vector<std::string>> kConsumed = {
      {"ingest", {}},
      {"conditions", {"ingest"}},
      {"generate", {"conditions"}},
      {"extract", {"conditions", "generate"}},
      {"embed", {"extract"}},
      {"judge", {"conditions", "generate", "extract", "embed"}},
      {"metrics", {"generate", "extract", "judge"}},
      {"analyze", {"generate", "metrics"}},
      {"humaneval-export", {"extract", "judge"}},
      {"humaneval-score", {"humaneval-export"}},
  };
  auto it = kConsumed.find(stage);
  if (it == kConsumed.end()) throw ConfigError("unknown stage '" + stage + "'");
  return it->second;
}

uint64_t Pipeline::humaneval_seed() const {
  if (config_.humaneval.seed != 0) return config_.humaneval.seed;
  return stable_seed({std::to_string(config_.seed), "humaneval"});
}

json Pipeline::stage_fragment(const std::string& stage) const {
  const json full = config_.to_json();
  if (stage == "ingest") {
    if (!fs::exists(config_.corpus_path)) {
      throw DataError("corpus file not found: " + config_.corpus_path);
    }
    return json{{"corpus_sha256", sha256_file(config_.corpus_path)}};
  }
  if (stage == "conditions") {
    json corpus = full.at("corpus");
    corpus.erase("path");
    return json{{"seed", config_.seed}, {"corpus", corpus}};
  }
  if (stage == "generate") {
    json gens = json::array();
    for (const auto& g : config_.generators) gens.push_back(endpoint_fragment(g));
    return json{{"generators", gens}, {"prompt", prompts_.generation.hash()}};
  }
  if (stage == "extract") {
    return json{{"extractor", endpoint_fragment(config_.extractor)},
                {"prompt", prompts_.extraction.hash()}};
  }
  if (stage == "embed") return json{{"embedder", endpoint_fragment(config_.embedder)}};
  if (stage == "judge") {
    return json{{"judge", endpoint_fragment(config_.judge)},
                {"prompt", prompts_.grounding.hash()},
                {"retrieval", full.at("retrieval")},
                {"options", full.at("judge")}};
  }
  if (stage == "metrics") return json::object();
  if (stage == "analyze") {
    json analysis = full.at("analysis");
    analysis.erase("external_scores");
    analysis["external_scores_sha256"] = file_hash_or_empty(config_.external_scores_path);
    return analysis;
  }
  if (stage == "humaneval-export") {
    return json{{"n_extraction", config_.humaneval.n_extraction},
                {"n_attribution", config_.humaneval.n_attribution},
                {"max_triples", config_.humaneval.max_triples},
                {"seed", humaneval_seed()}};
  }
  if (stage == "humaneval-score") {
    return json{{"labels_sha256", file_hash_or_empty(config_.humaneval.labels_path)}};
  }
  throw ConfigError("unknown stage '" + stage + "'");
}

std::string Pipeline::input_key(const std::string& stage) const {
  json consumed = json::object();
  for (const auto& up : consumed_stages(stage)) {
    const StageRecord* r = manifest_.find(up);
    consumed[up] = r ? json(r->outputs) : json(nullptr);
  }
  return sha256_hex(json{{"stage", stage}, {"config", stage_fragment(stage)}, {"consumed", consumed}}
                        .dump());
}

void Pipeline::check_upstream(const std::string& stage) const {
  std::vector<std::string> todo = upstream_stages(stage);
  std::set<std::string> seen;
  while (!todo.empty()) {
    const std::string up = todo.back();
    todo.pop_back();
    if (!seen.insert(up).second) continue;
    if (!manifest_.done(up)) {
      throw StructuralError(stage + ": upstream stage " + up + " is not done");
    }
    for (const auto& u : upstream_stages(up)) todo.push_back(u);
  }
  for (const auto& up : consumed_stages(stage)) {
    const auto stale = manifest_.stale_outputs(up, run_dir());
    if (!stale.empty()) {
      throw StructuralError(stage + ": artifact " + stale.front() + " of stage " + up +
                            " differs from the manifest; re-run " + up);
    }
  }
}

void Pipeline::invalidate_downstream(const std::string& stage) {
  bool changed = true;
  std::set<std::string> dirty = {stage};
  while (changed) {
    changed = false;
    for (const auto& s : stage_order()) {
      if (dirty.count(s)) continue;
      for (const auto& up : upstream_stages(s)) {
        if (dirty.count(up)) {
          dirty.insert(s);
          changed = true;
          break;
        }
      }
    }
  }
  dirty.erase(stage);
  for (const auto& s : dirty) {
    auto it = manifest_.stages.find(s);
    if (it != manifest_.stages.end() && it->second.status == StageStatus::kDone) {
      it->second.status = StageStatus::kPending;
    }
  }
}

StageOutcome Pipeline::run_stage(const std::string& stage) {
  if (!is_stage(stage)) throw ConfigError("unknown stage '" + stage + "'");
  check_upstream(stage);
  const std::string key = input_key(stage);
  if (!options_.force && manifest_.done(stage) && manifest_.find(stage)->input_key == key &&
      manifest_.stale_outputs(stage, run_dir()).empty()) {
    return StageOutcome::kSkipped;
  }
  fs::create_directories(run_dir());
  Outputs out;
  json stats;
  try {
    if (stage == "ingest") stats = run_ingest(out);
    else if (stage == "conditions") stats = run_conditions(out);
    else if (stage == "generate") stats = run_generate(out);
    else if (stage == "extract") stats = run_extract(out);
    else if (stage == "embed") stats = run_embed(out);
    else if (stage == "judge") stats = run_judge(out);
    else if (stage == "metrics") stats = run_metrics(out);
    else if (stage == "analyze") stats = run_analyze(out);
    else if (stage == "humaneval-export") stats = run_humaneval_export(out);
    else stats = run_humaneval_score(out);
  } catch (const std::exception& e) {
    StageRecord& rec = manifest_.stage(stage);
    rec.status = StageStatus::kFailed;
    rec.input_key = key;
    rec.outputs.clear();
    rec.error = e.what();
    rec.stats = json::object();
    invalidate_downstream(stage);
    manifest_.save(manifest_path());
    throw;
  }
  StageRecord& rec = manifest_.stage(stage);
  rec.status = StageStatus::kDone;
  rec.input_key = key;
  rec.outputs = out.hashes(run_dir());
  rec.error.clear();
  rec.stats = std::move(stats);
  manifest_.check_dag();
  manifest_.save(manifest_path());
  return StageOutcome::kRan;
}

std::vector<StageOutcome> Pipeline::run_all() {
  std::vector<StageOutcome> out;
  for (const auto& s : stage_order()) out.push_back(run_stage(s));
  return out;
}

std::unique_ptr<Gateway> Pipeline::make_gateway(const EndpointConfig& endpoint) const {
  auto transport = options_.transport_factory ? options_.transport_factory(endpoint)
                                              : make_http_transport(endpoint);
  return std::make_unique<Gateway>(endpoint, std::move(transport), cache_);
}

json Pipeline::run_ingest(Outputs& out) {
  const auto dps = read_datapoints(config_.corpus_path);
  write_jsonl(path("datapoints.jsonl"), to_json_rows(dps));
  out.add("datapoints.jsonl");
  size_t test = 0;
  for (const auto& dp : dps) test += dp.split == Split::kTest;
  return json{{"datapoints", dps.size()}, {"test", test}, {"train", dps.size() - test}};
}

json Pipeline::run_conditions(Outputs& out) {
  const auto dps = parse_datapoints(read_jsonl(path("datapoints.jsonl")), "datapoints.jsonl");
  WhitespaceTokenizer tokenizer;
  const ChunkPool pool(dps, tokenizer, config_.condition_options);
  std::vector<Datapoint> test, train;
  for (const auto& dp : dps) (dp.split == Split::kTest ? test : train).push_back(dp);
  if (test.empty()) throw DataError("corpus has no test datapoints");

  const auto instances = build_test_matrix(test, config_.conditions, pool, config_.seed,
                                           config_.subsample_per_condition,
                                           config_.condition_options);
  write_jsonl(path("instances.jsonl"), to_json_rows(instances));
  out.add("instances.jsonl");
  for (const auto& p : write_variant_manifests(train, pool, config_.seed, path("variants"),
                                               config_.condition_options)) {
    out.add(fs::relative(p, run_dir()).generic_string());
  }
  return json{{"instances", instances.size()},
              {"chunks", pool.chunks().size()},
              {"chunk_pool_sha256", pool.hash()},
              {"train_datapoints", train.size()}};
}

json Pipeline::run_generate(Outputs& out) {
  const auto instances = load_instances(path("instances.jsonl"));
  if (config_.generators.empty()) throw ConfigError("no generators configured");
  std::vector<std::unique_ptr<Gateway>> gateways;
  for (const auto& g : config_.generators) gateways.push_back(make_gateway(g));

  const size_t n = instances.size();
  std::vector<json> rows(config_.generators.size() * n);
  auto errors = parallel_for(rows.size(), config_.workers, [&](size_t k) {
    const size_t g = k / n;
    EvaluationInstance inst = instances[k % n];
    inst.model_tag = config_.generators[g].name;
    generate_response(*gateways[g], inst, prompts_.generation);
    json row = inst;
    row["unit_id"] = inst.model_tag + "/" + inst.instance_id;
    rows[k] = std::move(row);
  });
  raise_collected(errors, "generate");
  write_jsonl(path("generations.jsonl"), rows);
  out.add("generations.jsonl");

  json per_model = json::object();
  for (size_t g = 0; g < gateways.size(); ++g) {
    const auto s = gateways[g]->stats();
    per_model[config_.generators[g].name] = {
        {"requests", s.requests}, {"cache_hits", s.cache_hits}, {"retries", s.retries}};
  }
  return json{{"units", rows.size()}, {"gateways", per_model}};
}

json Pipeline::run_extract(Outputs& out) {
  const auto instances = load_instances(path("instances.jsonl"));
  const auto gens = load_generations(path("generations.jsonl"));

  // Every distinct (source, text) is extracted once; triples are re-keyed to
  // each owner afterwards.
  struct Job {
    SourceKind source;
    std::string text;
  };
  std::vector<Job> jobs;
  std::map<std::pair<SourceKind, std::string>, size_t> job_of;
  auto job_for = [&](SourceKind source, const std::string& text) {
    auto [it, inserted] = job_of.emplace(std::make_pair(source, text), jobs.size());
    if (inserted) jobs.push_back({source, text});
    return it->second;
  };
  struct Owned {
    std::string unit_id;
    std::string owner;
    SourceKind source;
    size_t job;
  };
  std::vector<Owned> owned;
  size_t blank_generations = 0;
  for (const auto& inst : instances) {
    owned.push_back({inst.instance_id + "#user", inst.instance_id, SourceKind::kUserQuery,
                     job_for(SourceKind::kUserQuery, inst.user_query)});
    owned.push_back({inst.instance_id + "#reference", inst.instance_id, SourceKind::kReference,
                     job_for(SourceKind::kReference, inst.reference)});
    for (size_t k = 0; k < inst.context_chunks.size(); ++k) {
      owned.push_back({inst.instance_id + "#context" + std::to_string(k), inst.instance_id,
                       SourceKind::kContext,
                       job_for(SourceKind::kContext, inst.context_chunks[k])});
    }
  }
  for (const auto& u : gens) {
    const std::string text = u.instance.generated.value_or("");
    if (trim(text).empty()) {
      ++blank_generations;
      owned.push_back({u.unit_id, u.unit_id, SourceKind::kGenerated, SIZE_MAX});
      continue;
    }
    owned.push_back({u.unit_id, u.unit_id, SourceKind::kGenerated,
                     job_for(SourceKind::kGenerated, text)});
  }

  auto gateway = make_gateway(config_.extractor);
  std::vector<std::vector<Triple>> extracted(jobs.size());
  std::vector<ExtractionStats> job_stats(jobs.size());
  auto errors = parallel_for(jobs.size(), config_.workers, [&](size_t k) {
    extracted[k] = extract_triples(*gateway, prompts_.extraction, jobs[k].text, jobs[k].source,
                                   "extract", &job_stats[k]);
  });
  raise_collected(errors, "extract");

  // Context triples of one instance are merged over its chunks.
  std::vector<json> unit_rows;
  std::vector<Triple> all;
  std::map<std::pair<std::string, SourceKind>, std::vector<Triple>> merged;
  std::vector<std::pair<std::string, SourceKind>> merge_order;
  for (const auto& o : owned) {
    std::vector<Triple> triples;
    if (o.job != SIZE_MAX) {
      for (const auto& t : extracted[o.job]) {
        triples.push_back(make_triple(t.subject, t.predicate, t.object, o.source, o.owner,
                                      t.raw_span));
      }
    }
    json ids = json::array();
    for (const auto& t : triples) ids.push_back(t.id);
    unit_rows.push_back({{"unit_id", o.unit_id},
                         {"owner", o.owner},
                         {"source", to_string(o.source)},
                         {"text", o.job == SIZE_MAX ? std::string() : jobs[o.job].text},
                         {"triple_ids", ids}});
    auto key = std::make_pair(o.owner, o.source);
    if (!merged.count(key)) merge_order.push_back(key);
    auto& bucket = merged[key];
    bucket.insert(bucket.end(), triples.begin(), triples.end());
  }
  std::map<std::string, size_t> per_source;
  for (const auto& key : merge_order) {
    const auto& bucket = merged[key];
    if (bucket.empty()) continue;
    for (auto& t : dedup_triples(bucket)) {
      per_source[std::string(to_string(t.source))]++;
      all.push_back(std::move(t));
    }
  }
  write_jsonl(path("triples.jsonl"), to_json_rows(all));
  write_jsonl(path("extraction_units.jsonl"), unit_rows);
  out.add("triples.jsonl");
  out.add("extraction_units.jsonl");

  ExtractionStats total;
  for (const auto& s : job_stats) total += s;
  const auto gs = gateway->stats();
  return json{{"texts", jobs.size()},
              {"blank_generations", blank_generations},
              {"triples", all.size()},
              {"per_source", per_source},
              {"extraction", total},
              {"requests", gs.requests},
              {"cache_hits", gs.cache_hits}};
}

json Pipeline::run_embed(Outputs& out) {
  const TripleIndex index = load_triples(path("triples.jsonl"));
  if (index.all.empty()) throw DataError("embed: no triples were extracted");
  auto gateway = make_gateway(config_.embedder);
  EmbeddingStore store(config_.embedder.model);
  store.add(embed_triples(*gateway, index.all));
  store.save(path("embeddings"));
  out.add("embeddings.bin");
  out.add("embeddings.manifest.json");
  const auto gs = gateway->stats();
  return json{{"vectors", store.size()},
              {"dimension", store.dimension()},
              {"requests", gs.requests},
              {"cache_hits", gs.cache_hits}};
}

json Pipeline::run_judge(Outputs& out) {
  const auto gens = load_generations(path("generations.jsonl"));
  const TripleIndex index = load_triples(path("triples.jsonl"));
  const EmbeddingStore store = EmbeddingStore::load(path("embeddings"));
  auto gateway = make_gateway(config_.judge);

  std::vector<std::vector<json>> candidate_rows(gens.size());
  std::vector<std::vector<json>> record_rows(gens.size());
  std::vector<JudgeStats> unit_stats(gens.size());
  auto errors = parallel_for(gens.size(), config_.workers, [&](size_t u) {
    const GenUnit& unit = gens[u];
    const std::string& inst = unit.instance.instance_id;
    auto embedded = [&](const std::vector<const Triple*>& ts) {
      std::vector<EmbeddedTriple> v;
      for (const Triple* t : ts) v.push_back({t, &store.get(t->id)});
      return v;
    };
    CandidatePools pools{embedded(index.of(inst, SourceKind::kUserQuery)),
                         embedded(index.of(inst, SourceKind::kContext)),
                         embedded(index.of(inst, SourceKind::kReference))};
    std::vector<JudgeItem> items;
    const auto& generated = index.of(unit.unit_id, SourceKind::kGenerated);
    for (size_t i = 0; i < generated.size(); ++i) {
      const Triple* g = generated[i];
      JudgeItem item;
      item.index = static_cast<int>(i);
      item.generated = *g;
      item.candidates = select_candidates({g, &store.get(g->id)}, pools, config_.quotas);
      for (const auto& c : item.candidates.candidates) {
        item.candidate_triples.push_back(index.get(c.triple_id));
      }
      json row = item.candidates;
      row["unit_id"] = unit.unit_id;
      row["index"] = item.index;
      candidate_rows[u].push_back(std::move(row));
      items.push_back(std::move(item));
    }
    if (items.empty()) return;
    for (const auto& r : attribute_instance(*gateway, prompts_.grounding, unit.unit_id, items,
                                            config_.judge_options, &unit_stats[u])) {
      json row = r;
      row["unit_id"] = unit.unit_id;
      record_rows[u].push_back(std::move(row));
    }
  });
  raise_collected(errors, "judge");

  std::vector<json> candidates, records;
  JudgeStats total;
  size_t empty_units = 0;
  for (size_t u = 0; u < gens.size(); ++u) {
    candidates.insert(candidates.end(), candidate_rows[u].begin(), candidate_rows[u].end());
    records.insert(records.end(), record_rows[u].begin(), record_rows[u].end());
    total += unit_stats[u];
    empty_units += candidate_rows[u].empty();
  }
  write_jsonl(path("candidates.jsonl"), candidates);
  write_jsonl(path("attributions.jsonl"), records);
  out.add("candidates.jsonl");
  out.add("attributions.jsonl");
  const auto gs = gateway->stats();
  return json{{"units", gens.size()},
              {"units_without_generated_triples", empty_units},
              {"generated_triples", records.size()},
              {"judge", total},
              {"requests", gs.requests},
              {"cache_hits", gs.cache_hits}};
}

json Pipeline::run_metrics(Outputs& out) {
  const auto gens = load_generations(path("generations.jsonl"));
  const TripleIndex index = load_triples(path("triples.jsonl"));
  std::map<std::string, std::vector<AttributionRecord>> records;
  for (const auto& row : read_jsonl(path("attributions.jsonl"))) {
    records[row.at("unit_id").get<std::string>()].push_back(
        row.get<JudgedRecord>().record);
  }

  std::vector<MetricsReport> reports;
  std::vector<json> rouge_rows;
  std::string rouge = csv_row({"unit_id", "model", "condition", "rouge1_p", "rouge1_r",
                               "rouge1_f1", "rougeL_p", "rougeL_r", "rougeL_f1"});
  std::map<std::pair<std::string, Condition>, std::array<double, 3>> rouge_sums;
  size_t excluded = 0;
  for (const auto& u : gens) {
    const auto& inst = u.instance;
    const std::string generated = inst.generated.value_or("");
    const RougeScore r1 = rouge1(generated, inst.reference);
    const RougeScore rl = rougeL(generated, inst.reference);
    rouge += csv_row({u.unit_id, u.model, std::string(to_string(inst.condition)),
                      fixed6(r1.precision), fixed6(r1.recall), fixed6(r1.f1),
                      fixed6(rl.precision), fixed6(rl.recall), fixed6(rl.f1)});
    auto& sums = rouge_sums[{u.model, inst.condition}];
    sums[0] += r1.f1;
    sums[1] += rl.f1;
    sums[2] += 1;

    const size_t ref = index.of(inst.instance_id, SourceKind::kReference).size();
    if (ref == 0) {
      ++excluded;
      continue;
    }
    const size_t gen = index.of(u.unit_id, SourceKind::kGenerated).size();
    auto it = records.find(u.unit_id);
    reports.push_back(instance_metrics(
        it == records.end() ? std::vector<AttributionRecord>{} : it->second, gen, ref,
        inst.condition, u.model, u.unit_id));
  }

  std::vector<MetricsReport> cells, macro_cells;
  std::string rouge_cells = csv_row({"model", "condition", "instances", "rouge1_f1", "rougeL_f1"});
  for (const auto& g : config_.generators) {
    for (Condition c : config_.conditions) {
      std::vector<MetricsReport> in_cell;
      for (const auto& r : reports) {
        if (r.model_tag == g.name && r.condition == c) in_cell.push_back(r);
      }
      if (!in_cell.empty()) {
        cells.push_back(aggregate(in_cell));
        macro_cells.push_back(macro_aggregate(in_cell));
      }
      auto rs = rouge_sums.find({g.name, c});
      if (rs != rouge_sums.end()) {
        const auto& s = rs->second;
        rouge_cells += csv_row({g.name, std::string(to_string(c)),
                                std::to_string(static_cast<size_t>(s[2])), fixed6(s[0] / s[2]),
                                fixed6(s[1] / s[2])});
      }
    }
  }

  write_jsonl(path("instance_metrics.jsonl"), to_json_rows(reports));
  write_jsonl(path("cell_metrics.jsonl"), to_json_rows(cells));
  write_jsonl(path("cell_metrics_macro.jsonl"), to_json_rows(macro_cells));
  write_file_atomic(path("table2.csv"), metrics_csv(cells));
  write_file_atomic(path("table2_macro.csv"), metrics_csv(macro_cells));
  write_file_atomic(path("rouge.csv"), rouge);
  write_file_atomic(path("rouge_cells.csv"), rouge_cells);
  for (const char* f : {"instance_metrics.jsonl", "cell_metrics.jsonl", "cell_metrics_macro.jsonl",
                        "table2.csv", "table2_macro.csv", "rouge.csv", "rouge_cells.csv"}) {
    out.add(f);
  }
  return json{{"instances", reports.size()},
              {"excluded_without_reference_triples", excluded},
              {"cells", cells.size()}};
}

json Pipeline::run_analyze(Outputs& out) {
  const auto cells = from_json_rows<MetricsReport>(read_jsonl(path("cell_metrics.jsonl")));
  const std::string baseline = !config_.baseline_model.empty() ? config_.baseline_model
                               : config_.generators.empty()   ? std::string()
                                                               : config_.generators.front().name;
  write_file_atomic(path("heatmap.csv"), delta_heatmap_csv(cells, baseline));
  write_file_atomic(path("venn.csv"), venn_csv(cells, baseline));
  json summary = decomposition_summary(cells, config_.analysis_filter);
  summary["configured_grouping"] = to_string(config_.grouping);
  summary["baseline_model"] = baseline;
  write_file_atomic(path("decomposition.json"), summary.dump(2) + "\n");
  out.add("heatmap.csv");
  out.add("venn.csv");
  out.add("decomposition.json");

  json stats = {{"cells", cells.size()}, {"baseline_model", baseline}};
  if (!config_.external_scores_path.empty()) {
    std::map<std::string, std::pair<std::string, Condition>> cell_of;
    for (const auto& u : load_generations(path("generations.jsonl"))) {
      cell_of[u.unit_id] = {u.model, u.instance.condition};
    }
    // (model, condition index, metric) keeps the output in table order.
    std::map<std::tuple<size_t, size_t, std::string>, std::pair<double, size_t>> sums;
    size_t unmatched = 0;
    for (const auto& s : read_external_scores(config_.external_scores_path)) {
      auto it = cell_of.find(s.instance_id);
      if (it == cell_of.end()) {
        ++unmatched;
        continue;
      }
      size_t m = 0, c = 0;
      while (m < config_.generators.size() && config_.generators[m].name != it->second.first) ++m;
      while (c < kAllConditions.size() && kAllConditions[c] != it->second.second) ++c;
      auto& acc = sums[{m, c, s.metric}];
      acc.first += s.value;
      acc.second += 1;
    }
    std::string csv = csv_row({"model", "condition", "metric", "instances", "mean"});
    for (const auto& [key, acc] : sums) {
      const auto& [m, c, metric] = key;
      csv += csv_row({config_.generators[m].name, std::string(to_string(kAllConditions[c])),
                      metric, std::to_string(acc.second), fixed6(acc.first / acc.second)});
    }
    write_file_atomic(path("external_cells.csv"), csv);
    out.add("external_cells.csv");
    stats["external_unmatched"] = unmatched;
  }
  return stats;
}

json Pipeline::run_humaneval_export(Outputs& out) {
  const TripleIndex index = load_triples(path("triples.jsonl"));

  std::vector<ExtractionUnit> ext_units;
  for (const auto& row : read_jsonl(path("extraction_units.jsonl"))) {
    ExtractionUnit u;
    u.unit_id = row.at("unit_id").get<std::string>();
    u.source = parse_source_kind(row.at("source").get<std::string>());
    u.text = row.at("text").get<std::string>();
    for (const auto& id : row.at("triple_ids")) u.triples.push_back(index.get(id.get<std::string>()));
    ext_units.push_back(std::move(u));
  }

  std::map<std::string, AttributionRecord> pipeline;
  for (const auto& row : read_jsonl(path("attributions.jsonl"))) {
    const auto r = row.get<JudgedRecord>().record;
    pipeline[r.triple_id] = r;
  }
  std::vector<AttributionUnit> att_units;
  for (const auto& row : read_jsonl(path("candidates.jsonl"))) {
    const auto cs = row.get<CandidateSet>();
    AttributionUnit u;
    u.unit_id = row.at("unit_id").get<std::string>();
    u.generated = index.get(cs.generated_triple_id);
    for (size_t k = 0; k < cs.candidates.size(); ++k) {
      u.candidates.push_back(
          {static_cast<int>(k), cs.candidates[k], index.get(cs.candidates[k].triple_id)});
    }
    auto it = pipeline.find(cs.generated_triple_id);
    if (it == pipeline.end()) {
      throw DataError("no attribution record for " + cs.generated_triple_id);
    }
    u.pipeline = it->second;
    att_units.push_back(std::move(u));
  }

  const uint64_t seed = humaneval_seed();
  const auto ext_tasks = sample_extraction_tasks(ext_units, config_.humaneval.n_extraction,
                                                 stable_seed({std::to_string(seed), "extraction"}),
                                                 config_.humaneval.max_triples);
  const auto att_tasks = sample_attribution_tasks(
      att_units, config_.humaneval.n_attribution, stable_seed({std::to_string(seed), "attribution"}));

  std::map<std::string, AttributionRecord> sampled;
  std::vector<json> key_rows;
  for (const auto& t : att_tasks) {
    const auto& r = pipeline.at(t.generated.id);
    sampled[t.generated.id] = r;
    key_rows.push_back({{"task_id", t.task_id}, {"record", r}});
  }
  fs::create_directories(path("humaneval"));
  write_jsonl(path("humaneval/extraction_tasks.jsonl"), to_json_rows(ext_tasks));
  write_jsonl(path("humaneval/attribution_tasks.jsonl"), to_json_rows(att_tasks));
  write_jsonl(path("humaneval/pipeline_records.jsonl"), key_rows);
  write_jsonl(path("humaneval/pseudo_labels.jsonl"),
              labels_to_rows(pseudo_labels(ext_tasks, att_tasks, sampled)));
  for (const char* f : {"humaneval/extraction_tasks.jsonl", "humaneval/attribution_tasks.jsonl",
                        "humaneval/pipeline_records.jsonl", "humaneval/pseudo_labels.jsonl"}) {
    out.add(f);
  }
  size_t triples = 0;
  for (const auto& t : ext_tasks) triples += t.triples.size();
  return json{{"extraction_tasks", ext_tasks.size()},
              {"extraction_triples", triples},
              {"attribution_tasks", att_tasks.size()}};
}

json Pipeline::run_humaneval_score(Outputs& out) {
  const auto ext_tasks =
      from_json_rows<ExtractionTask>(read_jsonl(path("humaneval/extraction_tasks.jsonl")));
  const auto att_tasks =
      from_json_rows<AttributionTask>(read_jsonl(path("humaneval/attribution_tasks.jsonl")));
  std::map<std::string, AttributionRecord> pipeline;
  for (const auto& row : read_jsonl(path("humaneval/pipeline_records.jsonl"))) {
    const auto r = row.at("record").get<AttributionRecord>();
    pipeline[r.triple_id] = r;
  }
  const bool external = !config_.humaneval.labels_path.empty();
  const LabelSet labels = read_labels(external ? config_.humaneval.labels_path
                                               : path("humaneval/pseudo_labels.jsonl"));

  ValidationSummary summary;
  if (!att_tasks.empty()) summary = score_attribution(att_tasks, labels.attribution, pipeline);
  if (!ext_tasks.empty()) summary.extraction = score_extraction(ext_tasks, labels.extraction);
  json j = summary;
  j["labels"] = external ? "external" : "pseudo";
  j["reference_lines"] = {{"extraction_precision", 0.9719}, {"attribution_accuracy", 0.8013}};
  write_file_atomic(path("validation_summary.json"), j.dump(2) + "\n");
  out.add("validation_summary.json");
  return json{{"labels", j["labels"]},
              {"overall_attribution_accuracy", summary.overall.accuracy}};
}

}  // namespace tripleval
