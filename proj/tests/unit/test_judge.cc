#include <mutex>

#include "doctest.h"
#include "support.h"
#include "tripleval/errors.h"
#include "tripleval/judge.h"

using namespace tripleval;

namespace {

class CannedTransport : public Transport {
 public:
  explicit CannedTransport(std::vector<std::string> texts) : texts_(std::move(texts)) {}
  TransportResponse post(const std::string&, const std::string& body) override {
    std::lock_guard<std::mutex> lock(mu_);
    bodies.push_back(body);
    const std::string& text = texts_[std::min(calls++, texts_.size() - 1)];
    json resp = {{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}};
    return {200, resp.dump(), "", {}};
  }
  size_t calls = 0;
  std::vector<std::string> bodies;

 private:
  std::vector<std::string> texts_;
  std::mutex mu_;
};

Gateway gateway(CannedTransport*& raw, std::vector<std::string> texts) {
  auto t = std::make_unique<CannedTransport>(std::move(texts));
  raw = t.get();
  EndpointConfig e;
  e.name = "judge";
  e.url = "http://mock";
  e.model = "j";
  return Gateway(e, std::move(t), nullptr);
}

GroundingTemplate tmpl() {
  return GroundingTemplate::load(tripleval::testing::prompts_dir() + "/grounding");
}

Triple t3(const std::string& s, const std::string& p, const std::string& o, SourceKind src) {
  return make_triple(s, p, o, src, "inst");
}

// Candidates: user#1, user#2, context#1, context#2, reference#1..3.
JudgeItem seven_item(int index) {
  JudgeItem item;
  item.index = index;
  item.generated = t3("the pump", "shall deliver", "10 L/min", SourceKind::kGenerated);
  item.candidates.generated_triple_id = item.generated.id;
  const std::vector<std::pair<SourceKind, int>> slots = {
      {SourceKind::kUserQuery, 1}, {SourceKind::kUserQuery, 2}, {SourceKind::kContext, 1},
      {SourceKind::kContext, 2},   {SourceKind::kReference, 1}, {SourceKind::kReference, 2},
      {SourceKind::kReference, 3}};
  for (size_t i = 0; i < slots.size(); ++i) {
    Triple t = t3("pump", "shall p" + std::to_string(i), "o" + std::to_string(i), slots[i].first);
    item.candidates.candidates.push_back({slots[i].first, t.id, 0.5, slots[i].second});
    item.candidate_triples.push_back(t);
  }
  return item;
}

MicroBatch batch_of(std::vector<JudgeItem> items) {
  MicroBatch b;
  b.batch_id = "u#b0";
  b.items = std::move(items);
  return b;
}

}  // namespace

TEST_SUITE("judge") {
  TEST_CASE("seven candidates render as [0]..[6]") {
    MicroBatch b = batch_of({seven_item(12)});
    const std::string items = render_grounding_items(b);
    for (int i = 0; i < 7; ++i) {
      CHECK(items.find("[" + std::to_string(i) + "] (") != std::string::npos);
    }
    CHECK(items.find("[7]") == std::string::npos);
    CHECK(items.find("--- GENERATED index: 12 ---") != std::string::npos);
    CHECK(items.find("[4] (reference#1, s='pump'") != std::string::npos);
    CHECK(render_batch_indices(batch_of({seven_item(3), seven_item(4), seven_item(5)})) ==
          "{3, 4, 5}");
  }

  TEST_CASE("prompt carries the fixed instructions and output example") {
    const std::string p = render_grounding_prompt(batch_of({seven_item(12)}), tmpl());
    CHECK(p.find(R"([{"index": 12, "evidence": [0, 2]}, {"index": 13, "evidence": []}])") !=
          std::string::npos);
    CHECK(p.find("=== MICRO-BATCH ===") != std::string::npos);
    CHECK(p.find("Generated triple indices in this batch: {12}") != std::string::npos);
    CHECK(p.find("{{") == std::string::npos);
  }

  TEST_CASE("quote_field escapes") {
    CHECK(quote_field("it's") == "'it\\'s'");
    CHECK(quote_field("a\\b") == "'a\\\\b'");
    CHECK(quote_field("x\ny") == "'x\\ny'");
  }

  TEST_CASE("rendered prompt parses back") {
    MicroBatch b = batch_of({seven_item(12), seven_item(13)});
    b.items[1].generated = t3("it's", "shall hold", "a\\b", SourceKind::kGenerated);
    auto items = parse_grounding_prompt(render_grounding_prompt(b, tmpl()));
    REQUIRE(items.size() == 2);
    CHECK(items[0].index == 12);
    CHECK(items[0].candidates.size() == 7);
    CHECK(items[0].candidate_labels[2] == "context#1");
    CHECK(items[1].generated[0] == "it's");
    CHECK(items[1].generated[2] == "a\\b");
    CHECK_THROWS_AS(parse_grounding_prompt("no section"), ParseError);
  }

  TEST_CASE("verdict with user and reference evidence") {
    MicroBatch b = batch_of({seven_item(12)});
    auto parsed = parse_verdicts(R"([{"index": 12, "evidence": [0, 4]}])", b);
    AttributionRecord r = record_from_verdict(b.items[0], parsed.verdicts[0]);
    CHECK(r.supported_by.contains(SourceKind::kUserQuery));
    CHECK(r.supported_by.contains(SourceKind::kReference));
    CHECK_FALSE(r.supported_by.contains(SourceKind::kContext));
    CHECK(r.is_fact());
    REQUIRE(r.evidence.size() == 2);
    CHECK(r.evidence[1] == Evidence{SourceKind::kReference, 1, 4});
  }

  TEST_CASE("empty evidence is unsupported") {
    MicroBatch b = batch_of({seven_item(12)});
    auto parsed = parse_verdicts(R"([{"index": 12, "evidence": []}])", b);
    AttributionRecord r = record_from_verdict(b.items[0], parsed.verdicts[0]);
    CHECK(r.supported_by.empty());
    CHECK_FALSE(r.is_fact());
  }

  TEST_CASE("out of range evidence is dropped and counted") {
    MicroBatch b = batch_of({seven_item(12)});
    auto parsed = parse_verdicts(R"([{"index": 12, "evidence": [9, 2, 2, -1]}])", b);
    CHECK(parsed.verdicts[0].evidence == std::vector<int>{2});
    CHECK(parsed.dropped_indices == 2);
  }

  TEST_CASE("malformed verdict sets are parse errors") {
    MicroBatch b = batch_of({seven_item(12), seven_item(13)});
    CHECK_THROWS_AS(parse_verdicts(R"([{"index": 12, "evidence": []}])", b), ParseError);
    CHECK_THROWS_AS(parse_verdicts(R"([{"index": 12, "evidence": []},{"index": 12, "evidence": []}])", b),
                    ParseError);
    CHECK_THROWS_AS(parse_verdicts(R"([{"index": 99, "evidence": []}])", b), ParseError);
    CHECK_THROWS_AS(parse_verdicts("garbage", b), ParseError);
  }

  TEST_CASE("attribute_instance batches items") {
    std::vector<JudgeItem> items;
    for (int i = 0; i < 5; ++i) items.push_back(seven_item(i));
    CannedTransport* raw = nullptr;
    Gateway gw = gateway(raw, {R"([{"index":0,"evidence":[4]},{"index":1,"evidence":[]}])",
                               R"([{"index":2,"evidence":[2]},{"index":3,"evidence":[]}])",
                               R"([{"index":4,"evidence":[0,1]}])"});
    JudgeStats stats;
    auto out = attribute_instance(gw, tmpl(), "u", items, JudgeOptions{2}, &stats);
    REQUIRE(out.size() == 5);
    CHECK(out[0].record.is_fact());
    CHECK(out[2].record.supported_by.contains(SourceKind::kContext));
    CHECK(out[4].batch_id == "u#b2");
    CHECK(stats.batches == 3);
    CHECK(stats.calls == 3);
    CHECK(stats.comparisons == 35);
  }

  TEST_CASE("repair then success") {
    CannedTransport* raw = nullptr;
    Gateway gw = gateway(raw, {"oops", R"([{"index":7,"evidence":[]}])"});
    JudgeStats stats;
    auto out = attribute_instance(gw, tmpl(), "u", {seven_item(7)}, JudgeOptions{}, &stats);
    CHECK(out.size() == 1);
    CHECK(stats.repairs == 1);
    CHECK(raw->bodies[1].find("oops") != std::string::npos);
  }

  TEST_CASE("failed batch is split once") {
    CannedTransport* raw = nullptr;
    Gateway gw = gateway(raw, {"bad", "bad again", R"([{"index":1,"evidence":[4]}])",
                               R"([{"index":2,"evidence":[]}])"});
    JudgeStats stats;
    auto out = attribute_instance(gw, tmpl(), "u", {seven_item(1), seven_item(2)},
                                  JudgeOptions{}, &stats);
    REQUIRE(out.size() == 2);
    CHECK(out[0].record.is_fact());
    CHECK(stats.split_retries == 1);
  }

  TEST_CASE("unrecoverable batch raises JudgeError naming it") {
    CannedTransport* raw = nullptr;
    Gateway gw = gateway(raw, {"bad"});
    try {
      attribute_instance(gw, tmpl(), "m/inst", {seven_item(1), seven_item(2)});
      FAIL("expected JudgeError");
    } catch (const JudgeError& e) {
      CHECK(e.batch_id() == "m/inst#b0");
    }
  }

  TEST_CASE("duplicate GENERATED index is structural") {
    CannedTransport* raw = nullptr;
    Gateway gw = gateway(raw, {"[]"});
    CHECK_THROWS_AS(attribute_instance(gw, tmpl(), "u", {seven_item(1), seven_item(1)}),
                    StructuralError);
  }
}
