#include <doctest.h>

#include <atomic>

#include "docrag/curation.hpp"
#include "docrag/errors.hpp"
#include "test_util.hpp"

using namespace docrag;
using testutil::page;

namespace {

struct World {
  Corpus corpus{{page("d1", "eiffel tower paris"), page("d2", "london bridge river"), page("d3", "pisa tower lean")}};
  HashedTfRetriever retriever{corpus};
  std::vector<Query> queries;

  World() {
    for (int i = 0; i < 4; ++i) {
      Query q;
      q.id = "q" + std::to_string(i);
      q.text = "Where is the eiffel tower?";
      q.reference_answer = "Paris";
      q.golden_doc_ids = {"d1"};
      queries.push_back(q);
    }
  }
  CurationContext ctx(std::size_t workers = 1) const { return {corpus, retriever, SessionConfig{}, workers}; }
};

const std::vector<std::string> kGolden{"<think>a</think><search>eiffel tower</search>",
                                       "<think>b</think><select>0</select>", "<think>c</think><answer>Paris</answer>"};

// Replays the script whose key occurs in the opening prompt, else the golden script.
class ScriptByQuery final : public Policy {
 public:
  explicit ScriptByQuery(std::map<std::string, std::vector<std::string>> scripts) : scripts_(std::move(scripts)) {}
  std::string generate(std::span<const Turn> history) override {
    const auto& first = history.front().text;
    for (const auto& [key, script] : scripts_) {
      if (first.find(key) != std::string::npos) return pick(script, history);
    }
    return pick(kGolden, history);
  }

 private:
  static std::string pick(const std::vector<std::string>& script, std::span<const Turn> history) {
    std::size_t step = history.size() / 2;
    if (step >= script.size()) throw InvalidArgument("script exhausted");
    return script[step];
  }
  std::map<std::string, std::vector<std::string>> scripts_;
};

class Regions final : public LayoutProvider {
 public:
  std::vector<BBox> propose(const PageImage&) const override { return {{0, 0, 100, 100}, {100, 100, 300, 300}, {5, 5, 60, 90}}; }
};

class NoRegions final : public LayoutProvider {
 public:
  std::vector<BBox> propose(const PageImage&) const override { return {}; }
};

class Thrower final : public Policy {
 public:
  std::string generate(std::span<const Turn>) override { throw TransportError("teacher offline"); }
};

class FailingJudge final : public Judge {
 public:
  int score(std::string_view, std::string_view, std::string_view) const override { throw TransportError("judge down"); }
};

SynthesisRecord record(const Query& q, std::optional<std::string> answer) {
  SynthesisRecord r;
  r.query = q;
  r.trajectory.id = q.id;
  r.trajectory.query = q;
  r.trajectory.final_answer = std::move(answer);
  return r;
}

// Answers with `answer`, after searching `query_text`.
std::unique_ptr<Policy> solver(const std::string& query_text, const std::string& answer) {
  return std::make_unique<ScriptedPolicy>(std::vector<std::string>{
      "<search>" + query_text + "</search>", "<select>0</select>", "<answer>" + answer + "</answer>"});
}

std::vector<std::string> ids(const std::vector<SynthesisRecord>& rs) {
  std::vector<std::string> out;
  for (const auto& r : rs) out.push_back(r.query.id);
  return out;
}

}  // namespace

TEST_CASE("synthesis passthrough") {
  World w;
  ScriptedPolicy teacher(kGolden);
  NoRegions layout;
  std::span<const Query> one(w.queries.data(), 1);
  auto recs = synthesize(teacher, layout, one, w.ctx(), "scripted");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].verdicts.empty());
  CHECK(recs[0].teacher_id == "scripted");
  CHECK(recs[0].trajectory.final_answer == "Paris");
  CHECK(recs[0].trajectory.termination_reason == TerminationReason::Answered);
}

TEST_CASE("synthesis lists layout regions and records citations") {
  World w;
  ScriptedPolicy teacher({"<search>eiffel tower</search>", "<select>0</select>", "<bbox>100,100,300,300</bbox>",
                          "<bbox>1,1,90,90</bbox>", "<answer>Paris</answer>"});
  Regions layout;
  std::span<const Query> one(w.queries.data(), 1);
  auto recs = synthesize(teacher, layout, one, w.ctx());
  REQUIRE(recs.size() == 1);
  const auto& t = recs[0].trajectory;
  CHECK(t.turns[4].text.find("Region [0]: 0,0,100,100\nRegion [1]: 100,100,300,300\nRegion [2]: 5,5,60,90") !=
        std::string::npos);
  CHECK(recs[0].candidate_boxes.size() == 3);
  REQUIRE(recs[0].cited_proposals.size() == 2);
  CHECK(recs[0].cited_proposals[0] == std::optional<std::size_t>{1});
  CHECK_FALSE(recs[0].cited_proposals[1].has_value());
}

TEST_CASE("synthesis of malformed teachers and teacher failures") {
  World w;
  ScriptedPolicy junk(std::vector<std::string>(10, "I refuse to use tags"));
  NoRegions layout;
  std::span<const Query> one(w.queries.data(), 1);
  auto recs = synthesize(junk, layout, one, w.ctx());
  REQUIRE(recs.size() == 1);
  CHECK_FALSE(recs[0].answered());
  CHECK(recs[0].trajectory.termination_reason == TerminationReason::BudgetExhausted);
  CHECK(recs[0].verdicts.empty());

  Thrower dead;
  recs = synthesize(dead, layout, one, w.ctx());
  REQUIRE(recs.size() == 1);
  REQUIRE(recs[0].verdicts.count("synthesis"));
  CHECK(recs[0].verdicts.at("synthesis").status == VerdictStatus::Discarded);
  CHECK(recs[0].verdicts.at("synthesis").reason.find("teacher offline") != std::string::npos);
}

TEST_CASE("quality filter") {
  World w;
  std::vector<SynthesisRecord> in{record(w.queries[0], "paris"), record(w.queries[1], "Rome"),
                                  record(w.queries[2], std::nullopt)};
  NormalizedMatchJudge judge;
  auto res = quality_filter(in, judge);
  CHECK(res.stage == "quality");
  CHECK(ids(res.kept) == std::vector<std::string>{"q0"});
  CHECK(ids(res.discarded) == std::vector<std::string>{"q1", "q2"});
  CHECK(res.discarded[0].verdicts.at("quality").reason == "incorrect");
  CHECK(res.discarded[1].verdicts.at("quality").reason == "no_answer");
  CHECK(res.kept[0].verdicts.at("quality") == Verdict{VerdictStatus::Kept, "correct"});
  CHECK(res.reason_counts() == std::map<std::string, std::size_t>{
                                   {"discarded:incorrect", 1}, {"discarded:no_answer", 1}, {"kept:correct", 1}});
  CHECK(res.report()["kept"] == 1);

  auto again = quality_filter(res.kept, judge, 3);
  CHECK(again.kept == res.kept);
  CHECK(again.discarded.empty());

  FailingJudge broken;
  auto deferred = quality_filter(in, broken);
  CHECK(deferred.kept.size() + deferred.discarded.size() == 1);  // the unanswered record needs no judge
  CHECK(ids(deferred.deferred) == std::vector<std::string>{"q0", "q1"});
  CHECK(deferred.deferred[0].verdicts.at("quality").status == VerdictStatus::Deferred);
}

TEST_CASE("difficulty filter") {
  World w;
  std::vector<SynthesisRecord> in;
  for (const auto& q : w.queries) in.push_back(record(q, "Paris"));
  std::atomic<int> calls{0};
  PolicyFactory weak = [&](const Query& q, double temperature, std::uint64_t) -> std::unique_ptr<Policy> {
    ++calls;
    CHECK(temperature == 0.0);
    if (q.id == "q0") return solver("eiffel tower", "Paris");
    if (q.id == "q1") return solver("eiffel tower", "London");
    if (q.id == "q2") return std::make_unique<Thrower>();
    throw std::runtime_error("factory broke");
  };
  NormalizedMatchJudge judge;
  auto res = difficulty_filter(in, weak, judge, w.ctx());
  CHECK(calls == 4);
  CHECK(ids(res.discarded) == std::vector<std::string>{"q0"});
  CHECK(res.discarded[0].verdicts.at("difficulty").reason == "trivial");
  CHECK(ids(res.kept) == std::vector<std::string>{"q1"});
  CHECK(ids(res.deferred) == std::vector<std::string>{"q2", "q3"});

  auto again = difficulty_filter(res.kept, weak, judge, w.ctx());
  CHECK(again.kept == res.kept);
}

TEST_CASE("rl curation rules") {
  World w;
  std::vector<SynthesisRecord> in;
  for (const auto& q : w.queries) in.push_back(record(q, "Paris"));
  PolicyFactory sampler = [](const Query& q, double, std::uint64_t seed) -> std::unique_ptr<Policy> {
    if (q.id == "q0") return solver("eiffel tower", "Paris");          // always right
    if (q.id == "q1") return solver("london bridge", "London");        // never retrieves d1 first
    if (q.id == "q2") return solver("eiffel tower", seed % 5 < 2 ? "Rome" : "Paris");
    return std::make_unique<Thrower>();
  };
  NormalizedMatchJudge judge;
  SessionConfig narrow;
  narrow.k = 1;
  CurationContext ctx{w.corpus, w.retriever, narrow, 2};
  auto res = rl_curation(in, sampler, 5, 1.0, judge, ctx);
  CHECK(res.stage == "rl");
  std::map<std::string, std::string> reasons;
  for (const auto* part : {&res.kept, &res.discarded, &res.deferred}) {
    for (const auto& r : *part) reasons[r.query.id] = r.verdicts.at("rl").reason;
  }
  CHECK(reasons.at("q0") == "too_easy");
  CHECK(reasons.at("q1") == "retrieval_bottleneck");
  CHECK(res.kept.size() + res.discarded.size() + res.deferred.size() == in.size());
  CHECK(ids(res.deferred) == std::vector<std::string>{"q3"});
  // q2 depends on the seeds; with any wrong rollout it is kept.
  if (reasons.at("q2") != "too_easy") CHECK(reasons.at("q2") == "retrieval_ok_reasoning_fails");

  CHECK_THROWS_AS(rl_curation(in, sampler, 1, 1.0, judge, ctx), InvalidArgument);
}

TEST_CASE("rl curation keeps a query with two of five wrong answers") {
  World w;
  std::vector<SynthesisRecord> in{record(w.queries[0], "Paris")};
  std::atomic<int> n{0};
  PolicyFactory sampler = [&](const Query&, double, std::uint64_t) -> std::unique_ptr<Policy> {
    return solver("eiffel tower", n++ < 2 ? "Rome" : "Paris");
  };
  NormalizedMatchJudge judge;
  auto res = rl_curation(in, sampler, 5, 1.0, judge, w.ctx());
  REQUIRE(res.kept.size() == 1);
  CHECK(res.kept[0].verdicts.at("rl") == Verdict{VerdictStatus::Kept, "retrieval_ok_reasoning_fails"});
}

TEST_CASE("prioritize discarded and record json") {
  World w;
  std::vector<SynthesisRecord> regular{record(w.queries[0], "a"), record(w.queries[1], "b")};
  std::vector<SynthesisRecord> discarded{record(w.queries[1], "c"), record(w.queries[2], "d")};
  auto merged = prioritize_discarded(regular, discarded);
  CHECK(ids(merged) == std::vector<std::string>{"q1", "q2", "q0"});
  CHECK(merged[0].trajectory.final_answer == "c");

  auto r = record(w.queries[0], "x");
  r.candidate_boxes = {{0, 0, 5, 5}};
  r.cited_proposals = {std::nullopt, 0};
  r.verdicts["quality"] = {VerdictStatus::Deferred, "judge_error: x"};
  CHECK(synthesis_record_from_json(nlohmann::json::parse(to_json(r).dump())) == r);
}

TEST_CASE("curation is deterministic and independent of worker count") {
  World w;
  std::vector<Query> qs;
  for (int i = 0; i < 12; ++i) {
    Query q = w.queries[0];
    q.id = "p" + std::to_string(i);
    if (i == 3) q.text = "Which bridge crosses the river?";
    qs.push_back(q);
  }
  std::map<std::string, std::vector<std::string>> scripts;
  scripts["bridge"] = {"<search>london</search>", "<select>0</select>", "<answer>London</answer>"};
  PolicyFactory sampler = [](const Query& q, double, std::uint64_t seed) -> std::unique_ptr<Policy> {
    bool wrong = (stable_hash64(q.id) ^ seed) % 3 == 0;
    return solver("eiffel tower", wrong ? "Rome" : "Paris");
  };
  NormalizedMatchJudge judge;
  auto run = [&](std::size_t workers) {
    ScriptByQuery teacher(scripts);
    NoRegions layout;
    auto recs = synthesize(teacher, layout, qs, w.ctx(workers));
    auto q = quality_filter(recs, judge, workers);
    auto d = difficulty_filter(q.kept, sampler, judge, w.ctx(workers));
    auto r = rl_curation(d.kept, sampler, 5, 1.0, judge, w.ctx(workers));
    return std::vector<std::vector<SynthesisRecord>>{q.kept, q.discarded, d.kept, d.discarded, r.kept, r.discarded};
  };
  auto first = run(1);
  CHECK(first == run(1));
  CHECK(first == run(4));
}
