#include "docrag/curation.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>

#include "docrag/errors.hpp"
#include "docrag/random.hpp"
#include "docrag/serialization.hpp"

namespace docrag {

using nlohmann::json;

std::string_view to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::Kept: return "kept";
    case VerdictStatus::Discarded: return "discarded";
    case VerdictStatus::Deferred: return "deferred";
  }
  return "?";
}

namespace {

VerdictStatus status_from_string(const std::string& s) {
  if (s == "kept") return VerdictStatus::Kept;
  if (s == "discarded") return VerdictStatus::Discarded;
  if (s == "deferred") return VerdictStatus::Deferred;
  throw SchemaError("unknown verdict status " + s);
}

/// fn(i) for every i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

StageResult partition(std::string stage, std::span<const SynthesisRecord> records, std::vector<Verdict> verdicts) {
  StageResult out;
  out.stage = std::move(stage);
  for (std::size_t i = 0; i < records.size(); ++i) {
    SynthesisRecord r = records[i];
    r.verdicts[out.stage] = verdicts[i];
    switch (verdicts[i].status) {
      case VerdictStatus::Kept: out.kept.push_back(std::move(r)); break;
      case VerdictStatus::Discarded: out.discarded.push_back(std::move(r)); break;
      case VerdictStatus::Deferred: out.deferred.push_back(std::move(r)); break;
    }
  }
  return out;
}

bool retrieved_golden(const Trajectory& t) {
  for (const auto& d : interleave_candidates(t.candidate_history)) {
    if (t.query.golden_doc_ids.contains(d)) return true;
  }
  return false;
}

}  // namespace

json to_json(const SynthesisRecord& r) {
  json boxes = json::array();
  for (const auto& b : r.candidate_boxes) boxes.push_back(to_json(b));
  json cited = json::array();
  for (const auto& c : r.cited_proposals) cited.push_back(c ? json(*c) : json(nullptr));
  json verdicts = json::object();
  for (const auto& [stage, v] : r.verdicts) {
    verdicts[stage] = {{"status", std::string(to_string(v.status))}, {"reason", v.reason}};
  }
  return json{{"query", to_json(r.query)},
              {"trajectory", to_json(r.trajectory)},
              {"teacher_id", r.teacher_id},
              {"candidate_boxes", std::move(boxes)},
              {"cited_proposals", std::move(cited)},
              {"verdicts", std::move(verdicts)}};
}

SynthesisRecord synthesis_record_from_json(const json& j) {
  try {
    SynthesisRecord r;
    r.query = query_from_json(j.at("query"));
    r.trajectory = trajectory_from_json(j.at("trajectory"));
    r.teacher_id = j.value("teacher_id", std::string{});
    for (const auto& b : j.value("candidate_boxes", json::array())) r.candidate_boxes.push_back(bbox_from_json(b));
    for (const auto& c : j.value("cited_proposals", json::array())) {
      r.cited_proposals.push_back(c.is_null() ? std::nullopt : std::optional<std::size_t>(c.get<std::size_t>()));
    }
    const json verdicts = j.value("verdicts", json::object());
    for (const auto& [stage, v] : verdicts.items()) {
      r.verdicts[stage] = Verdict{status_from_string(v.at("status").get<std::string>()), v.value("reason", "")};
    }
    return r;
  } catch (const json::exception& e) {
    throw SchemaError(e.what());
  }
}

std::map<std::string, std::size_t> StageResult::reason_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto* group : {&kept, &discarded, &deferred}) {
    for (const auto& r : *group) {
      const auto& v = r.verdicts.at(stage);
      ++counts[std::string(to_string(v.status)) + ":" + v.reason];
    }
  }
  return counts;
}

json StageResult::report() const {
  return json{{"stage", stage},
              {"kept", kept.size()},
              {"discarded", discarded.size()},
              {"deferred", deferred.size()},
              {"reasons", reason_counts()}};
}

std::vector<SynthesisRecord> synthesize(Policy& teacher, const LayoutProvider& layout, std::span<const Query> queries,
                                        const CurationContext& ctx, const std::string& teacher_id) {
  std::vector<SynthesisRecord> out;
  for (const auto& q : queries) {
    Session session(q, ctx.corpus, ctx.retriever, ctx.session, q.id, &layout);
    std::optional<std::string> failure;
    while (!session.terminated()) {
      std::string text;
      try {
        text = teacher.generate(session.prompt());
      } catch (const std::exception& e) {
        failure = e.what();
        session.abort(e.what());
        break;
      }
      session.step(text);
    }
    SynthesisRecord rec;
    rec.query = q;
    rec.teacher_id = teacher_id;
    rec.candidate_boxes = session.offered_regions();
    rec.trajectory = std::move(session).release();
    for (const auto& p : rec.trajectory.predicted_boxes) {
      auto hit = std::find(rec.candidate_boxes.begin(), rec.candidate_boxes.end(), p.box);
      rec.cited_proposals.push_back(hit == rec.candidate_boxes.end()
                                        ? std::nullopt
                                        : std::optional<std::size_t>(hit - rec.candidate_boxes.begin()));
    }
    if (failure) rec.verdicts["synthesis"] = {VerdictStatus::Discarded, "teacher_error: " + *failure};
    out.push_back(std::move(rec));
  }
  return out;
}

StageResult quality_filter(std::span<const SynthesisRecord> records, const Judge& judge, std::size_t workers) {
  std::vector<Verdict> verdicts(records.size());
  parallel_for(records.size(), workers, [&](std::size_t i) {
    const auto& t = records[i].trajectory;
    if (!t.final_answer) {
      verdicts[i] = {VerdictStatus::Discarded, "no_answer"};
      return;
    }
    try {
      int s = judge.score(*t.final_answer, records[i].query.reference_answer, records[i].query.text);
      verdicts[i] = s == 1 ? Verdict{VerdictStatus::Kept, "correct"} : Verdict{VerdictStatus::Discarded, "incorrect"};
    } catch (const std::exception& e) {
      verdicts[i] = {VerdictStatus::Deferred, std::string("judge_error: ") + e.what()};
    }
  });
  return partition("quality", records, std::move(verdicts));
}

StageResult difficulty_filter(std::span<const SynthesisRecord> records, const PolicyFactory& weak_policy,
                              const Judge& judge, const CurationContext& ctx) {
  std::vector<Verdict> verdicts(records.size());
  parallel_for(records.size(), ctx.workers, [&](std::size_t i) {
    const auto& q = records[i].query;
    try {
      auto policy = weak_policy(q, 0.0, stable_hash64(q.id));
      auto t = run_rollout(*policy, q, ctx.corpus, ctx.retriever, ctx.session, {q.id + "-weak", nullptr});
      if (t.policy_error) {
        verdicts[i] = {VerdictStatus::Deferred, "weak_policy_error: " + *t.policy_error};
        return;
      }
      bool right = outcome_reward(judge, t) == 1.0;
      verdicts[i] = right ? Verdict{VerdictStatus::Discarded, "trivial"}
                          : Verdict{VerdictStatus::Kept, "weak_policy_incorrect"};
    } catch (const std::exception& e) {
      verdicts[i] = {VerdictStatus::Deferred, std::string("error: ") + e.what()};
    }
  });
  return partition("difficulty", records, std::move(verdicts));
}

StageResult rl_curation(std::span<const SynthesisRecord> records, const PolicyFactory& policy,
                        std::size_t n_rollouts, double temperature, const Judge& judge, const CurationContext& ctx) {
  if (n_rollouts < 2) throw InvalidArgument("rl_curation needs at least 2 rollouts per query");
  std::vector<Verdict> verdicts(records.size());
  parallel_for(records.size(), ctx.workers, [&](std::size_t i) {
    const auto& q = records[i].query;
    bool any_retrieved = false;
    bool any_wrong = false;
    try {
      for (std::size_t r = 0; r < n_rollouts; ++r) {
        auto p = policy(q, temperature, mix_seed(stable_hash64(q.id), r));
        auto t = run_rollout(*p, q, ctx.corpus, ctx.retriever, ctx.session, {q.id + "-rl" + std::to_string(r), nullptr});
        if (t.policy_error) {
          verdicts[i] = {VerdictStatus::Deferred, "policy_error: " + *t.policy_error};
          return;
        }
        any_retrieved = any_retrieved || retrieved_golden(t);
        any_wrong = any_wrong || outcome_reward(judge, t) == 0.0;
      }
    } catch (const std::exception& e) {
      verdicts[i] = {VerdictStatus::Deferred, std::string("error: ") + e.what()};
      return;
    }
    if (!any_retrieved) {
      verdicts[i] = {VerdictStatus::Discarded, "retrieval_bottleneck"};
    } else if (!any_wrong) {
      verdicts[i] = {VerdictStatus::Discarded, "too_easy"};
    } else {
      verdicts[i] = {VerdictStatus::Kept, "retrieval_ok_reasoning_fails"};
    }
  });
  return partition("rl", records, std::move(verdicts));
}

std::vector<SynthesisRecord> prioritize_discarded(std::span<const SynthesisRecord> regular,
                                                  std::span<const SynthesisRecord> discarded) {
  std::vector<SynthesisRecord> out;
  std::set<std::string> seen;
  for (const auto* group : {&discarded, &regular}) {
    for (const auto& r : *group) {
      if (seen.insert(r.query.id).second) out.push_back(r);
    }
  }
  return out;
}

}  // namespace docrag
