#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "docrag/environment.hpp"
#include "docrag/rewards.hpp"

namespace docrag {

enum class VerdictStatus { Kept, Discarded, Deferred };
std::string_view to_string(VerdictStatus s);

struct Verdict {
  VerdictStatus status = VerdictStatus::Kept;
  std::string reason;

  bool operator==(const Verdict&) const = default;
};

/// One synthesized trajectory moving through the filter stages. Stage names:
/// "synthesis", "quality", "difficulty", "rl".
struct SynthesisRecord {
  Query query;
  Trajectory trajectory;
  std::string teacher_id;
  std::vector<BBox> candidate_boxes;  // layout proposals shown to the teacher
  std::vector<std::optional<std::size_t>> cited_proposals;  // per predicted box
  std::map<std::string, Verdict> verdicts;

  bool answered() const { return trajectory.final_answer.has_value(); }
  bool operator==(const SynthesisRecord&) const = default;
};

nlohmann::json to_json(const SynthesisRecord& r);
SynthesisRecord synthesis_record_from_json(const nlohmann::json& j);

struct StageResult {
  std::string stage;
  std::vector<SynthesisRecord> kept;
  std::vector<SynthesisRecord> discarded;
  std::vector<SynthesisRecord> deferred;  // infrastructure failures, for the retry queue

  /// Count per "<status>:<reason>".
  std::map<std::string, std::size_t> reason_counts() const;
  nlohmann::json report() const;
};

struct CurationContext {
  const Corpus& corpus;
  const Retriever& retriever;
  SessionConfig session;
  std::size_t workers = 1;  // records processed concurrently; policies and judges must tolerate it
};

/// Runs the teacher on every query. After each selection the layout proposals for
/// the selected page are listed in the observation; a crop matching a proposal
/// exactly is recorded as citing it. Teacher failures discard the record.
std::vector<SynthesisRecord> synthesize(Policy& teacher, const LayoutProvider& layout, std::span<const Query> queries,
                                        const CurationContext& ctx, const std::string& teacher_id = "teacher");

/// Keeps records whose final answer the judge accepts. Judge failures defer.
StageResult quality_filter(std::span<const SynthesisRecord> records, const Judge& judge,
                           std::size_t workers = 1);

/// Builds a fresh policy per call; `seed` makes sampling reproducible.
using PolicyFactory = std::function<std::unique_ptr<Policy>(const Query& query, double temperature,
                                                             std::uint64_t seed)>;

/// Re-solves each query once with the weak policy (temperature 0). Records the
/// weak policy gets wrong are kept; right ones are discarded as trivial.
StageResult difficulty_filter(std::span<const SynthesisRecord> records, const PolicyFactory& weak_policy,
                              const Judge& judge, const CurationContext& ctx);

/// n_rollouts sampled attempts per query: keep iff some rollout retrieved a golden
/// page and some rollout answered wrongly.
StageResult rl_curation(std::span<const SynthesisRecord> records, const PolicyFactory& policy,
                        std::size_t n_rollouts, double temperature, const Judge& judge, const CurationContext& ctx);

/// Previously quality-discarded records first, then the regular input, without
/// repeating a query id.
std::vector<SynthesisRecord> prioritize_discarded(std::span<const SynthesisRecord> regular,
                                                  std::span<const SynthesisRecord> discarded);

}  // namespace docrag
