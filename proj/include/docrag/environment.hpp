#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "docrag/core.hpp"
#include "docrag/perception.hpp"
#include "docrag/retrieval.hpp"

namespace docrag {

/// Built-in instruction used when no template asset is supplied. "{question}" is
/// replaced by the query text.
extern const char* const kDefaultPromptTemplate;

struct SessionConfig {
  std::size_t t_max = 10;
  std::size_t k = kDefaultK;
  ZoomConfig zoom;
  std::size_t max_prompt_chars = 40000;
  std::size_t max_response_chars = 1024;
  std::string prompt_template = kDefaultPromptTemplate;

  void validate() const;
};

struct StepResult {
  std::optional<Turn> observation;
  bool terminated = false;
  TerminationReason termination_reason = TerminationReason::None;
  std::vector<FormatError> errors;
  std::vector<std::string> warnings;

  bool operator==(const StepResult&) const = default;
};

/// Produces one assistant turn from the conversation so far. Implementations
/// signal transport failures by throwing; run_rollout records them.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string generate(std::span<const Turn> history) = 0;
};

/// One episode of the search / select / crop / answer loop. Observations are
/// appended as User turns; the corpus and retriever are only read.
class Session {
 public:
  Session(Query query, const Corpus& corpus, const Retriever& retriever, SessionConfig cfg,
          std::string trajectory_id = {}, const LayoutProvider* layout = nullptr);

  /// Throws StepAfterTermination once the session has ended.
  StepResult step(std::string_view assistant_text);

  /// Ends the session after a policy failure (BudgetExhausted semantics).
  void abort(std::string reason);

  /// History bounded by max_prompt_chars; the initial query turn is always kept
  /// and the oldest Assistant/User pairs are dropped first.
  std::vector<Turn> prompt() const;

  const Trajectory& trajectory() const { return traj_; }
  Trajectory release() && { return std::move(traj_); }
  bool terminated() const { return traj_.terminated; }
  std::size_t step_count() const { return steps_; }
  const SessionConfig& config() const { return cfg_; }
  const std::vector<PageImage>& current_selection() const { return selection_; }
  /// Every layout proposal rendered into an observation, in order.
  const std::vector<BBox>& offered_regions() const { return offered_regions_; }

 private:
  Turn on_search(const ActionRecord& action);
  Turn on_select(const ActionRecord& action, StepResult& result);
  Turn on_crop(const ActionRecord& action);
  Turn soft_error(std::string_view message);

  const Corpus& corpus_;
  const Retriever& retriever_;
  SessionConfig cfg_;
  const LayoutProvider* layout_;
  Trajectory traj_;
  std::size_t steps_ = 0;
  std::optional<std::size_t> open_pool_;  // candidate_history entry not yet selected from
  std::vector<PageImage> selection_;
  std::size_t crops_ = 0;
  std::vector<BBox> offered_regions_;
};

Session create_session(const Query& query, const Corpus& corpus, const Retriever& retriever,
                       const SessionConfig& cfg);

struct RolloutOptions {
  std::string trajectory_id;
  const LayoutProvider* layout = nullptr;
};

/// Drives policy.generate / Session::step until the session terminates.
Trajectory run_rollout(Policy& policy, const Query& query, const Corpus& corpus, const Retriever& retriever,
                       const SessionConfig& cfg, const RolloutOptions& opts = {});

/// Replays a fixed list of assistant turns; throws TransportError once exhausted.
class ScriptedPolicy final : public Policy {
 public:
  explicit ScriptedPolicy(std::vector<std::string> turns) : turns_(std::move(turns)) {}
  std::string generate(std::span<const Turn> history) override;

 private:
  std::vector<std::string> turns_;
  std::size_t next_ = 0;
};

}  // namespace docrag
