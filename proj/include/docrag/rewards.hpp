#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "docrag/core.hpp"

namespace docrag {

struct RewardWeights {
  Lambdas lambdas = kDefaultLambdas;

  /// Throws InvalidArgument on a negative or non-finite weight.
  void validate() const;
};

/// Binary answer judge.
class Judge {
 public:
  virtual ~Judge() = default;
  virtual int score(std::string_view generated, std::string_view reference, std::string_view question) const = 0;
};

/// 1 iff the normalized answers are equal, or the shorter one occurs in the
/// longer one as a contiguous run of whole tokens.
class NormalizedMatchJudge final : public Judge {
 public:
  int score(std::string_view generated, std::string_view reference, std::string_view question) const override;
};

/// 1 iff every Assistant turn is a well-formed action with a nonempty thought,
/// no soft errors occurred, and the last action is Answer.
double pattern_reward(const Trajectory& traj);

/// Rank-interleaved merge of several result lists; first occurrence of a doc wins.
std::vector<std::string> interleave_candidates(std::span<const CandidateSet> history);
std::vector<std::string> interleave_lists(std::span<const std::vector<std::string>> lists);

/// Binary-gain NDCG with log2(i + 1) discounts over the whole ranked list.
double ndcg(std::span<const std::string> ranked, const std::set<std::string>& golden);

double retrieval_reward(const Trajectory& traj, const std::set<std::string>& golden);

/// Mean over search steps of selection precision against the golden set, with
/// the rank-0 candidate standing in when a pool holds no golden page.
double selection_reward(const Trajectory& traj, const std::set<std::string>& golden);

double iou(const BBox& a, const BBox& b);

/// Mean best-match IoU of predicted boxes against golden boxes on the same page.
/// Without predictions: 1 when none of `selected_doc_ids` has golden boxes, else 0.
double crop_reward(std::span<const PredictedBox> predicted, const std::map<std::string, std::vector<BBox>>& golden,
                   const std::set<std::string>& selected_doc_ids);
double crop_reward(const Trajectory& traj);

/// 0 without a final answer; otherwise the judge's verdict. Judge exceptions propagate.
double outcome_reward(const Judge& judge, const Trajectory& traj);

struct RewardComponents {
  double r_pat = 0.0;
  double r_ir = 0.0;
  double r_sel = 0.0;
  double r_crop = 0.0;
  double r_ans = 0.0;
};

/// Weighted sum in component order. Rejects components outside [0,1] and negative weights.
RewardBreakdown total_reward(const RewardComponents& c, const RewardWeights& w);

/// All five components plus the total for a finished trajectory.
RewardBreakdown score_trajectory(const Trajectory& traj, const Judge& judge, const RewardWeights& w = {});

}  // namespace docrag
