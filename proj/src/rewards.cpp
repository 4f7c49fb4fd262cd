#include "docrag/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "docrag/errors.hpp"

namespace docrag {

void RewardWeights::validate() const {
  for (double l : lambdas) {
    if (!std::isfinite(l) || l < 0.0) throw InvalidArgument("reward weights must be finite and non-negative");
  }
}

namespace {

bool contains_run(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

int NormalizedMatchJudge::score(std::string_view generated, std::string_view reference, std::string_view) const {
  std::string gen = normalize_answer(generated);
  std::string ref = normalize_answer(reference);
  if (gen == ref) return 1;
  auto g = split_whitespace(gen);
  auto r = split_whitespace(ref);
  return (contains_run(g, r) || contains_run(r, g)) ? 1 : 0;
}

double pattern_reward(const Trajectory& traj) {
  if (!traj.soft_error_steps.empty() || traj.policy_error) return 0.0;
  const Turn* last = nullptr;
  for (const auto& t : traj.turns) {
    if (t.role != Role::Assistant) continue;
    if (!t.parsed || t.parsed->kind == ActionKind::Malformed) return 0.0;
    if (!t.thought || t.thought->empty()) return 0.0;
    last = &t;
  }
  return (last && last->parsed->kind == ActionKind::Answer) ? 1.0 : 0.0;
}

std::vector<std::string> interleave_lists(std::span<const std::vector<std::string>> lists) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  std::size_t depth = 0;
  for (const auto& l : lists) depth = std::max(depth, l.size());
  for (std::size_t rank = 0; rank < depth; ++rank) {
    for (const auto& l : lists) {
      if (rank < l.size() && seen.insert(l[rank]).second) out.push_back(l[rank]);
    }
  }
  return out;
}

std::vector<std::string> interleave_candidates(std::span<const CandidateSet> history) {
  std::vector<std::vector<std::string>> lists;
  lists.reserve(history.size());
  for (const auto& set : history) {
    auto& l = lists.emplace_back();
    for (const auto& c : set.entries) l.push_back(c.doc_id);
  }
  return interleave_lists(lists);
}

double ndcg(std::span<const std::string> ranked, const std::set<std::string>& golden) {
  if (golden.empty() || ranked.empty()) return 0.0;
  double dcg = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (golden.contains(ranked[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  double idcg = 0.0;
  for (std::size_t i = 0; i < golden.size(); ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

double retrieval_reward(const Trajectory& traj, const std::set<std::string>& golden) {
  if (traj.candidate_history.empty()) return 0.0;
  auto merged = interleave_candidates(traj.candidate_history);
  return ndcg(merged, golden);
}

double selection_reward(const Trajectory& traj, const std::set<std::string>& golden) {
  const std::size_t m = traj.candidate_history.size();
  if (m == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& pool = traj.candidate_history[i];
    auto sel = std::find_if(traj.selected_history.begin(), traj.selected_history.end(),
                            [i](const SelectionStep& s) { return s.search_index == i; });
    if (sel == traj.selected_history.end() || sel->doc_ids.empty()) continue;

    std::set<std::string> target;
    for (const auto& c : pool.entries) {
      if (golden.contains(c.doc_id)) target.insert(c.doc_id);
    }
    if (target.empty() && !pool.empty()) target.insert(pool.entries.front().doc_id);

    std::size_t hits = 0;
    for (const auto& d : sel->doc_ids) hits += target.contains(d) ? 1 : 0;
    sum += static_cast<double>(hits) / static_cast<double>(sel->doc_ids.size());
  }
  return sum / static_cast<double>(m);
}

double iou(const BBox& a, const BBox& b) {
  long long ix = std::max(0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  long long iy = std::max(0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  long long inter = ix * iy;
  long long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

double crop_reward(std::span<const PredictedBox> predicted, const std::map<std::string, std::vector<BBox>>& golden,
                   const std::set<std::string>& selected_doc_ids) {
  if (predicted.empty()) {
    for (const auto& doc : selected_doc_ids) {
      auto it = golden.find(doc);
      if (it != golden.end() && !it->second.empty()) return 0.0;
    }
    return 1.0;
  }
  double sum = 0.0;
  for (const auto& p : predicted) {
    double best = 0.0;
    if (auto it = golden.find(p.doc_id); it != golden.end()) {
      for (const auto& g : it->second) best = std::max(best, iou(p.box, g));
    }
    sum += best;
  }
  return sum / static_cast<double>(predicted.size());
}

double crop_reward(const Trajectory& traj) {
  std::set<std::string> selected;
  for (const auto& s : traj.selected_history) selected.insert(s.doc_ids.begin(), s.doc_ids.end());
  return crop_reward(traj.predicted_boxes, traj.query.golden_boxes, selected);
}

double outcome_reward(const Judge& judge, const Trajectory& traj) {
  if (!traj.final_answer) return 0.0;
  return judge.score(*traj.final_answer, traj.query.reference_answer, traj.query.text) == 1 ? 1.0 : 0.0;
}

RewardBreakdown total_reward(const RewardComponents& c, const RewardWeights& w) {
  w.validate();
  for (double v : {c.r_pat, c.r_ir, c.r_sel, c.r_crop, c.r_ans}) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("reward components must lie in [0,1]");
  }
  RewardBreakdown b;
  b.r_pat = c.r_pat;
  b.r_ir = c.r_ir;
  b.r_sel = c.r_sel;
  b.r_crop = c.r_crop;
  b.r_ans = c.r_ans;
  b.lambdas = w.lambdas;
  b.total = b.recompute_total();
  return b;
}

RewardBreakdown score_trajectory(const Trajectory& traj, const Judge& judge, const RewardWeights& w) {
  const auto& golden = traj.query.golden_doc_ids;
  RewardComponents c;
  c.r_pat = pattern_reward(traj);
  c.r_ir = retrieval_reward(traj, golden);
  c.r_sel = selection_reward(traj, golden);
  c.r_crop = crop_reward(traj);
  c.r_ans = outcome_reward(judge, traj);
  return total_reward(c, w);
}

}  // namespace docrag
