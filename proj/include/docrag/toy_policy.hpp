#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "docrag/environment.hpp"
#include "docrag/grpo.hpp"
#include "docrag/micro_world.hpp"
#include "docrag/random.hpp"
#include "docrag/rewards.hpp"

namespace docrag {

struct DecisionTable {
  std::string name;
  std::vector<double> logits;
};

/// Tabular softmax policy for the micro-world. Every query owns its own tables,
/// laid out as: style (think / no think), search template, one select table per
/// search template, crop (skip or region i), answer (read evidence / "unknown").
struct ToyPolicy {
  double temperature = 1.0;
  std::vector<std::vector<DecisionTable>> tables;  // [query][table]

  static constexpr std::size_t kStyle = 0;
  static constexpr std::size_t kSearch = 1;
  static constexpr std::size_t kFirstSelect = 2;
  static constexpr std::size_t crop_table() { return kFirstSelect + kMicroSearchTemplates; }
  static constexpr std::size_t answer_table() { return crop_table() + 1; }

  static ToyPolicy uniform(const MicroWorld& world, std::size_t k, double temperature = 1.0);
  /// Logits tilted by `strength` toward the best option at every decision point.
  static ToyPolicy oracle(const MicroWorld& world, const Retriever& retriever, std::size_t k, double strength = 8.0,
                          double temperature = 1.0);

  std::vector<double> probabilities(std::size_t query, std::size_t table) const;
  bool all_finite() const;

  nlohmann::json to_json() const;
  static ToyPolicy from_json(const nlohmann::json& j);
};

/// Mean KL(p || ref) over every decision table.
double policy_kl(const ToyPolicy& p, const ToyPolicy& ref);

struct Decision {
  std::size_t table = 0;
  std::size_t option = 0;
};

/// Drives one rollout for one query by sampling the toy policy (greedy argmax
/// when no Rng is given) and logs each decision it takes.
class ToyAgent final : public Policy {
 public:
  ToyAgent(const MicroWorld& world, const ToyPolicy& policy, std::size_t query_index, Rng* rng);
  std::string generate(std::span<const Turn> history) override;
  const std::vector<Decision>& decisions() const { return decisions_; }

 private:
  std::size_t choose(std::size_t table);
  std::string emit(const ActionRecord& action) const;

  const MicroWorld& world_;
  const ToyPolicy& policy_;
  std::size_t query_;
  Rng* rng_;
  std::vector<Decision> decisions_;
  int stage_ = 0;
  bool think_ = true;
  std::size_t template_ = 0;
  std::optional<std::string> selected_;
  std::optional<BBox> crop_;
};

struct ToyTrainConfig {
  std::size_t group_size = kDefaultGroupSize;
  double lr = 1.0;
  std::size_t iterations = 500;
  double kl_coeff = 0.01;
  std::uint64_t seed = 0;
  RewardWeights weights;
  SessionConfig session;
};

struct IterationMetrics {
  std::size_t iteration = 0;
  double mean_total = 0.0;
  double r_pat = 0.0;
  double r_ir = 0.0;
  double r_sel = 0.0;
  double r_crop = 0.0;
  double r_ans = 0.0;
  double selection_accuracy = 0.0;  // mean precision of select steps against golden pages

  nlohmann::json to_json() const;
};

struct TrainingReport {
  std::vector<IterationMetrics> iterations;
  ToyPolicy final_policy;

  double initial_mean() const;
  /// Mean of mean_total over the last `window` iterations.
  double final_mean(std::size_t window = 10) const;
};

/// Group-relative score-function training: per query, G sampled rollouts are
/// scored, advantages normalized within the group, and every taken decision's
/// logits move along lr * advantage * grad log pi. A KL pull toward the initial
/// policy (scaled by kl_coeff) follows each iteration. Throws TrainingDivergence
/// on non-finite logits.
TrainingReport toy_train(const MicroWorld& world, ToyPolicy policy, const ToyTrainConfig& cfg);

struct EvalReport {
  std::vector<Trajectory> trajectories;  // scored
  IterationMetrics metrics;
};

/// Samples `rollouts_per_query` scored rollouts per query (greedy when `greedy`).
EvalReport evaluate_toy(const MicroWorld& world, const ToyPolicy& policy, std::size_t rollouts_per_query,
                        std::uint64_t seed, const ToyTrainConfig& cfg, bool greedy = false);

}  // namespace docrag
