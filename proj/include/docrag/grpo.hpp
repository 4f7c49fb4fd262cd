#pragma once

#include <span>
#include <string>
#include <vector>

namespace docrag {

inline constexpr double kDefaultAdvantageEps = 1e-8;
inline constexpr std::size_t kDefaultGroupSize = 5;

/// Rewards of G rollouts sampled for the same query.
struct RolloutGroup {
  std::string query_id;
  std::vector<double> rewards;
  std::vector<std::string> trajectory_ids;

  /// Throws InvalidArgument unless G >= 2 and the ids (when given) match the rewards.
  void validate() const;
};

/// a_i = (r_i - mean) / (population_std + eps). A group whose rewards are all
/// identical gets all-zero advantages. Rejects groups smaller than 2 and eps <= 0.
std::vector<double> group_advantages(std::span<const double> rewards, double eps = kDefaultAdvantageEps);

}  // namespace docrag
