#include "docrag/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "docrag/errors.hpp"

namespace docrag {

void RolloutGroup::validate() const {
  if (rewards.size() < 2) throw InvalidArgument("a rollout group needs at least 2 members");
  if (!trajectory_ids.empty() && trajectory_ids.size() != rewards.size()) {
    throw InvalidArgument("one trajectory id per reward required");
  }
}

std::vector<double> group_advantages(std::span<const double> rewards, double eps) {
  if (rewards.size() < 2) throw InvalidArgument("group_advantages needs at least 2 rewards");
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  for (double r : rewards) {
    if (!std::isfinite(r)) throw InvalidArgument("rewards must be finite");
  }
  std::vector<double> out(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) return out;

  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double stddev = std::sqrt(var / n);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (stddev + eps);
  return out;
}

}  // namespace docrag
