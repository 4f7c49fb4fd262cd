#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "docrag/environment.hpp"
#include "docrag/rewards.hpp"

namespace docrag {

/// Flat key/value settings. Sources merge in call order, later ones winning;
/// the CLI applies config file, then DOCRAG_* environment variables, then flags.
///
/// File format: one `key = value` per line, `#` starts a comment line, blank
/// lines are ignored. Keys are lowercase; environment variable DOCRAG_T_MAX
/// maps to key `t_max`.
class Config {
 public:
  /// Throws IoError if unreadable, SchemaError (with line) on a line without '='.
  void merge_file(const std::filesystem::path& path);
  /// Reads every variable in `environ` starting with `prefix`.
  void merge_environment(const char* const* environ, std::string_view prefix = "DOCRAG_");
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, std::string fallback) const;
  /// Typed getters throw InvalidArgument when the value does not parse.
  std::optional<double> get_double(const std::string& key) const;
  std::optional<std::size_t> get_size(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Keys: t_max, k, max_prompt_chars, max_response_chars, zoom_long_side,
/// zoom_min_side, interpolation (nearest|bilinear), prompt_template (file path).
SessionConfig session_config_from(const Config& cfg);

/// Parses "l1,l2,l3,l4,l5".
RewardWeights parse_weights(std::string_view text);

/// Key: weights.
RewardWeights weights_from(const Config& cfg);

struct StatsReport {
  std::size_t trajectories = 0;
  double recall_search_only = 0.0;      // golden in interleaved candidates
  double recall_after_selection = 0.0;  // golden in some selected set
  double crop_frequency = 0.0;          // fraction with at least one crop
  std::size_t implication_violations = 0;  // golden selected but never retrieved
  std::size_t scored = 0;               // trajectories carrying a reward breakdown
  RewardComponents mean_components;
  double mean_total = 0.0;

  nlohmann::json to_json() const;
};

/// Throws InvalidArgument on empty input. Reward means cover scored trajectories only.
StatsReport compute_stats(std::span<const Trajectory> trajectories);

}  // namespace docrag
