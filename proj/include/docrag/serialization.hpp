#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "docrag/core.hpp"
#include "docrag/environment.hpp"

namespace docrag {

inline constexpr int kTrajectorySchemaVersion = 1;

/// How page pixels travel inside JSON.
enum class ImageWire {
  Base64,   // in-memory rasters embedded as base64 PPM under "data_base64"
  FileUrl,  // "url": "file://<image_path>" for pages backed by a file
};

nlohmann::json to_json(const BBox& b);
BBox bbox_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Query& q);
Query query_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PageImage& p, ImageWire wire = ImageWire::Base64);
PageImage page_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ActionRecord& a);
ActionRecord action_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Turn& t, ImageWire wire = ImageWire::Base64);
Turn turn_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CandidateSet& c);
CandidateSet candidates_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RewardBreakdown& r);
RewardBreakdown reward_from_json(const nlohmann::json& j);

nlohmann::json to_json(const StepResult& s, ImageWire wire = ImageWire::Base64);
StepResult step_result_from_json(const nlohmann::json& j);

/// Persisted trajectory record (schema_version 1).
nlohmann::json to_json(const Trajectory& t, ImageWire wire = ImageWire::Base64);
/// Throws SchemaError on unknown schema versions or missing fields.
Trajectory trajectory_from_json(const nlohmann::json& j);

std::string base64_decode(std::string_view text);

/// Non-empty lines of a JSONL file parsed as JSON; SchemaError carries the line number.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

/// Appends records by writing the old content plus the new lines to a temporary
/// file and renaming it over `path`, so readers only ever see whole records.
void append_jsonl(const std::filesystem::path& path, std::span<const nlohmann::json> records);
void write_jsonl(const std::filesystem::path& path, std::span<const nlohmann::json> records);

/// Line-delimited trajectory file. In-memory observation rasters (crops among
/// them) are written beside it as "<traj_id>_<step>[_<n>].ppm" and referenced by path.
class TrajectoryStore {
 public:
  explicit TrajectoryStore(std::filesystem::path path) : path_(std::move(path)) {}

  void append(std::span<const Trajectory> trajectories) const;
  std::vector<Trajectory> load() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace docrag
