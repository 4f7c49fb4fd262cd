#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "docrag/core.hpp"
#include "docrag/perception.hpp"
#include "docrag/retrieval.hpp"

namespace docrag {

/// Labelled layout region of a synthetic page; `value` is the token a reader
/// extracts from it.
struct Region {
  BBox box;
  std::string label;
  std::string value;
};

/// Per-query facts the toy agent and oracle need beyond the Query itself.
struct MicroTask {
  std::string asked_label;
  std::vector<std::string> search_templates;  // [0] retrieves the golden page first
  std::size_t golden_region = 0;
  bool needs_crop = false;  // golden page is illegible without zooming
};

/// Deterministic synthetic corpus small enough for exhaustive checks and toy training.
struct MicroWorld {
  std::uint64_t seed = 0;
  Corpus corpus;
  std::vector<Query> queries;
  std::vector<MicroTask> tasks;                        // parallel to queries
  std::map<std::string, std::vector<Region>> layout;   // doc_id -> regions
  std::map<std::string, bool> legible;                 // doc_id -> readable without a crop
};

inline constexpr int kMicroPageWidth = 1000;
inline constexpr int kMicroPageHeight = 1400;
inline constexpr std::size_t kMicroRegionsPerPage = 4;
inline constexpr std::size_t kMicroSearchTemplates = 3;

/// n_docs >= 5, 1 <= n_queries <= n_docs. Each answer token occurs in exactly one
/// page and one region. Queries alternate between legible golden pages (no golden
/// boxes) and illegible ones whose golden box is the answer region.
MicroWorld generate_micro_world(std::uint64_t seed, std::size_t n_docs, std::size_t n_queries);

/// What a reader extracts from `doc_id` for task `query_index`: through the crop
/// when one was taken, otherwise from the whole page if it is legible.
/// Returns "unknown" when nothing relevant can be read.
std::string read_evidence(const MicroWorld& world, std::size_t query_index, const std::string& doc_id,
                          const std::optional<BBox>& crop);

/// Layout proposals straight from the world's region table.
class MicroLayoutProvider final : public LayoutProvider {
 public:
  explicit MicroLayoutProvider(const MicroWorld& world) : world_(world) {}
  std::vector<BBox> propose(const PageImage& image) const override;

 private:
  const MicroWorld& world_;
};

}  // namespace docrag
