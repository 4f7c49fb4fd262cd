#pragma once

#include <span>
#include <vector>

#include "docrag/core.hpp"
#include "docrag/retrieval.hpp"

namespace docrag {

enum class Interpolation { Nearest, Bilinear };

struct ZoomConfig {
  int target_long_side = 1344;
  int min_crop_side = 28;
  Interpolation interpolation = Interpolation::Nearest;

  void validate() const;
  bool operator==(const ZoomConfig&) const = default;
};

struct SelectionResult {
  std::vector<PageImage> pages;      // rank order of first mention, no duplicates
  std::vector<std::size_t> dropped;  // out-of-range indices, reported as warnings
};

/// Pages at the requested ranks. Throws EmptySelection when nothing survives.
SelectionResult select_images(const CandidateSet& candidates, std::span<const std::size_t> indices,
                              const Corpus& corpus);

/// Clips to [0,width]x[0,height]; throws DegenerateBox if a side drops below 1 pixel.
BBox clamp_bbox(const BBox& box, int width, int height);

/// Crops `box` (after clamping) and upscales so the long side reaches
/// cfg.target_long_side; crops that are already large enough keep their size.
/// Pages without pixels produce a dimension-only result. The output doc_id is
/// "<src>#crop<ordinal>".
PageImage crop_zoom(const PageImage& image, const BBox& box, const ZoomConfig& cfg, std::size_t ordinal = 0);

/// Output size crop_zoom would produce for a clamped box.
std::pair<int, int> zoomed_size(int crop_width, int crop_height, const ZoomConfig& cfg);

/// Region proposals for a page (layout-analysis stand-in).
class LayoutProvider {
 public:
  virtual ~LayoutProvider() = default;
  virtual std::vector<BBox> propose(const PageImage& image) const = 0;
};

}  // namespace docrag
