#include "docrag/perception.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "docrag/errors.hpp"

namespace docrag {

void ZoomConfig::validate() const {
  if (target_long_side <= 0 || min_crop_side <= 0) throw InvalidArgument("zoom sizes must be positive");
  if (target_long_side < min_crop_side) throw InvalidArgument("target_long_side must be >= min_crop_side");
}

SelectionResult select_images(const CandidateSet& candidates, std::span<const std::size_t> indices,
                              const Corpus& corpus) {
  SelectionResult out;
  std::set<std::size_t> taken;
  for (auto idx : indices) {
    if (idx >= candidates.size()) {
      out.dropped.push_back(idx);
      continue;
    }
    if (!taken.insert(idx).second) continue;
    out.pages.push_back(corpus.at(candidates.entries[idx].doc_id));
  }
  if (out.pages.empty()) throw EmptySelection();
  return out;
}

BBox clamp_bbox(const BBox& box, int width, int height) {
  if (width <= 0 || height <= 0) throw InvalidArgument("image dimensions must be positive");
  BBox c{std::clamp(box.x1, 0, width), std::clamp(box.y1, 0, height), std::clamp(box.x2, 0, width),
         std::clamp(box.y2, 0, height)};
  if (c.width() < 1 || c.height() < 1) {
    throw DegenerateBox("box " + to_string(box) + " does not overlap the " + std::to_string(width) + "x" +
                        std::to_string(height) + " image");
  }
  return c;
}

std::pair<int, int> zoomed_size(int crop_width, int crop_height, const ZoomConfig& cfg) {
  int long_side = std::max(crop_width, crop_height);
  if (long_side >= cfg.target_long_side) return {crop_width, crop_height};
  double scale = static_cast<double>(cfg.target_long_side) / long_side;
  auto scaled = [&](int side) {
    if (side == long_side) return cfg.target_long_side;
    return std::max(1, static_cast<int>(std::lround(side * scale)));
  };
  return {scaled(crop_width), scaled(crop_height)};
}

namespace {

Raster resample(const Raster& src, const BBox& box, int out_w, int out_h, Interpolation mode) {
  Raster out(out_w, out_h);
  const int cw = box.width();
  const int ch = box.height();
  if (mode == Interpolation::Nearest) {
    for (int oy = 0; oy < out_h; ++oy) {
      int sy = box.y1 + static_cast<int>((2LL * oy + 1) * ch / (2LL * out_h));
      for (int ox = 0; ox < out_w; ++ox) {
        int sx = box.x1 + static_cast<int>((2LL * ox + 1) * cw / (2LL * out_w));
        std::copy_n(src.at(sx, sy), 3, out.at(ox, oy));
      }
    }
    return out;
  }
  // Bilinear with pixel-center alignment, clamped to the crop.
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = std::clamp((oy + 0.5) * ch / out_h - 0.5, 0.0, ch - 1.0);
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, ch - 1);
    double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = std::clamp((ox + 0.5) * cw / out_w - 0.5, 0.0, cw - 1.0);
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, cw - 1);
      double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        double top = src.at(box.x1 + x0, box.y1 + y0)[c] * (1 - wx) + src.at(box.x1 + x1, box.y1 + y0)[c] * wx;
        double bot = src.at(box.x1 + x0, box.y1 + y1)[c] * (1 - wx) + src.at(box.x1 + x1, box.y1 + y1)[c] * wx;
        out.at(ox, oy)[c] = static_cast<std::uint8_t>(std::lround(top * (1 - wy) + bot * wy));
      }
    }
  }
  return out;
}

}  // namespace

PageImage crop_zoom(const PageImage& image, const BBox& box, const ZoomConfig& cfg, std::size_t ordinal) {
  cfg.validate();
  BBox clamped = clamp_bbox(box, image.width, image.height);
  if (clamped.width() < cfg.min_crop_side || clamped.height() < cfg.min_crop_side) {
    throw DegenerateBox("crop " + to_string(clamped) + " is smaller than " + std::to_string(cfg.min_crop_side) +
                        " px on a side");
  }
  auto [out_w, out_h] = zoomed_size(clamped.width(), clamped.height(), cfg);

  PageImage out;
  out.doc_id = image.doc_id + "#crop" + std::to_string(ordinal);
  out.width = out_w;
  out.height = out_h;

  std::shared_ptr<const Raster> source = image.raster;
  if (!source && !image.image_path.empty()) source = std::make_shared<const Raster>(read_ppm(image.image_path));
  if (source) {
    if (source->width != image.width || source->height != image.height) {
      throw RasterError("raster of " + image.doc_id + " does not match the declared page size");
    }
    out.raster = std::make_shared<const Raster>(resample(*source, clamped, out_w, out_h, cfg.interpolation));
  }
  return out;
}

}  // namespace docrag
