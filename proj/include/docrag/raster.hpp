#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace docrag {

/// Interleaved 8-bit RGB pixels, row-major, origin top-left.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  Raster() = default;
  Raster(int w, int h);

  std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }

  bool operator==(const Raster&) const = default;
};

// Binary PPM (P6, maxval 255) is the only on-disk raster format.
Raster read_ppm(const std::filesystem::path& path);
Raster decode_ppm(const std::string& bytes);
std::string encode_ppm(const Raster& raster);
void write_ppm(const std::filesystem::path& path, const Raster& raster);

/// Width and height from a PPM header without reading the pixel payload.
std::pair<int, int> read_ppm_dimensions(const std::filesystem::path& path);

std::string base64_encode(const std::string& bytes);

}  // namespace docrag
