#include "docrag/raster.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "docrag/errors.hpp"

namespace docrag {

Raster::Raster(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {
  if (w <= 0 || h <= 0) throw RasterError("raster dimensions must be positive");
}

namespace {

struct PpmHeader {
  int width = 0;
  int height = 0;
  std::size_t data_offset = 0;
};

// Header: "P6" <ws> width <ws> height <ws> 255 <single ws>, '#' comments allowed.
PpmHeader parse_header(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip();
    long long v = 0;
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) throw RasterError("ppm dimension too large");
      ++pos;
    }
    if (pos == start) throw RasterError("ppm header: expected a number");
    return static_cast<int>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw RasterError("not a binary PPM (P6)");
  pos = 2;
  PpmHeader h;
  h.width = number();
  h.height = number();
  int maxval = number();
  if (maxval != 255) throw RasterError("ppm maxval must be 255");
  if (h.width <= 0 || h.height <= 0) throw RasterError("ppm dimensions must be positive");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw RasterError("ppm header not terminated");
  }
  h.data_offset = pos + 1;
  return h;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RasterError("cannot open raster " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Raster decode_ppm(const std::string& bytes) {
  PpmHeader h = parse_header(bytes);
  std::size_t need = static_cast<std::size_t>(h.width) * h.height * 3;
  if (bytes.size() < h.data_offset + need) throw RasterError("ppm payload truncated");
  Raster r(h.width, h.height);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset), need, r.pixels.begin());
  return r;
}

Raster read_ppm(const std::filesystem::path& path) { return decode_ppm(slurp(path)); }

std::pair<int, int> read_ppm_dimensions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RasterError("cannot open raster " + path.string());
  std::string head(256, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  PpmHeader h = parse_header(head);
  return {h.width, h.height};
}

std::string encode_ppm(const Raster& raster) {
  std::string out = "P6\n" + std::to_string(raster.width) + " " + std::to_string(raster.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(raster.pixels.data()), raster.pixels.size());
  return out;
}

void write_ppm(const std::filesystem::path& path, const Raster& raster) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write raster " + path.string());
  auto bytes = encode_ppm(raster);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write on " + path.string());
}

std::string base64_encode(const std::string& bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    std::uint32_t n = (static_cast<std::uint8_t>(bytes[i]) << 16) | (static_cast<std::uint8_t>(bytes[i + 1]) << 8) |
                      static_cast<std::uint8_t>(bytes[i + 2]);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  std::size_t rest = bytes.size() - i;
  if (rest) {
    std::uint32_t n = static_cast<std::uint8_t>(bytes[i]) << 16;
    if (rest == 2) n |= static_cast<std::uint8_t>(bytes[i + 1]) << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += rest == 2 ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

}  // namespace docrag
