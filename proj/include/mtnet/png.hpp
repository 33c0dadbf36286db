#pragma once

// Minimal RGB8 PNG writer on top of zlib, plus a couple of heatmap/frame
// dump helpers used by the diagnose tooling.

#include <zlib.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "mtnet/episode.hpp"

namespace mtnet {

namespace png_detail {

inline void put_u32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(uint8_t(x >> 24));
  v.push_back(uint8_t(x >> 16));
  v.push_back(uint8_t(x >> 8));
  v.push_back(uint8_t(x));
}

inline void chunk(std::ofstream& os, const char* type, const std::vector<uint8_t>& data) {
  std::vector<uint8_t> head;
  put_u32(head, uint32_t(data.size()));
  os.write(reinterpret_cast<const char*>(head.data()), 4);
  os.write(type, 4);
  if (!data.empty()) os.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
  uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), uInt(data.size()));
  std::vector<uint8_t> tail;
  put_u32(tail, uint32_t(crc));
  os.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace png_detail

/// rgb holds h rows of w pixels, 3 bytes each, row-major.
inline void write_png(const std::filesystem::path& path, const std::vector<uint8_t>& rgb, int w,
                      int h) {
  if (w <= 0 || h <= 0 || rgb.size() != size_t(w) * size_t(h) * 3)
    throw FormatError("png: pixel buffer does not match image size");
  std::vector<uint8_t> raw;
  raw.reserve(size_t(h) * (1 + size_t(w) * 3));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), rgb.begin() + size_t(y) * w * 3, rgb.begin() + size_t(y + 1) * w * 3);
  }
  uLongf zlen = compressBound(uLong(raw.size()));
  std::vector<uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), uLong(raw.size()), 6) != Z_OK)
    throw FormatError("png: deflate failed");
  z.resize(zlen);

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open for writing: " + path.string());
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  os.write(reinterpret_cast<const char*>(sig), 8);
  std::vector<uint8_t> ihdr;
  png_detail::put_u32(ihdr, uint32_t(w));
  png_detail::put_u32(ihdr, uint32_t(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  png_detail::chunk(os, "IHDR", ihdr);
  png_detail::chunk(os, "IDAT", z);
  png_detail::chunk(os, "IEND", {});
  if (!os) throw FormatError("short write: " + path.string());
}

/// Five-stop blue-to-yellow ramp.
inline void heat_color(double t, uint8_t* rgb) {
  static const double stops[5][3] = {{0.05, 0.03, 0.30},
                                     {0.12, 0.38, 0.65},
                                     {0.13, 0.65, 0.52},
                                     {0.55, 0.80, 0.25},
                                     {0.99, 0.90, 0.15}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int k = std::min(3, int(t));
  const double u = t - k;
  for (int c = 0; c < 3; ++c) {
    const double v = stops[k][c] * (1 - u) + stops[k + 1][c] * u;
    rgb[c] = uint8_t(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
  }
}

/// Matrix as a heatmap, one pixel per entry, scaled into [lo, hi].
inline void write_heatmap(const std::filesystem::path& path, const MatF& m, double lo, double hi) {
  const int w = int(m.cols()), h = int(m.rows());
  if (!(hi > lo)) throw FormatError("png: empty heatmap range");
  std::vector<uint8_t> rgb(size_t(w) * size_t(h) * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      heat_color((double(m(y, x)) - lo) / (hi - lo), &rgb[(size_t(y) * w + x) * 3]);
  write_png(path, rgb, w, h);
}

/// One visual frame of an episode as a PNG.
inline void write_frame_png(const std::filesystem::path& path, const Episode& ep, int t) {
  if (t < 0 || t >= ep.frames()) throw FormatError("png: frame index out of range");
  std::vector<uint8_t> rgb(size_t(ep.width) * size_t(ep.height) * 3);
  for (size_t i = 0; i < rgb.size(); ++i)
    rgb[i] = uint8_t(std::lround(255.0f * std::clamp(ep.visual(t, Eigen::Index(i)), 0.0f, 1.0f)));
  write_png(path, rgb, ep.width, ep.height);
}

}  // namespace mtnet
