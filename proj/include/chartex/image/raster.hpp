#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "chartex/core/dense.hpp"

namespace chartex {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;

  bool operator==(const Rgb&) const = default;
};

inline float color_distance(const Rgb& a, const Rgb& b) {
  const float dr = float(a.r) - float(b.r);
  const float dg = float(a.g) - float(b.g);
  const float db = float(a.b) - float(b.b);
  return std::sqrt(dr * dr + dg * dg + db * db);
}

// Planar 8-bit RGB raster. Planes are row-major Grids indexed (y, x).
struct RgbImage {
  GridU8 r, g, b;

  RgbImage() = default;
  RgbImage(int height, int width, Rgb fill = {255, 255, 255}) {
    r = GridU8::Constant(height, width, fill.r);
    g = GridU8::Constant(height, width, fill.g);
    b = GridU8::Constant(height, width, fill.b);
  }

  int height() const { return int(r.rows()); }
  int width() const { return int(r.cols()); }
  bool empty() const { return r.size() == 0; }

  Rgb at(int y, int x) const { return {r(y, x), g(y, x), b(y, x)}; }
  void set(int y, int x, Rgb c) {
    r(y, x) = c.r;
    g(y, x) = c.g;
    b(y, x) = c.b;
  }
  bool inside(int y, int x) const {
    return y >= 0 && y < height() && x >= 0 && x < width();
  }

  bool operator==(const RgbImage& o) const {
    return r.rows() == o.r.rows() && r.cols() == o.r.cols() && (r == o.r).all() &&
           (g == o.g).all() && (b == o.b).all();
  }
};

// PNG I/O (8-bit RGB; reads also accept RGBA/gray/palette and converts).
void write_png(const std::string& path, const RgbImage& img);
RgbImage read_png(const std::string& path);

// Single-channel dump helper, values clamped to [0,1] and scaled to 8 bit.
void write_gray_png(const std::string& path, const GridF& values);
inline void write_gray_png(const std::string& path, const GridD& values) {
  GridF f = values.cast<float>();
  write_gray_png(path, f);
}

}  // namespace chartex
