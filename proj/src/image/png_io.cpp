#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "chartex/core/error.hpp"
#include "chartex/image/raster.hpp"

namespace chartex {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::string& path, const RgbImage& img) {
  require(!img.empty(), "IoError", "refusing to write empty image " + path);
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  require(fp != nullptr, "IoError", "cannot open " + path + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("IoError", "libpng failure writing " + path);
  }
  png_init_io(png, fp.get());
  // Fixed settings keep the byte stream reproducible for identical pixels.
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(size_t(img.width()) * 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      row[size_t(x) * 3 + 0] = img.r(y, x);
      row[size_t(x) * 3 + 1] = img.g(y, x);
      row[size_t(x) * 3 + 2] = img.b(y, x);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  require(fp != nullptr, "IoError", "cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("IoError", "libpng failure reading " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const int w = int(png_get_image_width(png, info));
  const int h = int(png_get_image_height(png, info));
  RgbImage img(h, w);
  std::vector<png_byte> row(size_t(w) * 3);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      img.set(y, x, {row[size_t(x) * 3], row[size_t(x) * 3 + 1], row[size_t(x) * 3 + 2]});
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_gray_png(const std::string& path, const GridF& values) {
  RgbImage img(int(values.rows()), int(values.cols()));
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const float v = std::min(1.f, std::max(0.f, values(y, x)));
      const auto g = std::uint8_t(std::lround(v * 255.f));
      img.set(y, x, {g, g, g});
    }
  write_png(path, img);
}

}  // namespace chartex
