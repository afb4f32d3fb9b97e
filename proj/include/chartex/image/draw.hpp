#pragma once

#include <string>

#include "chartex/core/types.hpp"
#include "chartex/image/raster.hpp"

namespace chartex {

// Integer-pixel rasterization, no anti-aliasing. All ops clip to the image.

void fill_rect(RgbImage& img, const Rect& r, Rgb c);
void draw_rect_outline(RgbImage& img, const Rect& r, Rgb c, int stroke = 1);
void fill_disk(RgbImage& img, Point center, float radius, Rgb c);
// Thick segment drawn as a Bresenham walk with a square brush of `width` px.
void draw_segment(RgbImage& img, Point a, Point b, Rgb c, int width = 1);

// 5x7 bitmap font, scaled by an integer factor. Lowercase renders with the
// uppercase glyphs; the string content is what matters for annotations.
int text_width(const std::string& s, int scale = 1);
int text_height(int scale = 1);
// Draws with top-left at (x, y); returns the tight bounding rect.
Rect draw_text(RgbImage& img, int x, int y, const std::string& s, Rgb c, int scale = 1);
// Rotated 90 degrees counter-clockwise (reads bottom-up), for y-axis titles.
Rect draw_text_rot90(RgbImage& img, int x, int y, const std::string& s, Rgb c, int scale = 1);

}  // namespace chartex
