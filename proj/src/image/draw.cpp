#include "chartex/image/draw.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>

namespace chartex {
namespace {

// Column-major 5x7 glyphs, bit 0 = top row.
struct Glyph {
    char ch;
    std::array<std::uint8_t, 5> cols;
};

constexpr Glyph kGlyphs[] = {
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00}},
    {'.', {0x00, 0x60, 0x60, 0x00, 0x00}},
    {',', {0x00, 0x40, 0x20, 0x00, 0x00}},
    {'-', {0x08, 0x08, 0x08, 0x08, 0x08}},
    {'+', {0x08, 0x08, 0x3E, 0x08, 0x08}},
    {':', {0x00, 0x36, 0x36, 0x00, 0x00}},
    {'%', {0x23, 0x13, 0x08, 0x64, 0x62}},
    {'(', {0x00, 0x1C, 0x22, 0x41, 0x00}},
    {')', {0x00, 0x41, 0x22, 0x1C, 0x00}},
    {'/', {0x20, 0x10, 0x08, 0x04, 0x02}},
    {'_', {0x40, 0x40, 0x40, 0x40, 0x40}},
    {'0', {0x3E, 0x51, 0x49, 0x45, 0x3E}},
    {'1', {0x00, 0x42, 0x7F, 0x40, 0x00}},
    {'2', {0x42, 0x61, 0x51, 0x49, 0x46}},
    {'3', {0x21, 0x41, 0x45, 0x4B, 0x31}},
    {'4', {0x18, 0x14, 0x12, 0x7F, 0x10}},
    {'5', {0x27, 0x45, 0x45, 0x45, 0x39}},
    {'6', {0x3C, 0x4A, 0x49, 0x49, 0x30}},
    {'7', {0x01, 0x71, 0x09, 0x05, 0x03}},
    {'8', {0x36, 0x49, 0x49, 0x49, 0x36}},
    {'9', {0x06, 0x49, 0x49, 0x29, 0x1E}},
    {'A', {0x7E, 0x11, 0x11, 0x11, 0x7E}},
    {'B', {0x7F, 0x49, 0x49, 0x49, 0x36}},
    {'C', {0x3E, 0x41, 0x41, 0x41, 0x22}},
    {'D', {0x7F, 0x41, 0x41, 0x22, 0x1C}},
    {'E', {0x7F, 0x49, 0x49, 0x49, 0x41}},
    {'F', {0x7F, 0x09, 0x09, 0x09, 0x01}},
    {'G', {0x3E, 0x41, 0x49, 0x49, 0x7A}},
    {'H', {0x7F, 0x08, 0x08, 0x08, 0x7F}},
    {'I', {0x00, 0x41, 0x7F, 0x41, 0x00}},
    {'J', {0x20, 0x40, 0x41, 0x3F, 0x01}},
    {'K', {0x7F, 0x08, 0x14, 0x22, 0x41}},
    {'L', {0x7F, 0x40, 0x40, 0x40, 0x40}},
    {'M', {0x7F, 0x02, 0x0C, 0x02, 0x7F}},
    {'N', {0x7F, 0x04, 0x08, 0x10, 0x7F}},
    {'O', {0x3E, 0x41, 0x41, 0x41, 0x3E}},
    {'P', {0x7F, 0x09, 0x09, 0x09, 0x06}},
    {'Q', {0x3E, 0x41, 0x51, 0x21, 0x5E}},
    {'R', {0x7F, 0x09, 0x19, 0x29, 0x46}},
    {'S', {0x46, 0x49, 0x49, 0x49, 0x31}},
    {'T', {0x01, 0x01, 0x7F, 0x01, 0x01}},
    {'U', {0x3F, 0x40, 0x40, 0x40, 0x3F}},
    {'V', {0x1F, 0x20, 0x40, 0x20, 0x1F}},
    {'W', {0x3F, 0x40, 0x38, 0x40, 0x3F}},
    {'X', {0x63, 0x14, 0x08, 0x14, 0x63}},
    {'Y', {0x07, 0x08, 0x70, 0x08, 0x07}},
    {'Z', {0x61, 0x51, 0x49, 0x45, 0x43}},
};

const std::array<std::uint8_t, 5>& glyph_for(char c) {
    char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (const Glyph& g : kGlyphs) {
        if (g.ch == u) return g.cols;
    }
    static constexpr std::array<std::uint8_t, 5> box = {0x7F, 0x41, 0x41, 0x41, 0x7F};
    return box;
}

constexpr int kGlyphW = 5;
constexpr int kGlyphH = 7;
constexpr int kGlyphGap = 1;

void put(RgbImage& img, int x, int y, Rgb c) {
    if (img.inside(y, x)) img.set(y, x, c);
}

void fill_box(RgbImage& img, int x0, int y0, int x1, int y1, Rgb c) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, img.width() - 1);
    y1 = std::min(y1, img.height() - 1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) img.set(y, x, c);
}

}  // namespace

void fill_rect(RgbImage& img, const Rect& r, Rgb c) {
    fill_box(img, static_cast<int>(std::lround(r.x0)), static_cast<int>(std::lround(r.y0)),
             static_cast<int>(std::lround(r.x1)), static_cast<int>(std::lround(r.y1)), c);
}

void draw_rect_outline(RgbImage& img, const Rect& r, Rgb c, int stroke) {
    int x0 = static_cast<int>(std::lround(r.x0));
    int y0 = static_cast<int>(std::lround(r.y0));
    int x1 = static_cast<int>(std::lround(r.x1));
    int y1 = static_cast<int>(std::lround(r.y1));
    int s = std::max(1, stroke);
    fill_box(img, x0, y0, x1, y0 + s - 1, c);
    fill_box(img, x0, y1 - s + 1, x1, y1, c);
    fill_box(img, x0, y0, x0 + s - 1, y1, c);
    fill_box(img, x1 - s + 1, y0, x1, y1, c);
}

void fill_disk(RgbImage& img, Point center, float radius, Rgb c) {
    int x0 = static_cast<int>(std::floor(center.x - radius));
    int x1 = static_cast<int>(std::ceil(center.x + radius));
    int y0 = static_cast<int>(std::floor(center.y - radius));
    int y1 = static_cast<int>(std::ceil(center.y + radius));
    float r2 = radius * radius;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            float dx = static_cast<float>(x) - center.x;
            float dy = static_cast<float>(y) - center.y;
            if (dx * dx + dy * dy <= r2) put(img, x, y, c);
        }
    }
}

void draw_segment(RgbImage& img, Point a, Point b, Rgb c, int width) {
    int x0 = static_cast<int>(std::lround(a.x));
    int y0 = static_cast<int>(std::lround(a.y));
    int x1 = static_cast<int>(std::lround(b.x));
    int y1 = static_cast<int>(std::lround(b.y));
    int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    int lo = -(width - 1) / 2;
    int hi = width / 2;
    while (true) {
        for (int oy = lo; oy <= hi; ++oy)
            for (int ox = lo; ox <= hi; ++ox) put(img, x0 + ox, y0 + oy, c);
        if (x0 == x1 && y0 == y1) break;
        int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

int text_width(const std::string& s, int scale) {
    if (s.empty()) return 0;
    int cells = static_cast<int>(s.size()) * (kGlyphW + kGlyphGap) - kGlyphGap;
    return cells * scale;
}

int text_height(int scale) { return kGlyphH * scale; }

Rect draw_text(RgbImage& img, int x, int y, const std::string& s, Rgb c, int scale) {
    int cx = x;
    for (char ch : s) {
        const auto& cols = glyph_for(ch);
        for (int col = 0; col < kGlyphW; ++col) {
            for (int row = 0; row < kGlyphH; ++row) {
                if (cols[static_cast<std::size_t>(col)] & (1u << row)) {
                    fill_box(img, cx + col * scale, y + row * scale, cx + (col + 1) * scale - 1,
                             y + (row + 1) * scale - 1, c);
                }
            }
        }
        cx += (kGlyphW + kGlyphGap) * scale;
    }
    return Rect{static_cast<float>(x), static_cast<float>(y),
                static_cast<float>(x + text_width(s, scale) - 1),
                static_cast<float>(y + text_height(scale) - 1)};
}

Rect draw_text_rot90(RgbImage& img, int x, int y, const std::string& s, Rgb c, int scale) {
    // Glyph (col,row) maps to (x + row, y + W_text - 1 - col): text reads bottom-up.
    int w = text_width(s, scale);
    int cy = y + w - 1;
    for (char ch : s) {
        const auto& cols = glyph_for(ch);
        for (int col = 0; col < kGlyphW; ++col) {
            for (int row = 0; row < kGlyphH; ++row) {
                if (cols[static_cast<std::size_t>(col)] & (1u << row)) {
                    int px = x + row * scale;
                    int py = cy - (col + 1) * scale + 1;
                    fill_box(img, px, py, px + scale - 1, py + scale - 1, c);
                }
            }
        }
        cy -= (kGlyphW + kGlyphGap) * scale;
    }
    return Rect{static_cast<float>(x), static_cast<float>(y),
                static_cast<float>(x + text_height(scale) - 1),
                static_cast<float>(y + w - 1)};
}

}  // namespace chartex
