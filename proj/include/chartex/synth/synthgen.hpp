#pragma once

#include <cstdint>
#include <vector>

#include "chartex/core/types.hpp"

namespace chartex {

// Where the legend strip goes. Only single-series charts and box plots skip it.
enum class LegendPos { None, Bottom };

struct ChartStyle {
    std::vector<Rgb> palette;  // one color per series, pairwise L2 >= 60
    int line_width = 2;
    int marker_radius = 3;
    int font_scale = 1;
    LegendPos legend_position = LegendPos::None;
    Rgb background{255, 255, 255};

    bool operator==(const ChartStyle&) const = default;
};

struct ChartSpec {
    ChartType chart_type = ChartType::Line;
    int n_series = 1;            // box charts always use 1 (each box is its own series)
    int n_points_per_series = 3; // boxes: number of boxes; bars: categories per series
    int canvas_h = 256;
    int canvas_w = 256;
    ChartStyle style;
    std::uint64_t rng_seed = 0;

    bool operator==(const ChartSpec&) const = default;
};

// Deterministic in (chart_type, seed). Counts are capped so that every
// ground-truth keypoint pair stays >= ~18 px apart on the given canvas,
// which keeps the downsampled heatmap blobs separable.
ChartSpec sample_spec(ChartType chart_type, std::uint64_t rng_seed);
ChartSpec sample_spec(ChartType chart_type, std::uint64_t rng_seed, int canvas_h, int canvas_w);

// Renders the raster and returns it with exact data values, pixel geometry,
// text boxes, ticks, and legend. Throws Error("LayoutOverflow") when the
// requested counts cannot fit the canvas, Error("MalformedAnnotation") for
// invalid specs (canvas < 128, counts out of range, palette too close).
AnnotatedChart generate_chart(const ChartSpec& spec);

// The fixed master palette sample_spec draws from (first n_series after a
// seeded shuffle). Exposed for tests.
const std::vector<Rgb>& master_palette();

}  // namespace chartex
