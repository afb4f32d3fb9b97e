#pragma once

// Heatmap -> candidate keypoints: top-K selection, connected-component
// reduction, color-histogram filtering, and Otsu threshold calibration.

#include <string>
#include <vector>

#include "chartex/core/types.hpp"
#include "chartex/image/raster.hpp"
#include "chartex/mask/maskgen.hpp"

namespace chartex {

struct CandidatePoint {
    float x = 0, y = 0;      // heatmap-cell coordinates, offset-corrected
    float confidence = 0;    // component max intensity
    Rgb rgb{255, 255, 255};  // image color at the up-scaled location
    int cell_y = 0, cell_x = 0;  // peak cell (embedding lookups)
};

struct PostprocessParams {
    int top_k = 1000;
    double cc_threshold_factor = 0.85;
    double color_discard_factor = 0.25;
    double scatter_keep_factor = 0.25;

    bool valid() const {
        auto frac = [](double v) { return v > 0 && v <= 1; };
        return top_k >= 1 && frac(cc_threshold_factor) && frac(color_discard_factor) &&
               frac(scatter_keep_factor);
    }
};

// Keeps the top_k highest cells, binarizes them at cc_threshold_factor x max,
// labels 8-connected components, and reduces each to one offset-corrected
// confidence-weighted centroid. An all-zero heatmap yields an empty list.
// Candidates come out in row-major component-discovery order.
std::vector<CandidatePoint> extract_candidates(const Heatmap& fg, const GridD& offset_x,
                                               const GridD& offset_y, const RgbImage& image,
                                               const PostprocessParams& p);

struct ColorFilterResult {
    std::vector<CandidatePoint> kept;
    bool no_peaks = false;  // monochrome chart: returned unfiltered
    Rgb median{255, 255, 255};
    double reference_distance = 0;
};

// Median RGB over the plot box; reference distance is the median-to-legend
// mean color distance when patches are given, otherwise the closest histogram
// peak (32 bins per channel, local maxima holding >= 1% of plot pixels).
// Candidates closer to the median than color_discard_factor x reference fall.
ColorFilterResult color_filter(const std::vector<CandidatePoint>& cands, const RgbImage& image,
                               const Rect& plot_bbox, const std::vector<Rect>& legend_patches,
                               const PostprocessParams& p);

// Per-heatmap Otsu thresholds (256 bins, plateau midpoint); sets
// cc_threshold_factor = median(otsu) / median(max) clamped to [0.5, 0.95].
// Degenerate samples (no between-class separation) are skipped; if none
// remain the default factor stays. Throws InsufficientSamples below 10.
PostprocessParams calibrate_thresholds(const std::vector<Heatmap>& val_heatmaps,
                                       const PostprocessParams& base = {});

// exposed for the calibration oracle tests: 256-bin Otsu with plateau
// midpoint, returns the threshold as a value in [0,1)
double otsu_threshold(const Heatmap& hm);

// Fig.-5-style debug panels: thresholded islands and surviving candidates.
void dump_candidates_debug(const std::string& prefix, const Heatmap& fg,
                           const std::vector<CandidatePoint>& before,
                           const std::vector<CandidatePoint>& after,
                           const PostprocessParams& p);

}  // namespace chartex
