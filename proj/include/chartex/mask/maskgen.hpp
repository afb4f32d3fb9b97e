#pragma once

#include <string>
#include <vector>

#include "chartex/core/dense.hpp"
#include "chartex/core/types.hpp"

namespace chartex {

// One network-resolution map. grid(y, x), ceil(H/stride) x ceil(W/stride).
// Double precision: mask targets double as test oracles with 1e-9 tolerances.
struct Heatmap {
    GridD grid;
    int stride = 4;

    int height() const { return static_cast<int>(grid.rows()); }
    int width() const { return static_cast<int>(grid.cols()); }
};

struct KpCell {
    int cy = 0, cx = 0;
    int group_id = 0;
    KpRole role = KpRole::Inflection;
};

// The five training views plus sub-stride offsets.
//   binary_recon: sparse binarized Gaussian (same target as fg_class)
//   fg_regress:   dense directional mask (interpolated along components)
//   bg_regress:   1 - fg_regress
//   fg_class:     binarized sparse Gaussian, values in {0,1}
//   bg_class:     1 - fg_class
struct MaskSet {
    Heatmap binary_recon;
    Heatmap fg_regress;
    Heatmap bg_regress;
    Heatmap fg_class;
    Heatmap bg_class;
    GridD offset_x;  // fractional pixel residue / stride at KP cells, 0 elsewhere
    GridD offset_y;
    std::vector<KpCell> kp_cells;
};

// Each keypoint deposits exp(-(dx^2+dy^2)/(2 sigma^2)) measured in cells from
// its own cell floor(px/stride); overlaps combine by elementwise max, so the
// peak at every KP cell is exactly 1. Empty input gives an all-zero map.
// Throws Error("OutOfBounds") if a point falls outside the grid.
Heatmap gaussian_sparse_mask(const KeypointList& points, float sigma, int img_h, int img_w,
                             int stride);

// Renders all original keypoints plus n_interp equally spaced points strictly
// between each consecutive same-group vertex pair. Pairs where both endpoints
// are scatter points stay unconnected (isolated markers).
Heatmap dense_directional_mask(const KeypointList& groups, float sigma, int n_interp, int img_h,
                               int img_w, int stride);

// 1 where value >= threshold, else 0.
Heatmap binarize(const Heatmap& hm, float threshold = 0.6f);

MaskSet build_mask_set(const AnnotatedChart& gt, int stride = 4, float sigma = 2.0f,
                       int n_interp = 10, float binarize_threshold = 0.6f);

// Debug panels: writes <prefix>_<view>.png for every view and the offsets.
void dump_mask_set(const std::string& prefix, const MaskSet& ms);

}  // namespace chartex
