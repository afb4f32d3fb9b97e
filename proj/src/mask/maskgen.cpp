#include "chartex/mask/maskgen.hpp"

#include <cmath>

#include "chartex/core/annotation.hpp"
#include "chartex/image/raster.hpp"

namespace chartex {
namespace {

int grid_dim(int px, int stride) { return (px + stride - 1) / stride; }

// stamp one kernel centered on the integer cell of p, max-combined
void deposit(GridD& g, const Keypoint& p, float sigma, int stride) {
    const int cx = static_cast<int>(std::floor(p.x / static_cast<float>(stride)));
    const int cy = static_cast<int>(std::floor(p.y / static_cast<float>(stride)));
    require(cx >= 0 && cx < g.cols() && cy >= 0 && cy < g.rows(), "OutOfBounds",
            "keypoint outside heatmap grid");
    const double inv = 1.0 / (2.0 * static_cast<double>(sigma) * sigma);
    for (int y = 0; y < g.rows(); ++y) {
        for (int x = 0; x < g.cols(); ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            const double v = std::exp(-(dx * dx + dy * dy) * inv);
            if (v > g(y, x)) g(y, x) = v;
        }
    }
}

}  // namespace

Heatmap gaussian_sparse_mask(const KeypointList& points, float sigma, int img_h, int img_w,
                             int stride) {
    Heatmap hm;
    hm.stride = stride;
    hm.grid = GridD::Zero(grid_dim(img_h, stride), grid_dim(img_w, stride));
    for (const Keypoint& p : points.points) deposit(hm.grid, p, sigma, stride);
    return hm;
}

Heatmap dense_directional_mask(const KeypointList& groups, float sigma, int n_interp, int img_h,
                               int img_w, int stride) {
    KeypointList expanded;
    expanded.points = groups.points;
    for (std::size_t i = 0; i + 1 < groups.points.size(); ++i) {
        const Keypoint& a = groups.points[i];
        const Keypoint& b = groups.points[i + 1];
        if (a.group_id != b.group_id) continue;
        if (a.role == KpRole::Scatter && b.role == KpRole::Scatter) continue;
        for (int k = 1; k <= n_interp; ++k) {
            const float t = static_cast<float>(k) / static_cast<float>(n_interp + 1);
            expanded.points.push_back(
                {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, a.group_id, a.role});
        }
    }
    return gaussian_sparse_mask(expanded, sigma, img_h, img_w, stride);
}

Heatmap binarize(const Heatmap& hm, float threshold) {
    Heatmap out;
    out.stride = hm.stride;
    out.grid = (hm.grid >= static_cast<double>(threshold)).cast<double>();
    return out;
}

MaskSet build_mask_set(const AnnotatedChart& gt, int stride, float sigma, int n_interp,
                       float binarize_threshold) {
    const KeypointList kp = extract_keypoints(gt);
    const int h = gt.image.height();
    const int w = gt.image.width();
    require(h > 0 && w > 0, "MissingGeometry", "chart has no raster");

    MaskSet ms;
    ms.fg_regress = dense_directional_mask(kp, sigma, n_interp, h, w, stride);
    Heatmap sparse = gaussian_sparse_mask(kp, sigma, h, w, stride);
    ms.fg_class = binarize(sparse, binarize_threshold);
    ms.binary_recon = ms.fg_class;

    ms.bg_regress.stride = stride;
    ms.bg_regress.grid = 1.0 - ms.fg_regress.grid;
    ms.bg_class.stride = stride;
    ms.bg_class.grid = 1.0 - ms.fg_class.grid;

    ms.offset_x = GridD::Zero(ms.fg_class.grid.rows(), ms.fg_class.grid.cols());
    ms.offset_y = GridD::Zero(ms.fg_class.grid.rows(), ms.fg_class.grid.cols());
    for (const Keypoint& p : kp.points) {
        const float fx = p.x / static_cast<float>(stride);
        const float fy = p.y / static_cast<float>(stride);
        const int cx = static_cast<int>(std::floor(fx));
        const int cy = static_cast<int>(std::floor(fy));
        ms.offset_x(cy, cx) = static_cast<double>(fx) - cx;
        ms.offset_y(cy, cx) = static_cast<double>(fy) - cy;
        ms.kp_cells.push_back({cy, cx, p.group_id, p.role});
    }
    return ms;
}

void dump_mask_set(const std::string& prefix, const MaskSet& ms) {
    write_gray_png(prefix + "_binary_recon.png", ms.binary_recon.grid);
    write_gray_png(prefix + "_fg_regress.png", ms.fg_regress.grid);
    write_gray_png(prefix + "_bg_regress.png", ms.bg_regress.grid);
    write_gray_png(prefix + "_fg_class.png", ms.fg_class.grid);
    write_gray_png(prefix + "_bg_class.png", ms.bg_class.grid);
    write_gray_png(prefix + "_offset_x.png", ms.offset_x);
    write_gray_png(prefix + "_offset_y.png", ms.offset_y);
}

}  // namespace chartex
