#include "chartex/data/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "chartex/core/annotation.hpp"

namespace chartex {
namespace {

Rgb median_color(const RgbImage& img) {
    auto chan_median = [](const GridU8& g) {
        std::vector<std::uint8_t> v(g.data(), g.data() + g.size());
        auto mid = v.begin() + v.size() / 2;
        std::nth_element(v.begin(), mid, v.end());
        return *mid;
    };
    return {chan_median(img.r), chan_median(img.g), chan_median(img.b)};
}

void erase_boxes(RgbImage& img, const std::vector<TextBox>& boxes, Rgb fill) {
    for (const TextBox& tb : boxes) {
        Rect r = tb.bbox();
        int x0 = std::max(0, static_cast<int>(std::floor(r.x0)));
        int y0 = std::max(0, static_cast<int>(std::floor(r.y0)));
        int x1 = std::min(img.width() - 1, static_cast<int>(std::ceil(r.x1)));
        int y1 = std::min(img.height() - 1, static_cast<int>(std::ceil(r.y1)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) img.set(y, x, fill);
    }
}

// crop a random sub-rect of one text box, rotate, paste inside the plot
void paste_skewed_crop(RgbImage& img, const TextBox& src, const Rect& plot,
                       const AugmentationPolicy& policy, std::mt19937_64& rng) {
    Rect b = src.bbox();
    int sx0 = std::max(0, static_cast<int>(b.x0));
    int sy0 = std::max(0, static_cast<int>(b.y0));
    int sx1 = std::min(img.width() - 1, static_cast<int>(b.x1));
    int sy1 = std::min(img.height() - 1, static_cast<int>(b.y1));
    int sw = sx1 - sx0 + 1, sh = sy1 - sy0 + 1;
    if (sw < 2 || sh < 2) return;

    auto rd = [&](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    // crop to 60-100% of each dimension
    int cw = std::max(2, static_cast<int>(std::lround(sw * rd(0.6, 1.0))));
    int ch = std::max(2, static_cast<int>(std::lround(sh * rd(0.6, 1.0))));
    int cx0 = sx0 + std::uniform_int_distribution<int>(0, sw - cw)(rng);
    int cy0 = sy0 + std::uniform_int_distribution<int>(0, sh - ch)(rng);

    double theta = rd(-policy.skew_range, policy.skew_range) * M_PI / 180.0;
    double c = std::cos(theta), s = std::sin(theta);
    // rotated bounding box
    double hw = cw / 2.0, hh = ch / 2.0;
    double rw = std::abs(c) * cw + std::abs(s) * ch;
    double rh = std::abs(s) * cw + std::abs(c) * ch;

    double px_lo = plot.x0 + rw / 2, px_hi = plot.x1 - rw / 2;
    double py_lo = plot.y0 + rh / 2, py_hi = plot.y1 - rh / 2;
    if (px_lo >= px_hi || py_lo >= py_hi) return;  // crop larger than the plot
    double pcx = rd(px_lo, px_hi), pcy = rd(py_lo, py_hi);

    int dx0 = static_cast<int>(std::floor(pcx - rw / 2));
    int dx1 = static_cast<int>(std::ceil(pcx + rw / 2));
    int dy0 = static_cast<int>(std::floor(pcy - rh / 2));
    int dy1 = static_cast<int>(std::ceil(pcy + rh / 2));
    for (int y = dy0; y <= dy1; ++y) {
        for (int x = dx0; x <= dx1; ++x) {
            if (!img.inside(y, x)) continue;
            // inverse-rotate into crop coordinates
            double rx = (x - pcx) * c + (y - pcy) * s;
            double ry = -(x - pcx) * s + (y - pcy) * c;
            int ux = static_cast<int>(std::lround(rx + hw - 0.5 + cx0 - sx0)) + sx0;
            int uy = static_cast<int>(std::lround(ry + hh - 0.5 + cy0 - sy0)) + sy0;
            if (ux < cx0 || ux >= cx0 + cw || uy < cy0 || uy >= cy0 + ch) continue;
            img.set(y, x, img.at(uy, ux));
        }
    }
}

}  // namespace

RgbImage apply_text_invariance(const RgbImage& image, const std::vector<TextBox>& text_boxes,
                               const Rect& plot_bbox, const AugmentationPolicy& policy,
                               std::mt19937_64& rng, AugBranch* taken) {
    require(policy.valid(), "MalformedAnnotation", "invalid augmentation policy");
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    AugBranch branch = u < policy.p_erase_text ? AugBranch::Erase
                       : u < policy.p_erase_text + policy.p_add_text ? AugBranch::Add
                                                                     : AugBranch::Identity;
    if (text_boxes.empty()) branch = AugBranch::Identity;
    if (taken != nullptr) *taken = branch;
    if (branch == AugBranch::Identity) return image;

    RgbImage out = image;
    if (branch == AugBranch::Erase) {
        erase_boxes(out, text_boxes, median_color(image));
        return out;
    }
    int k = std::uniform_int_distribution<int>(1, std::max(1, policy.max_added_boxes))(rng);
    for (int i = 0; i < k; ++i) {
        const TextBox& src = text_boxes[std::uniform_int_distribution<std::size_t>(
            0, text_boxes.size() - 1)(rng)];
        paste_skewed_crop(out, src, plot_bbox, policy, rng);
    }
    return out;
}

TrainingExample build_training_example(const AnnotatedChart& chart,
                                       const AugmentationPolicy& policy, std::mt19937_64& rng,
                                       int stride) {
    TrainingExample ex;
    ex.masks = build_mask_set(chart, stride);
    ex.keypoints = extract_keypoints(chart);
    ex.chart_type = chart.chart_type;
    ex.image = apply_text_invariance(chart.image, chart.text_boxes, chart.plot_bbox, policy, rng);
    return ex;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("IoError", "cannot open manifest " + path);
    auto dir = std::filesystem::path(path).parent_path();
    std::vector<ManifestEntry> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            fail("MalformedManifest",
                 "line " + std::to_string(line_no) + " lacks a tab separator");
        ManifestEntry e;
        e.annotation_path = line.substr(0, tab);
        e.split = line.substr(tab + 1);
        if (e.split != "train" && e.split != "val" && e.split != "test")
            fail("MalformedManifest",
                 "line " + std::to_string(line_no) + " has unknown split '" + e.split + "'");
        if (!e.annotation_path.empty() && e.annotation_path.front() != '/')
            e.annotation_path = (dir / e.annotation_path).string();
        out.push_back(std::move(e));
    }
    return out;
}

void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) fail("IoError", "cannot write manifest " + path);
    for (const auto& e : entries) out << e.annotation_path << '\t' << e.split << '\n';
}

}  // namespace chartex
