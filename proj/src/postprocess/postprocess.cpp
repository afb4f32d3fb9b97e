#include "chartex/postprocess/postprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

namespace chartex {

namespace {

Rgb sample_image(const RgbImage& image, double px, double py) {
    if (image.empty()) return {255, 255, 255};
    const int ix = std::clamp(int(std::lround(px)), 0, image.width() - 1);
    const int iy = std::clamp(int(std::lround(py)), 0, image.height() - 1);
    return image.at(iy, ix);
}

double median_of(std::vector<double> v) {
    const size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + n / 2, v.end());
    const double hi = v[n / 2];
    if (n % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + n / 2 - 1, v.end());
    return 0.5 * (v[n / 2 - 1] + hi);
}

}  // namespace

std::vector<CandidatePoint> extract_candidates(const Heatmap& fg, const GridD& offset_x,
                                               const GridD& offset_y, const RgbImage& image,
                                               const PostprocessParams& p) {
    require(p.valid(), "BadConfig", "extract_candidates: bad params");
    const int h = fg.height(), w = fg.width();
    require(int(offset_x.rows()) == h && int(offset_x.cols()) == w &&
                int(offset_y.rows()) == h && int(offset_y.cols()) == w,
            "ShapeMismatch", "extract_candidates: offset grids");

    const double maxv = fg.grid.maxCoeff();
    if (maxv <= 0.0) return {};  // EmptyHeatmap

    // top_k highest cells (ties resolved toward lower row-major index)
    std::vector<int> order(h * w);
    std::iota(order.begin(), order.end(), 0);
    const int keep = std::min<int>(p.top_k, h * w);
    auto value_of = [&](int i) { return fg.grid(i / w, i % w); };
    std::partial_sort(order.begin(), order.begin() + keep, order.end(), [&](int a, int b) {
        const double va = value_of(a), vb = value_of(b);
        return va != vb ? va > vb : a < b;
    });

    const double threshold = p.cc_threshold_factor * maxv;
    std::vector<uint8_t> on(h * w, 0);
    for (int i = 0; i < keep; ++i)
        if (value_of(order[i]) >= threshold) on[order[i]] = 1;

    // 8-connected component labels in row-major discovery order
    std::vector<int> label(h * w, -1);
    std::vector<CandidatePoint> out;
    std::vector<int> stack;
    int next = 0;
    for (int start = 0; start < h * w; ++start) {
        if (!on[start] || label[start] >= 0) continue;
        const int id = next++;
        stack.assign(1, start);
        label[start] = id;
        double wsum = 0, xsum = 0, ysum = 0, best = -1;
        int best_cell = start;
        while (!stack.empty()) {
            const int cur = stack.back();
            stack.pop_back();
            const int cy = cur / w, cx = cur % w;
            const double v = fg.grid(cy, cx);
            wsum += v;
            xsum += v * (cx + offset_x(cy, cx));
            ysum += v * (cy + offset_y(cy, cx));
            if (v > best) {
                best = v;
                best_cell = cur;
            }
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ny = cy + dy, nx = cx + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    const int ni = ny * w + nx;
                    if (!on[ni] || label[ni] >= 0) continue;
                    label[ni] = id;
                    stack.push_back(ni);
                }
        }
        CandidatePoint c;
        c.x = float(std::clamp(xsum / wsum, 0.0, double(w - 1)));
        c.y = float(std::clamp(ysum / wsum, 0.0, double(h - 1)));
        c.confidence = float(best);
        c.cell_y = best_cell / w;
        c.cell_x = best_cell % w;
        c.rgb = sample_image(image, c.x * fg.stride, c.y * fg.stride);
        out.push_back(c);
    }
    return out;
}

namespace {

constexpr int kHistBins = 32;  // per channel, joint 32^3 histogram

int bin_of(Rgb c) {
    const int shift = 256 / kHistBins;
    return (c.r / shift) * kHistBins * kHistBins + (c.g / shift) * kHistBins + c.b / shift;
}

Rgb bin_center(int bin) {
    const int shift = 256 / kHistBins;
    const int r = bin / (kHistBins * kHistBins);
    const int g = (bin / kHistBins) % kHistBins;
    const int b = bin % kHistBins;
    auto mid = [shift](int i) { return uint8_t(i * shift + shift / 2); };
    return {mid(r), mid(g), mid(b)};
}

}  // namespace

ColorFilterResult color_filter(const std::vector<CandidatePoint>& cands, const RgbImage& image,
                               const Rect& plot_bbox, const std::vector<Rect>& legend_patches,
                               const PostprocessParams& p) {
    require(!image.empty(), "ShapeMismatch", "color_filter: empty image");
    ColorFilterResult res;

    const int y0 = std::clamp(int(std::floor(plot_bbox.y0)), 0, image.height() - 1);
    const int y1 = std::clamp(int(std::ceil(plot_bbox.y1)), 0, image.height() - 1);
    const int x0 = std::clamp(int(std::floor(plot_bbox.x0)), 0, image.width() - 1);
    const int x1 = std::clamp(int(std::ceil(plot_bbox.x1)), 0, image.width() - 1);
    require(y1 >= y0 && x1 >= x0, "ShapeMismatch", "color_filter: empty plot box");

    std::vector<double> rs, gs, bs;
    std::vector<int> hist(kHistBins * kHistBins * kHistBins, 0);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const Rgb c = image.at(y, x);
            rs.push_back(c.r);
            gs.push_back(c.g);
            bs.push_back(c.b);
            ++hist[bin_of(c)];
        }
    const int n_pixels = int(rs.size());
    res.median = {uint8_t(std::lround(median_of(rs))), uint8_t(std::lround(median_of(gs))),
                  uint8_t(std::lround(median_of(bs)))};

    if (!legend_patches.empty()) {
        // reference: distance from the median to the mean legend patch color
        double r = 0, g = 0, b = 0;
        int count = 0;
        for (const Rect& patch : legend_patches) {
            const int py0 = std::clamp(int(std::floor(patch.y0)), 0, image.height() - 1);
            const int py1 = std::clamp(int(std::ceil(patch.y1)), 0, image.height() - 1);
            const int px0 = std::clamp(int(std::floor(patch.x0)), 0, image.width() - 1);
            const int px1 = std::clamp(int(std::ceil(patch.x1)), 0, image.width() - 1);
            for (int y = py0; y <= py1; ++y)
                for (int x = px0; x <= px1; ++x) {
                    const Rgb c = image.at(y, x);
                    r += c.r;
                    g += c.g;
                    b += c.b;
                    ++count;
                }
        }
        require(count > 0, "ShapeMismatch", "color_filter: legend patches outside image");
        const double dr = r / count - res.median.r, dg = g / count - res.median.g,
                     db = b / count - res.median.b;
        res.reference_distance = std::sqrt(dr * dr + dg * dg + db * db);
    } else {
        // reference: nearest histogram peak away from the median's own bin
        const int median_bin = bin_of(res.median);
        const int min_count = std::max(1, n_pixels / 100);
        double best = -1;
        for (int bin = 0; bin < int(hist.size()); ++bin) {
            if (hist[bin] < min_count || bin == median_bin) continue;
            const int br = bin / (kHistBins * kHistBins);
            const int bg = (bin / kHistBins) % kHistBins;
            const int bb = bin % kHistBins;
            bool is_peak = true;
            for (int dr = -1; dr <= 1 && is_peak; ++dr)
                for (int dg = -1; dg <= 1 && is_peak; ++dg)
                    for (int db = -1; db <= 1 && is_peak; ++db) {
                        if (!dr && !dg && !db) continue;
                        const int nr = br + dr, ng = bg + dg, nb = bb + db;
                        if (nr < 0 || nr >= kHistBins || ng < 0 || ng >= kHistBins || nb < 0 ||
                            nb >= kHistBins)
                            continue;
                        if (hist[nr * kHistBins * kHistBins + ng * kHistBins + nb] > hist[bin])
                            is_peak = false;
                    }
            if (!is_peak) continue;
            const double d = color_distance(res.median, bin_center(bin));
            if (best < 0 || d < best) best = d;
        }
        if (best < 0) {  // NoPeaks: monochrome plot area
            res.no_peaks = true;
            res.kept = cands;
            return res;
        }
        res.reference_distance = best;
    }

    const double cutoff = p.color_discard_factor * res.reference_distance;
    for (const auto& c : cands)
        if (color_distance(c.rgb, res.median) >= cutoff) res.kept.push_back(c);
    return res;
}

double otsu_threshold(const Heatmap& hm) {
    constexpr int kBins = 256;
    std::array<int64_t, kBins> hist{};
    const int h = hm.height(), w = hm.width();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int bin = std::clamp(int(hm.grid(y, x) * kBins), 0, kBins - 1);
            ++hist[bin];
        }
    const int64_t total = int64_t(h) * w;
    double sum_all = 0;
    for (int i = 0; i < kBins; ++i) sum_all += double(i) * hist[i];

    // between-class variance over every split; keep the plateau of maxima
    double best = -1;
    int lo = -1, hi = -1;
    int64_t w0 = 0;
    double sum0 = 0;
    for (int t = 0; t < kBins - 1; ++t) {
        w0 += hist[t];
        sum0 += double(t) * hist[t];
        const int64_t w1 = total - w0;
        if (w0 == 0 || w1 == 0) continue;
        const double mu0 = sum0 / w0, mu1 = (sum_all - sum0) / w1;
        const double var = double(w0) * double(w1) * (mu0 - mu1) * (mu0 - mu1);
        if (var > best + 1e-12) {
            best = var;
            lo = hi = t;
        } else if (var >= best - 1e-12) {
            hi = t;
        }
    }
    if (lo < 0) return -1;  // constant heatmap: no valid split
    const double mid = 0.5 * (lo + hi);
    return (mid + 0.5) / kBins;
}

PostprocessParams calibrate_thresholds(const std::vector<Heatmap>& val_heatmaps,
                                       const PostprocessParams& base) {
    require(val_heatmaps.size() >= 10, "InsufficientSamples",
            "calibrate_thresholds: need at least 10 heatmaps, got " +
                std::to_string(val_heatmaps.size()));
    std::vector<double> thresholds, maxima;
    for (const auto& hm : val_heatmaps) {
        const double t = otsu_threshold(hm);
        if (t < 0) continue;  // degenerate sample
        thresholds.push_back(t);
        maxima.push_back(hm.grid.maxCoeff());
    }
    PostprocessParams out = base;
    if (thresholds.empty()) return out;  // all degenerate: keep the default
    const double med_max = median_of(maxima);
    if (med_max <= 0) return out;
    out.cc_threshold_factor = std::clamp(median_of(thresholds) / med_max, 0.5, 0.95);
    return out;
}

void dump_candidates_debug(const std::string& prefix, const Heatmap& fg,
                           const std::vector<CandidatePoint>& before,
                           const std::vector<CandidatePoint>& after,
                           const PostprocessParams& p) {
    const int h = fg.height(), w = fg.width();
    const double maxv = fg.grid.maxCoeff();
    GridD islands = GridD::Zero(h, w);
    if (maxv > 0)
        islands = (fg.grid >= p.cc_threshold_factor * maxv).cast<double>();
    write_gray_png(prefix + "_islands.png", islands);

    RgbImage overlay(h, w, {0, 0, 0});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto v = uint8_t(std::clamp(fg.grid(y, x), 0.0, 1.0) * 255);
            overlay.set(y, x, {v, v, v});
        }
    for (const auto& c : before)
        overlay.set(std::clamp(int(std::lround(c.y)), 0, h - 1),
                    std::clamp(int(std::lround(c.x)), 0, w - 1), {255, 0, 0});
    for (const auto& c : after)
        overlay.set(std::clamp(int(std::lround(c.y)), 0, h - 1),
                    std::clamp(int(std::lround(c.x)), 0, w - 1), {0, 255, 0});
    write_png(prefix + "_candidates.png", overlay);
}

}  // namespace chartex
