#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "chartex/core/annotation.hpp"
#include "chartex/mask/maskgen.hpp"
#include "chartex/postprocess/postprocess.hpp"
#include "chartex/synth/synthgen.hpp"

using namespace chartex;

namespace {

GridD zeros_like(const Heatmap& hm) { return GridD::Zero(hm.height(), hm.width()); }

// independent reduction oracle: threshold, BFS components, weighted centroids
std::vector<std::pair<double, double>> oracle_centroids(const Heatmap& fg, int top_k,
                                                        double factor) {
    const int h = fg.height(), w = fg.width();
    std::vector<std::pair<double, int>> vals;
    for (int i = 0; i < h * w; ++i) vals.push_back({fg.grid(i / w, i % w), i});
    std::sort(vals.begin(), vals.end(), [](auto& a, auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    const double maxv = fg.grid.maxCoeff();
    std::set<int> on;
    for (int i = 0; i < std::min<int>(top_k, h * w); ++i)
        if (vals[i].first >= factor * maxv) on.insert(vals[i].second);

    std::vector<std::pair<double, double>> cents;
    std::set<int> seen;
    for (int start = 0; start < h * w; ++start) {
        if (!on.count(start) || seen.count(start)) continue;
        std::vector<int> queue{start};
        seen.insert(start);
        double ws = 0, xs = 0, ys = 0;
        while (!queue.empty()) {
            const int cur = queue.back();
            queue.pop_back();
            const int cy = cur / w, cx = cur % w;
            const double v = fg.grid(cy, cx);
            ws += v;
            xs += v * cx;
            ys += v * cy;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ny = cy + dy, nx = cx + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    const int ni = ny * w + nx;
                    if (on.count(ni) && !seen.count(ni)) {
                        seen.insert(ni);
                        queue.push_back(ni);
                    }
                }
        }
        cents.push_back({xs / ws, ys / ws});
    }
    return cents;
}

// exhaustive 256-bin Otsu: direct mean computation per split, plateau midpoint
double oracle_otsu(const Heatmap& hm) {
    std::vector<int64_t> hist(256, 0);
    for (int y = 0; y < hm.height(); ++y)
        for (int x = 0; x < hm.width(); ++x)
            ++hist[std::clamp(int(hm.grid(y, x) * 256), 0, 255)];
    double best = -1;
    int lo = -1, hi = -1;
    for (int t = 0; t < 255; ++t) {
        int64_t w0 = 0, w1 = 0;
        double s0 = 0, s1 = 0;
        for (int i = 0; i <= t; ++i) {
            w0 += hist[i];
            s0 += double(i) * hist[i];
        }
        for (int i = t + 1; i < 256; ++i) {
            w1 += hist[i];
            s1 += double(i) * hist[i];
        }
        if (w0 == 0 || w1 == 0) continue;
        const double d = s0 / w0 - s1 / w1;
        const double var = double(w0) * double(w1) * d * d;
        if (var > best + 1e-12) {
            best = var;
            lo = hi = t;
        } else if (var >= best - 1e-12) {
            hi = t;
        }
    }
    if (lo < 0) return -1;
    return (0.5 * (lo + hi) + 0.5) / 256.0;
}

}  // namespace

TEST_CASE("three disjoint blobs reduce to three centroids within half a cell") {
    KeypointList kps;
    kps.points = {{40, 40, 0, KpRole::Inflection},
                  {160, 60, 1, KpRole::Inflection},
                  {100, 200, 2, KpRole::Inflection}};
    const auto hm = gaussian_sparse_mask(kps, 2.0f, 256, 256, 4);
    RgbImage img(256, 256);
    const auto cands =
        extract_candidates(hm, zeros_like(hm), zeros_like(hm), img, PostprocessParams{});
    REQUIRE(cands.size() == 3);
    for (const auto& p : kps.points) {
        bool matched = false;
        for (const auto& c : cands)
            if (std::abs(c.x - std::floor(p.x / 4)) <= 0.5 &&
                std::abs(c.y - std::floor(p.y / 4)) <= 0.5)
                matched = true;
        CHECK(matched);
    }
    for (const auto& c : cands) CHECK(c.confidence == doctest::Approx(1.0));
}

TEST_CASE("an all-zero heatmap yields no candidates") {
    Heatmap hm;
    hm.grid = GridD::Zero(16, 16);
    const auto cands =
        extract_candidates(hm, GridD::Zero(16, 16), GridD::Zero(16, 16), RgbImage(64, 64),
                           PostprocessParams{});
    CHECK(cands.empty());
}

TEST_CASE("one blob gives one candidate regardless of its radius") {
    for (float sigma : {1.0f, 2.0f, 4.0f}) {
        KeypointList kps;
        kps.points = {{128, 128, 0, KpRole::Inflection}};
        const auto hm = gaussian_sparse_mask(kps, sigma, 256, 256, 4);
        const auto cands = extract_candidates(hm, zeros_like(hm), zeros_like(hm),
                                              RgbImage(256, 256), PostprocessParams{});
        CHECK(cands.size() == 1);
    }
}

TEST_CASE("candidate reduction matches the brute-force component oracle") {
    std::mt19937 rng(314);
    for (int trial = 0; trial < 10; ++trial) {
        KeypointList kps;
        std::uniform_real_distribution<float> pos(20.0f, 236.0f);
        const int n = 2 + int(rng() % 6);
        for (int i = 0; i < n; ++i) kps.points.push_back({pos(rng), pos(rng), i});
        const auto hm = gaussian_sparse_mask(kps, 2.0f, 256, 256, 4);
        PostprocessParams p;
        const auto cands =
            extract_candidates(hm, zeros_like(hm), zeros_like(hm), RgbImage(256, 256), p);
        const auto expected = oracle_centroids(hm, p.top_k, p.cc_threshold_factor);
        REQUIRE(cands.size() == expected.size());
        for (size_t i = 0; i < cands.size(); ++i) {  // same discovery order by construction
            CHECK(cands[i].x == doctest::Approx(expected[i].first).epsilon(1e-9));
            CHECK(cands[i].y == doctest::Approx(expected[i].second).epsilon(1e-9));
        }
        CHECK(int(cands.size()) <= p.top_k);
    }
}

TEST_CASE("per-cell offsets shift the reduced centroid") {
    Heatmap hm;
    hm.stride = 4;
    hm.grid = GridD::Zero(16, 16);
    hm.grid(8, 8) = 1.0;
    GridD ox = GridD::Zero(16, 16), oy = GridD::Zero(16, 16);
    ox(8, 8) = 0.4;
    oy(8, 8) = -0.25;
    const auto cands = extract_candidates(hm, ox, oy, RgbImage(64, 64), PostprocessParams{});
    REQUIRE(cands.size() == 1);
    CHECK(cands[0].x == doctest::Approx(8.4));
    CHECK(cands[0].y == doctest::Approx(7.75));
    CHECK(cands[0].cell_x == 8);
    CHECK(cands[0].cell_y == 8);
}

TEST_CASE("the top-k budget bounds the surviving components") {
    KeypointList kps;
    for (int i = 0; i < 5; ++i) kps.points.push_back({30.0f + 45 * i, 128.0f, i});
    const auto hm = gaussian_sparse_mask(kps, 2.0f, 256, 256, 4);
    PostprocessParams p;
    p.top_k = 3;  // only the 3 strongest cells survive selection
    const auto cands =
        extract_candidates(hm, zeros_like(hm), zeros_like(hm), RgbImage(256, 256), p);
    CHECK(int(cands.size()) <= 3);
    CHECK(!cands.empty());
}

TEST_CASE("color filter keeps series-colored points and drops background ones") {
    // white canvas with a red block and a red legend patch
    RgbImage img(100, 100, {255, 255, 255});
    for (int y = 40; y < 60; ++y)
        for (int x = 20; x < 80; ++x) img.set(y, x, {220, 30, 30});
    std::vector<CandidatePoint> cands(3);
    cands[0].rgb = {220, 30, 30};
    cands[1].rgb = {250, 250, 250};  // white-ish: below 0.25 x reference
    cands[2].rgb = {210, 40, 35};

    PostprocessParams p;
    const Rect plot{0, 0, 99, 99};
    const auto with_legend = color_filter(cands, img, plot, {Rect{45, 45, 55, 55}}, p);
    CHECK_FALSE(with_legend.no_peaks);
    CHECK(with_legend.kept.size() == 2);
    for (const auto& c : with_legend.kept) CHECK(c.rgb.r >= 200);

    // histogram-peak path (no legend) reaches the same verdict
    const auto with_peaks = color_filter(cands, img, plot, {}, p);
    CHECK_FALSE(with_peaks.no_peaks);
    CHECK(with_peaks.kept.size() == 2);

    // idempotence: filtering the survivors changes nothing
    const auto again = color_filter(with_peaks.kept, img, plot, {}, p);
    CHECK(again.kept.size() == with_peaks.kept.size());
}

TEST_CASE("candidates sitting exactly on the median color are dropped") {
    RgbImage img(60, 60, {255, 255, 255});
    for (int y = 10; y < 30; ++y)
        for (int x = 10; x < 50; ++x) img.set(y, x, {0, 0, 200});
    std::vector<CandidatePoint> cands(2);
    cands[0].rgb = {255, 255, 255};
    cands[1].rgb = {255, 255, 255};
    const auto res = color_filter(cands, img, Rect{0, 0, 59, 59}, {}, PostprocessParams{});
    CHECK_FALSE(res.no_peaks);
    CHECK(res.kept.empty());
}

TEST_CASE("a monochrome plot raises the no-peaks flag and filters nothing") {
    RgbImage img(50, 50, {255, 255, 255});
    std::vector<CandidatePoint> cands(4);
    const auto res = color_filter(cands, img, Rect{0, 0, 49, 49}, {}, PostprocessParams{});
    CHECK(res.no_peaks);
    CHECK(res.kept.size() == 4);
}

TEST_CASE("survivors on synthetic charts stay near the palette colors") {
    int near_palette = 0, survivors = 0;
    for (uint64_t seed = 0; seed < 50; ++seed) {
        const auto spec = sample_spec(ChartType::Line, seed);
        const auto chart = generate_chart(spec);
        const auto kps = extract_keypoints(chart);

        std::vector<CandidatePoint> cands;
        for (const auto& kp : kps.points) {
            CandidatePoint c;
            c.x = kp.x / 4;
            c.y = kp.y / 4;
            c.confidence = 1.0f;
            c.rgb = chart.image.at(std::clamp(int(std::lround(kp.y)), 0, 255),
                                   std::clamp(int(std::lround(kp.x)), 0, 255));
            cands.push_back(c);
        }
        std::vector<Rect> patches;
        for (const auto& lp : chart.legend_pairs) patches.push_back(lp.patch_bbox);
        const auto res =
            color_filter(cands, chart.image, chart.plot_bbox, patches, PostprocessParams{});
        for (const auto& c : res.kept) {
            ++survivors;
            float best = 1e9f;
            for (const Rgb& pc : spec.style.palette)
                best = std::min(best, color_distance(c.rgb, pc));
            if (best <= 10.0f) ++near_palette;
        }
    }
    REQUIRE(survivors > 0);
    CHECK(double(near_palette) / survivors >= 0.95);
}

TEST_CASE("otsu threshold splits an exact bimodal mixture near the midpoint") {
    std::mt19937 rng(7);
    std::vector<Heatmap> maps;
    for (int i = 0; i < 12; ++i) {
        Heatmap hm;
        hm.grid = GridD(20, 20);
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 20; ++x) hm.grid(y, x) = (rng() % 2) ? 0.9 : 0.1;
        maps.push_back(hm);
    }
    for (const auto& hm : maps) {
        const double t = otsu_threshold(hm);
        CHECK(t > 0.1);
        CHECK(t < 0.9);
        CHECK(t == doctest::Approx(oracle_otsu(hm)).epsilon(1e-12));
    }
    const auto params = calibrate_thresholds(maps);
    CHECK(params.cc_threshold_factor == doctest::Approx(0.5 / 0.9).epsilon(0.03));
}

TEST_CASE("otsu agrees with the exhaustive oracle on random heatmaps") {
    std::mt19937 rng(21);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::vector<Heatmap> maps;
    for (int i = 0; i < 10; ++i) {
        Heatmap hm;
        hm.grid = GridD(15, 15);
        for (int y = 0; y < 15; ++y)
            for (int x = 0; x < 15; ++x) hm.grid(y, x) = dist(rng);
        maps.push_back(hm);
        CHECK(otsu_threshold(hm) == doctest::Approx(oracle_otsu(hm)).epsilon(1e-12));
    }
    const auto params = calibrate_thresholds(maps);
    CHECK(params.valid());
    CHECK(params.cc_threshold_factor >= 0.5);
    CHECK(params.cc_threshold_factor <= 0.95);
}

TEST_CASE("constant heatmaps leave the default threshold factor in place") {
    std::vector<Heatmap> maps(10);
    for (auto& hm : maps) hm.grid = GridD::Constant(8, 8, 0.7);
    const auto params = calibrate_thresholds(maps);
    CHECK(params.cc_threshold_factor == doctest::Approx(0.85));
}

TEST_CASE("calibration refuses fewer than ten samples") {
    std::vector<Heatmap> maps(9);
    for (auto& hm : maps) hm.grid = GridD::Constant(8, 8, 0.5);
    CHECK_THROWS_AS(calibrate_thresholds(maps), Error);
}
