#include <doctest.h>

#include <cmath>

#include "chartex/mask/maskgen.hpp"
#include "chartex/synth/synthgen.hpp"

using namespace chartex;

namespace {
KeypointList kp_at(std::initializer_list<Keypoint> pts) {
    KeypointList l;
    l.points = pts;
    return l;
}
}  // namespace

TEST_CASE("gaussian kernel peak and falloff") {
    // one KP at cell (16,16) on a 128px/stride-4 grid
    KeypointList kp = kp_at({{64.f, 64.f, 0, KpRole::Scatter}});
    Heatmap hm = gaussian_sparse_mask(kp, 2.0f, 128, 128, 4);
    CHECK(hm.height() == 32);
    CHECK(hm.width() == 32);
    CHECK(hm.grid(16, 16) == doctest::Approx(1.0).epsilon(1e-12));
    // two cells to the right: exp(-4/8)
    CHECK(hm.grid(16, 18) ==
          doctest::Approx(std::exp(-0.5)).epsilon(1e-9));
    CHECK(hm.grid.maxCoeff() == doctest::Approx(1.0));
}

TEST_CASE("overlapping kernels combine by max, not sum") {
    KeypointList kp = kp_at({{40.f, 40.f, 0, KpRole::Scatter}, {44.f, 40.f, 0, KpRole::Scatter}});
    Heatmap hm = gaussian_sparse_mask(kp, 2.0f, 128, 128, 4);
    // peaks at cells (10,10) and (10,11)
    CHECK(hm.grid(10, 10) == doctest::Approx(1.0));
    CHECK(hm.grid(10, 11) == doctest::Approx(1.0));
    CHECK(hm.grid.maxCoeff() <= 1.0f);
    // a cell 1 away from both: value = max(e^{-1/8}, e^{-2/8}...) never exceeds 1
    float mid = hm.grid(11, 10);
    CHECK(mid == doctest::Approx(std::exp(-1.0 / 8.0)).epsilon(1e-6));
}

TEST_CASE("empty keypoints give an all-zero map") {
    Heatmap hm = gaussian_sparse_mask(KeypointList{}, 2.0f, 64, 64, 4);
    CHECK(hm.grid.maxCoeff() == 0.0f);
    CHECK(hm.grid.minCoeff() == 0.0f);
}

TEST_CASE("out-of-grid keypoint is rejected") {
    CHECK_THROWS_AS(gaussian_sparse_mask(kp_at({{500.f, 10.f, 0, KpRole::Scatter}}), 2.0f, 64,
                                         64, 4),
                    Error);
}

TEST_CASE("dense mask interpolates 10 points exclusive of endpoints") {
    // stride 1 so cells == pixels: segment (0,0) -> (11,0)
    KeypointList kp = kp_at({{0.f, 0.f, 0, KpRole::Inflection}, {11.f, 0.f, 0, KpRole::Inflection}});
    Heatmap hm = dense_directional_mask(kp, 2.0f, 10, 16, 16, 1);
    for (int x = 0; x <= 11; ++x) CHECK(hm.grid(0, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hm.grid(0, 12) < 1.0f);
}

TEST_CASE("dense mask leaves scatter points unconnected") {
    KeypointList scatter =
        kp_at({{0.f, 0.f, 0, KpRole::Scatter}, {11.f, 0.f, 0, KpRole::Scatter}});
    Heatmap dense = dense_directional_mask(scatter, 2.0f, 10, 16, 16, 1);
    Heatmap sparse = gaussian_sparse_mask(scatter, 2.0f, 16, 16, 1);
    CHECK(((dense.grid - sparse.grid).abs() < 1e-7f).all());
    // midpoint cell stays at the plain two-kernel max, no interpolated peak
    CHECK(dense.grid(0, 5) < 0.9f);
}

TEST_CASE("dense mask handles isolated and degenerate input") {
    KeypointList single = kp_at({{8.f, 8.f, 0, KpRole::Scatter}});
    Heatmap a = dense_directional_mask(single, 2.0f, 10, 16, 16, 1);
    Heatmap b = gaussian_sparse_mask(single, 2.0f, 16, 16, 1);
    CHECK(((a.grid - b.grid).abs() < 1e-7f).all());

    KeypointList degen =
        kp_at({{8.f, 8.f, 0, KpRole::Inflection}, {8.f, 8.f, 0, KpRole::Inflection}});
    Heatmap c = dense_directional_mask(degen, 2.0f, 10, 16, 16, 1);
    CHECK(((c.grid - b.grid).abs() < 1e-7f).all());
}

TEST_CASE("dense mask is invariant to reversing vertex order") {
    KeypointList fwd = kp_at({{10.f, 40.f, 0, KpRole::Inflection},
                              {50.f, 10.f, 0, KpRole::Inflection},
                              {90.f, 60.f, 0, KpRole::Inflection}});
    KeypointList rev;
    rev.points.assign(fwd.points.rbegin(), fwd.points.rend());
    Heatmap a = dense_directional_mask(fwd, 2.0f, 10, 128, 128, 4);
    Heatmap b = dense_directional_mask(rev, 2.0f, 10, 128, 128, 4);
    CHECK(((a.grid - b.grid).abs() < 1e-6f).all());
}

TEST_CASE("binarize threshold and the sigma-2 disk") {
    KeypointList kp = kp_at({{64.f, 64.f, 0, KpRole::Scatter}});
    Heatmap hm = gaussian_sparse_mask(kp, 2.0f, 128, 128, 4);
    Heatmap bin = binarize(hm, 0.6f);
    // exp(-r^2/8) >= 0.6 iff r <= 2.021: disk of radius 2 cells
    for (int y = 0; y < bin.height(); ++y)
        for (int x = 0; x < bin.width(); ++x) {
            float r2 = static_cast<float>((y - 16) * (y - 16) + (x - 16) * (x - 16));
            CHECK(bin.grid(y, x) == (r2 <= 2.021f * 2.021f ? 1.0f : 0.0f));
        }

    Heatmap zeros;
    zeros.grid = GridD::Zero(4, 4);
    CHECK((binarize(zeros, 0.6f).grid == 0.0).all());
}

TEST_CASE("build_mask_set: counts, complements, offsets") {
    ChartSpec spec = sample_spec(ChartType::BarVertical, 9);
    spec.n_series = 1;
    spec.n_points_per_series = 2;
    spec.style.palette.resize(1);
    spec.style.legend_position = LegendPos::None;
    AnnotatedChart chart = generate_chart(spec);
    MaskSet ms = build_mask_set(chart);

    // 2 bars x 3 KP = 6 unit-peak cells
    CHECK(ms.kp_cells.size() == 6);
    int peaks = 0;
    for (const auto& c : ms.kp_cells) {
        CHECK(ms.fg_class.grid(c.cy, c.cx) == 1.0f);
        ++peaks;
    }
    CHECK(peaks == 6);

    CHECK(((ms.fg_regress.grid + ms.bg_regress.grid) - 1.0f).abs().maxCoeff() <= 1e-6f);
    CHECK((ms.fg_class.grid + ms.bg_class.grid == 1.0f).all());
    CHECK(((ms.fg_class.grid == 0.0f) || (ms.fg_class.grid == 1.0f)).all());
    CHECK((ms.binary_recon.grid == ms.fg_class.grid).all());
    CHECK(ms.fg_regress.grid.maxCoeff() == doctest::Approx(1.0));

    CHECK(ms.offset_x.maxCoeff() < 1.0);
    CHECK(ms.offset_x.minCoeff() >= 0.0);
    CHECK(ms.offset_y.maxCoeff() < 1.0);
    // offsets vanish away from KP cells
    GridD mask = GridD::Zero(ms.offset_x.rows(), ms.offset_x.cols());
    for (const auto& c : ms.kp_cells) mask(c.cy, c.cx) = 1.0;
    CHECK(((1.0 - mask) * ms.offset_x).abs().maxCoeff() == 0.0);
}

TEST_CASE("line mask support follows the polyline") {
    ChartSpec spec = sample_spec(ChartType::Line, 3);
    spec.n_series = 1;
    spec.style.palette.resize(1);
    spec.style.legend_position = LegendPos::None;
    AnnotatedChart chart = generate_chart(spec);
    MaskSet ms = build_mask_set(chart);

    // every cell with fg_regress >= 0.6 lies within ~3 cells of the GT polyline
    const auto& g = chart.pixel_geometry[0].vertices;
    auto dist_to_polyline = [&](float cx, float cy) {
        float best = 1e9f;
        for (std::size_t i = 0; i + 1 < g.size(); ++i) {
            float ax = g[i].x / 4.f, ay = g[i].y / 4.f;
            float bx = g[i + 1].x / 4.f, by = g[i + 1].y / 4.f;
            float vx = bx - ax, vy = by - ay;
            float t = ((cx - ax) * vx + (cy - ay) * vy) / (vx * vx + vy * vy + 1e-9f);
            t = std::clamp(t, 0.f, 1.f);
            float dx = cx - (ax + t * vx), dy = cy - (ay + t * vy);
            best = std::min(best, std::sqrt(dx * dx + dy * dy));
        }
        return best;
    };
    for (int y = 0; y < ms.fg_regress.height(); ++y)
        for (int x = 0; x < ms.fg_regress.width(); ++x)
            if (ms.fg_regress.grid(y, x) >= 0.6f)
                CHECK(dist_to_polyline(static_cast<float>(x), static_cast<float>(y)) < 3.5f);
}
