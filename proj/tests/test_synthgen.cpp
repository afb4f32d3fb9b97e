#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "chartex/core/annotation.hpp"
#include "chartex/synth/synthgen.hpp"

using namespace chartex;

namespace {

// All ground-truth keypoints of a chart, flattened.
std::vector<Point> all_kp(const AnnotatedChart& c) {
    std::vector<Point> pts;
    for (const auto& kp : extract_keypoints(c).points) pts.push_back({kp.x, kp.y});
    return pts;
}

// Linear value estimate from the tick oracle (least-squares over tick pairs).
double tick_map(const AnnotatedChart& c, Axis axis, float px) {
    std::vector<std::pair<double, double>> tp;  // (pixel, value)
    for (const auto& t : c.axis_ticks) {
        if (t.axis != axis) continue;
        const auto& text = c.text_boxes[static_cast<std::size_t>(t.text_id)].text;
        tp.push_back({axis == Axis::X ? t.pixel.x : t.pixel.y, std::stod(text)});
    }
    REQUIRE(tp.size() >= 2);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [p, v] : tp) {
        sx += p;
        sy += v;
        sxx += p * p;
        sxy += p * v;
    }
    double m = static_cast<double>(tp.size());
    double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return sy / m + slope * (px - sx / m);
}

}  // namespace

TEST_CASE("sample_spec is deterministic and within invariants") {
    for (ChartType t : kAllChartTypes) {
        ChartSpec a = sample_spec(t, 7);
        ChartSpec b = sample_spec(t, 7);
        CHECK(a == b);
        CHECK(sample_spec(t, 8).rng_seed != a.rng_seed + 100);  // different seed allowed to differ
    }
    ChartSpec box = sample_spec(ChartType::BoxVertical, 3);
    CHECK(box.n_series == 1);
    CHECK(box.n_points_per_series >= 2);
}

TEST_CASE("sampled palettes keep pairwise distance >= 60") {
    for (int seed = 0; seed < 1000; ++seed) {
        ChartType t = kAllChartTypes[static_cast<std::size_t>(seed % 5)];
        ChartSpec s = sample_spec(t, static_cast<std::uint64_t>(seed));
        for (std::size_t i = 0; i < s.style.palette.size(); ++i)
            for (std::size_t j = i + 1; j < s.style.palette.size(); ++j)
                CHECK(color_distance(s.style.palette[i], s.style.palette[j]) >= 60.f);
    }
}

TEST_CASE("generate_chart is deterministic") {
    for (ChartType t : kAllChartTypes) {
        AnnotatedChart a = generate_chart(sample_spec(t, 11));
        AnnotatedChart b = generate_chart(sample_spec(t, 11));
        CHECK(annotation_equal(a, b));
    }
}

TEST_CASE("generated charts survive save + load_annotation validation") {
    auto dir = (std::filesystem::temp_directory_path() / "chartex_synth_test").string();
    int idx = 0;
    for (ChartType t : kAllChartTypes) {
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            AnnotatedChart c = generate_chart(sample_spec(t, seed));
            auto path = save_chart(dir, "c" + std::to_string(idx++), c);
            AnnotatedChart back = load_annotation(path);
            CHECK(annotation_equal(c, back));
        }
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("ground-truth keypoints stay pairwise separated") {
    for (ChartType t : kAllChartTypes) {
        for (std::uint64_t seed = 100; seed < 130; ++seed) {
            AnnotatedChart c = generate_chart(sample_spec(t, seed));
            auto pts = all_kp(c);
            float min_d = 1e9f;
            for (std::size_t i = 0; i < pts.size(); ++i)
                for (std::size_t j = i + 1; j < pts.size(); ++j)
                    min_d = std::min(min_d, distance(pts[i], pts[j]));
            INFO(chart_type_name(t) << " seed " << seed << " min sep " << min_d);
            CHECK(min_d >= 17.0f);
            for (const auto& p : pts) CHECK(c.plot_bbox.contains(p, 2.0f));
        }
    }
}

TEST_CASE("tick oracle inverts vertex pixels to data values") {
    // line chart: vertex pixel -> value via tick map matches stored values
    AnnotatedChart c = generate_chart(sample_spec(ChartType::Line, 21));
    double x_upp = 0, y_upp = 0;  // units per pixel
    {
        double v0 = tick_map(c, Axis::X, 0), v1 = tick_map(c, Axis::X, 100);
        x_upp = std::abs(v1 - v0) / 100.0;
        v0 = tick_map(c, Axis::Y, 0);
        v1 = tick_map(c, Axis::Y, 100);
        y_upp = std::abs(v1 - v0) / 100.0;
    }
    for (std::size_t si = 0; si < c.data_series.size(); ++si) {
        const auto& g = c.pixel_geometry[si];
        for (std::size_t i = 0; i < g.vertices.size(); ++i) {
            const auto& v = c.data_series[si].values[i];
            CHECK(std::abs(tick_map(c, Axis::X, g.vertices[i].x) - *v.x_num) <= 1.01 * x_upp);
            CHECK(std::abs(tick_map(c, Axis::Y, g.vertices[i].y) - v.y) <= 1.01 * y_upp);
        }
    }
}

TEST_CASE("bar charts carry rects, categorical ticks, and legends") {
    ChartSpec spec = sample_spec(ChartType::BarVertical, 5);
    spec.n_series = 1;
    spec.n_points_per_series = 3;
    spec.style.palette.resize(1);
    spec.style.legend_position = LegendPos::None;
    AnnotatedChart c = generate_chart(spec);
    REQUIRE(c.data_series.size() == 1);
    CHECK(c.pixel_geometry[0].bar_rects.size() == 3);
    int x_ticks = 0;
    std::set<std::string> labels;
    for (const auto& t : c.axis_ticks)
        if (t.axis == Axis::X) {
            ++x_ticks;
            labels.insert(c.text_boxes[static_cast<std::size_t>(t.text_id)].text);
        }
    CHECK(x_ticks == 3);
    CHECK(labels == std::set<std::string>{"a", "b", "c"});

    // multi-series gets a legend whose patch colors equal series colors
    ChartSpec ms = sample_spec(ChartType::BarVertical, 6);
    if (ms.n_series < 2) {
        ms.n_series = 2;
        ms.n_points_per_series = 2;
        ms.style.palette = {master_palette()[0], master_palette()[1]};
        ms.style.legend_position = LegendPos::Bottom;
    }
    AnnotatedChart mc = generate_chart(ms);
    REQUIRE(mc.legend_pairs.size() == static_cast<std::size_t>(ms.n_series));
    for (std::size_t i = 0; i < mc.legend_pairs.size(); ++i) {
        const Rect& p = mc.legend_pairs[i].patch_bbox;
        Rgb mid = mc.image.at(static_cast<int>((p.y0 + p.y1) / 2),
                              static_cast<int>((p.x0 + p.x1) / 2));
        CHECK(mid == ms.style.palette[i]);
        CHECK(mc.text_boxes[static_cast<std::size_t>(mc.legend_pairs[i].text_id)].role ==
              TextRole::LegendLabel);
    }
}

TEST_CASE("oversized requests raise LayoutOverflow") {
    ChartSpec spec = sample_spec(ChartType::Line, 1, 128, 128);
    spec.n_points_per_series = 12;  // 128px canvas fits only ~3 line points
    try {
        generate_chart(spec);
        FAIL("expected LayoutOverflow");
    } catch (const Error& e) {
        CHECK(e.kind() == "LayoutOverflow");
    }
    CHECK_THROWS_AS(sample_spec(ChartType::BoxVertical, 0, 128, 128), Error);
}

TEST_CASE("box chart stats are ordered and whiskers match values") {
    AnnotatedChart c = generate_chart(sample_spec(ChartType::BoxVertical, 17));
    REQUIRE(!c.data_series.empty());
    for (std::size_t i = 0; i < c.data_series.size(); ++i) {
        const auto& s = c.data_series[i];
        REQUIRE(s.kind == SeriesKind::Box);
        CHECK(s.box.ordered());
        CHECK(s.box.min < s.box.q1);  // strict, whisker gaps enforce it
        const auto& w = c.pixel_geometry[i].whiskers;
        REQUIRE(w.size() == 5);
        // value order min..max maps to strictly decreasing pixel y
        for (int k = 0; k + 1 < 5; ++k) CHECK(w[static_cast<std::size_t>(k)].y > w[static_cast<std::size_t>(k + 1)].y);
    }
}
