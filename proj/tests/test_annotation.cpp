#include <doctest.h>

#include <filesystem>
#include <string>

#include "chartex/core/annotation.hpp"
#include "chartex/image/draw.hpp"

using namespace chartex;

namespace {

std::string temp_dir() {
    auto d = std::filesystem::temp_directory_path() / "chartex_ann_test";
    std::filesystem::create_directories(d);
    return d.string();
}

AnnotatedChart tiny_line_chart() {
    AnnotatedChart c;
    c.image = RgbImage(64, 64);
    c.chart_type = ChartType::Line;
    c.plot_bbox = Rect{10, 10, 60, 50};
    c.text_boxes.push_back({{{2, 52}, {8, 52}, {8, 60}, {2, 60}}, "0", TextRole::TickLabel});
    c.text_boxes.push_back({{{2, 12}, {8, 12}, {8, 20}, {2, 20}}, "1", TextRole::TickLabel});
    c.text_boxes.push_back({{{12, 55}, {18, 55}, {18, 62}, {12, 62}}, "0", TextRole::TickLabel});
    c.text_boxes.push_back({{{52, 55}, {58, 55}, {58, 62}, {52, 62}}, "1", TextRole::TickLabel});
    c.axis_ticks.push_back({Axis::Y, {10, 50}, 0});
    c.axis_ticks.push_back({Axis::Y, {10, 10}, 1});
    c.axis_ticks.push_back({Axis::X, {10, 50}, 2});
    c.axis_ticks.push_back({Axis::X, {60, 50}, 3});
    DataSeries s;
    s.name = "series-1";
    s.kind = SeriesKind::Continuous;
    s.values = {DataPoint::numeric(0, 0), DataPoint::numeric(1, 1)};
    c.data_series.push_back(s);
    c.pixel_geometry.push_back({{{10, 50}, {60, 10}}, {}, {}});
    return c;
}

}  // namespace

TEST_CASE("annotation round trip is value equal") {
    auto dir = temp_dir();
    AnnotatedChart c = tiny_line_chart();
    auto path = save_chart(dir, "tiny_line", c);
    AnnotatedChart back = load_annotation(path);
    CHECK(annotation_equal(c, back));
    CHECK(back.data_series[0].kind == SeriesKind::Continuous);
    CHECK(back.scorable_6b());
}

TEST_CASE("dangling legend reference is rejected") {
    auto dir = temp_dir();
    AnnotatedChart c = tiny_line_chart();
    c.legend_pairs.push_back({99, Rect{1, 1, 5, 5}});
    auto path = save_chart(dir, "dangling", c);
    try {
        load_annotation(path);
        FAIL("expected DanglingReference");
    } catch (const Error& e) {
        CHECK(e.kind() == "DanglingReference");
    }
}

TEST_CASE("coordinates outside the canvas are rejected") {
    auto dir = temp_dir();
    AnnotatedChart c = tiny_line_chart();
    c.axis_ticks[0].pixel = Point{200, 10};
    auto path = save_chart(dir, "oob", c);
    try {
        load_annotation(path);
        FAIL("expected OutOfBounds");
    } catch (const Error& e) {
        CHECK(e.kind() == "OutOfBounds");
    }
}

TEST_CASE("non-monotone continuous series is rejected") {
    auto dir = temp_dir();
    AnnotatedChart c = tiny_line_chart();
    c.data_series[0].values = {DataPoint::numeric(1, 0), DataPoint::numeric(0, 1)};
    auto path = save_chart(dir, "monotone", c);
    try {
        load_annotation(path);
        FAIL("expected MalformedAnnotation");
    } catch (const Error& e) {
        CHECK(e.kind() == "MalformedAnnotation");
    }
}

TEST_CASE("keypoints: bar corners and center") {
    AnnotatedChart c;
    c.chart_type = ChartType::BarVertical;
    DataSeries s;
    s.name = "series-1";
    s.kind = SeriesKind::Bars;
    s.values = {DataPoint::categorical("a", 5)};
    c.data_series.push_back(s);
    c.pixel_geometry.push_back({{}, {Rect{10, 20, 30, 80}}, {}});

    KeypointList kp = extract_keypoints(c);
    REQUIRE(kp.points.size() == 3);
    CHECK(kp.points[0].x == 10);
    CHECK(kp.points[0].y == 20);
    CHECK(kp.points[0].role == KpRole::TopLeft);
    CHECK(kp.points[1].x == 20);
    CHECK(kp.points[1].y == 50);
    CHECK(kp.points[1].role == KpRole::Center);
    CHECK(kp.points[2].x == 30);
    CHECK(kp.points[2].y == 80);
    CHECK(kp.points[2].role == KpRole::BottomRight);
    CHECK(kp.group_count() == 1);
}

TEST_CASE("keypoints: box whiskers and line groups") {
    AnnotatedChart box;
    box.chart_type = ChartType::BoxVertical;
    DataSeries bs;
    bs.name = "b";
    bs.kind = SeriesKind::Box;
    bs.box = BoxStats{0, 1, 2, 3, 4};
    box.data_series.push_back(bs);
    box.pixel_geometry.push_back({{}, {}, {{40, 90}, {40, 70}, {40, 50}, {40, 30}, {40, 10}}});
    KeypointList kb = extract_keypoints(box);
    REQUIRE(kb.points.size() == 5);
    CHECK(kb.points[0].role == KpRole::WhiskerMin);
    CHECK(kb.points[0].y == 90);
    CHECK(kb.points[4].role == KpRole::WhiskerMax);
    CHECK(kb.points[4].y == 10);

    AnnotatedChart line;
    line.chart_type = ChartType::Line;
    for (int s = 0; s < 2; ++s) {
        DataSeries ls;
        ls.name = "series-" + std::to_string(s + 1);
        ls.kind = SeriesKind::Continuous;
        SeriesGeometry g;
        for (int i = 0; i < 5; ++i) {
            ls.values.push_back(DataPoint::numeric(i, i));
            g.vertices.push_back({static_cast<float>(10 * i), static_cast<float>(s * 20)});
        }
        line.data_series.push_back(ls);
        line.pixel_geometry.push_back(g);
    }
    KeypointList kl = extract_keypoints(line);
    CHECK(kl.points.size() == 10);
    CHECK(kl.group_count() == 2);

    AnnotatedChart empty;
    CHECK_THROWS_AS(extract_keypoints(empty), Error);
}
