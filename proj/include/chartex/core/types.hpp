#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "chartex/core/error.hpp"
#include "chartex/image/raster.hpp"

namespace chartex {

enum class ChartType { Line, Scatter, BarHorizontal, BarVertical, BoxVertical };

constexpr std::array<ChartType, 5> kAllChartTypes = {
    ChartType::Line, ChartType::Scatter, ChartType::BarHorizontal,
    ChartType::BarVertical, ChartType::BoxVertical};

inline const char* chart_type_name(ChartType t) {
  switch (t) {
    case ChartType::Line: return "line";
    case ChartType::Scatter: return "scatter";
    case ChartType::BarHorizontal: return "bar_horizontal";
    case ChartType::BarVertical: return "bar_vertical";
    case ChartType::BoxVertical: return "box_vertical";
  }
  return "?";
}

inline ChartType chart_type_from_name(const std::string& s) {
  for (ChartType t : kAllChartTypes)
    if (s == chart_type_name(t)) return t;
  fail("MalformedAnnotation", "unknown chart_type '" + s + "'");
}

struct Point {
  float x = 0.f;
  float y = 0.f;
};

inline float distance(const Point& a, const Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Pixel rectangle with inclusive corners.
struct Rect {
  float x0 = 0.f, y0 = 0.f, x1 = 0.f, y1 = 0.f;

  float width() const { return x1 - x0; }
  float height() const { return y1 - y0; }
  Point center() const { return {(x0 + x1) * 0.5f, (y0 + y1) * 0.5f}; }
  bool contains(const Point& p, float slack = 0.f) const {
    return p.x >= x0 - slack && p.x <= x1 + slack && p.y >= y0 - slack &&
           p.y <= y1 + slack;
  }
};

enum class TextRole { ChartTitle, AxisTitle, TickLabel, LegendLabel, Other };

inline const char* text_role_name(TextRole r) {
  switch (r) {
    case TextRole::ChartTitle: return "chart-title";
    case TextRole::AxisTitle: return "axis-title";
    case TextRole::TickLabel: return "tick-label";
    case TextRole::LegendLabel: return "legend-label";
    case TextRole::Other: return "other";
  }
  return "?";
}

inline TextRole text_role_from_name(const std::string& s) {
  for (TextRole r : {TextRole::ChartTitle, TextRole::AxisTitle, TextRole::TickLabel,
                     TextRole::LegendLabel, TextRole::Other})
    if (s == text_role_name(r)) return r;
  fail("MalformedAnnotation", "unknown text role '" + s + "'");
}

struct TextBox {
  std::vector<Point> polygon;  // 4 corners, clockwise from top-left
  std::string text;
  TextRole role = TextRole::Other;

  Rect bbox() const {
    Rect r{1e30f, 1e30f, -1e30f, -1e30f};
    for (const Point& p : polygon) {
      r.x0 = std::min(r.x0, p.x);
      r.y0 = std::min(r.y0, p.y);
      r.x1 = std::max(r.x1, p.x);
      r.y1 = std::max(r.y1, p.y);
    }
    return r;
  }
};

enum class Axis { X, Y };

struct AxisTick {
  Axis axis = Axis::X;
  Point pixel;     // position on the axis line
  int text_id = -1;  // index into text_boxes
};

struct LegendPair {
  int text_id = -1;  // index into text_boxes (legend-label)
  Rect patch_bbox;   // color swatch next to the label
};

enum class SeriesKind { Continuous, Points, Bars, Box };

inline const char* series_kind_name(SeriesKind k) {
  switch (k) {
    case SeriesKind::Continuous: return "continuous";
    case SeriesKind::Points: return "points";
    case SeriesKind::Bars: return "bars";
    case SeriesKind::Box: return "box";
  }
  return "?";
}

inline SeriesKind series_kind_from_name(const std::string& s) {
  for (SeriesKind k : {SeriesKind::Continuous, SeriesKind::Points, SeriesKind::Bars,
                       SeriesKind::Box})
    if (s == series_kind_name(k)) return k;
  fail("MalformedAnnotation", "unknown series kind '" + s + "'");
}

// x is either numeric (continuous axes) or a categorical label string.
struct DataPoint {
  std::optional<double> x_num;
  std::string x_str;
  double y = 0.0;

  bool x_is_numeric() const { return x_num.has_value(); }
  static DataPoint numeric(double x, double y) { return {x, "", y}; }
  static DataPoint categorical(std::string label, double y) {
    return {std::nullopt, std::move(label), y};
  }
};

struct BoxStats {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;

  bool ordered() const { return min <= q1 && q1 <= median && median <= q3 && q3 <= max; }
  std::array<double, 5> values() const { return {min, q1, median, q3, max}; }
};

struct DataSeries {
  std::string name;
  SeriesKind kind = SeriesKind::Continuous;
  std::vector<DataPoint> values;  // continuous / points / bars
  BoxStats box;                   // kind == Box
};

// Ground-truth pixel geometry for one series, parallel to data_series.
// line: polyline vertices; scatter: marker centers; bars: one rect per value;
// box: the five whisker points in (min, q1, median, q3, max) order.
struct SeriesGeometry {
  std::vector<Point> vertices;
  std::vector<Rect> bar_rects;
  std::vector<Point> whiskers;
};

struct AnnotatedChart {
  RgbImage image;
  std::string image_file;  // sibling file name the annotation references
  ChartType chart_type = ChartType::Line;
  std::vector<DataSeries> data_series;
  std::vector<TextBox> text_boxes;
  std::vector<AxisTick> axis_ticks;
  std::vector<LegendPair> legend_pairs;
  Rect plot_bbox;
  std::vector<SeriesGeometry> pixel_geometry;  // may be empty for predictions

  int ticks_on(Axis a) const {
    int n = 0;
    for (const auto& t : axis_ticks) n += (t.axis == a);
    return n;
  }
  // A chart needs two ticks on every labeled axis to be scored for 6b.
  bool scorable_6b() const {
    bool has_x = false, has_y = false;
    for (const auto& t : axis_ticks) (t.axis == Axis::X ? has_x : has_y) = true;
    return (!has_x || ticks_on(Axis::X) >= 2) && (!has_y || ticks_on(Axis::Y) >= 2) &&
           (has_x || has_y);
  }
};

enum class KpRole {
  Inflection,
  TopLeft,
  Center,
  BottomRight,
  WhiskerMin,
  WhiskerQ1,
  WhiskerMedian,
  WhiskerQ3,
  WhiskerMax,
  Scatter
};

struct Keypoint {
  float x = 0.f;
  float y = 0.f;
  int group_id = 0;  // one chart component instance (line, bar, box, scatter series)
  KpRole role = KpRole::Inflection;
};

struct KeypointList {
  std::vector<Keypoint> points;

  int group_count() const {
    int g = -1;
    for (const auto& p : points) g = std::max(g, p.group_id);
    return g + 1;
  }
};

}  // namespace chartex
