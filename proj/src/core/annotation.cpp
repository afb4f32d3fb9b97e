#include "chartex/core/annotation.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "chartex/image/raster.hpp"

namespace chartex {
namespace {

using Json = nlohmann::ordered_json;

Json point_json(const Point& p) { return Json::array({p.x, p.y}); }

Point point_from(const Json& j, const char* what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        fail("MalformedAnnotation", std::string(what) + " must be [x, y]");
    return Point{j[0].get<float>(), j[1].get<float>()};
}

Json rect_json(const Rect& r) { return Json::array({r.x0, r.y0, r.x1, r.y1}); }

Rect rect_from(const Json& j, const char* what) {
    if (!j.is_array() || j.size() != 4)
        fail("MalformedAnnotation", std::string(what) + " must be [x0, y0, x1, y1]");
    for (const auto& v : j)
        if (!v.is_number()) fail("MalformedAnnotation", std::string(what) + " has non-numeric entry");
    Rect r{j[0].get<float>(), j[1].get<float>(), j[2].get<float>(), j[3].get<float>()};
    if (r.x1 < r.x0 || r.y1 < r.y0)
        fail("MalformedAnnotation", std::string(what) + " has inverted corners");
    return r;
}

const Json& field(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) fail("MalformedAnnotation", std::string("missing field '") + key + "'");
    return *it;
}

void check_point_bounds(const Point& p, int h, int w, const char* what) {
    constexpr float kSlack = 0.5f;
    if (p.x < -kSlack || p.x > static_cast<float>(w - 1) + kSlack || p.y < -kSlack ||
        p.y > static_cast<float>(h - 1) + kSlack)
        fail("OutOfBounds", std::string(what) + " (" + std::to_string(p.x) + ", " +
                                std::to_string(p.y) + ") outside " + std::to_string(w) + "x" +
                                std::to_string(h) + " canvas");
}

void check_rect_bounds(const Rect& r, int h, int w, const char* what) {
    check_point_bounds({r.x0, r.y0}, h, w, what);
    check_point_bounds({r.x1, r.y1}, h, w, what);
}

double coerce_numeric(const DataPoint& p) {
    if (p.x_is_numeric()) return *p.x_num;
    double out = 0.0;
    const char* b = p.x_str.data();
    const char* e = b + p.x_str.size();
    auto [ptr, ec] = std::from_chars(b, e, out);
    if (ec != std::errc{} || ptr != e)
        fail("MalformedAnnotation",
             "continuous series x '" + p.x_str + "' is not numeric");
    return out;
}

void validate(const AnnotatedChart& c, int canvas_h, int canvas_w) {
    int n_text = static_cast<int>(c.text_boxes.size());
    for (const auto& tb : c.text_boxes) {
        if (tb.polygon.size() != 4)
            fail("MalformedAnnotation", "text box polygon must have 4 points");
        for (const auto& p : tb.polygon) check_point_bounds(p, canvas_h, canvas_w, "text box");
    }
    for (const auto& t : c.axis_ticks) {
        if (t.text_id < 0 || t.text_id >= n_text)
            fail("DanglingReference",
                 "axis tick references text box " + std::to_string(t.text_id));
        check_point_bounds(t.pixel, canvas_h, canvas_w, "axis tick");
    }
    for (const auto& lp : c.legend_pairs) {
        if (lp.text_id < 0 || lp.text_id >= n_text)
            fail("DanglingReference",
                 "legend pair references text box " + std::to_string(lp.text_id));
        check_rect_bounds(lp.patch_bbox, canvas_h, canvas_w, "legend patch");
    }
    check_rect_bounds(c.plot_bbox, canvas_h, canvas_w, "plot bbox");

    for (const auto& s : c.data_series) {
        if (s.kind == SeriesKind::Continuous) {
            double prev = -std::numeric_limits<double>::infinity();
            for (const auto& v : s.values) {
                double x = coerce_numeric(v);
                if (!(x > prev))
                    fail("MalformedAnnotation",
                         "continuous series '" + s.name + "' x-values not strictly increasing");
                prev = x;
            }
        }
        if (s.kind == SeriesKind::Box && !s.box.ordered())
            fail("MalformedAnnotation", "box stats for '" + s.name + "' not ordered");
    }

    if (!c.pixel_geometry.empty()) {
        if (c.pixel_geometry.size() != c.data_series.size())
            fail("MalformedAnnotation", "pixel_geometry length != data_series length");
        for (std::size_t i = 0; i < c.data_series.size(); ++i) {
            const auto& s = c.data_series[i];
            const auto& g = c.pixel_geometry[i];
            switch (s.kind) {
                case SeriesKind::Continuous:
                case SeriesKind::Points:
                    if (g.vertices.size() != s.values.size())
                        fail("MalformedAnnotation",
                             "series '" + s.name + "' vertex count != value count");
                    for (const auto& p : g.vertices)
                        check_point_bounds(p, canvas_h, canvas_w, "series vertex");
                    break;
                case SeriesKind::Bars:
                    if (g.bar_rects.size() != s.values.size())
                        fail("MalformedAnnotation",
                             "series '" + s.name + "' bar count != value count");
                    for (const auto& r : g.bar_rects)
                        check_rect_bounds(r, canvas_h, canvas_w, "bar rect");
                    break;
                case SeriesKind::Box:
                    if (g.whiskers.size() != 5)
                        fail("MalformedAnnotation",
                             "series '" + s.name + "' needs 5 whisker points");
                    for (const auto& p : g.whiskers)
                        check_point_bounds(p, canvas_h, canvas_w, "whisker");
                    break;
            }
        }
    }
}

}  // namespace

AnnotatedChart load_annotation(const std::string& path, bool load_image) {
    std::ifstream in(path);
    if (!in) fail("IoError", "cannot open annotation " + path);
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail("MalformedAnnotation", std::string("JSON parse error: ") + e.what());
    }

    if (!j.is_object() || field(j, "format_version").get<int>() != 1)
        fail("MalformedAnnotation", "unsupported format_version");

    AnnotatedChart c;
    c.image_file = field(j, "image_file").get<std::string>();
    c.chart_type = chart_type_from_name(field(j, "chart_type").get<std::string>());

    const Json& canvas = field(j, "canvas");
    if (!canvas.is_array() || canvas.size() != 2)
        fail("MalformedAnnotation", "canvas must be [H, W]");
    int canvas_h = canvas[0].get<int>();
    int canvas_w = canvas[1].get<int>();
    if (canvas_h < 1 || canvas_w < 1) fail("MalformedAnnotation", "canvas must be positive");

    c.plot_bbox = rect_from(field(j, "plot_bbox"), "plot_bbox");

    for (const Json& tj : field(j, "text_boxes")) {
        TextBox tb;
        for (const Json& pj : field(tj, "polygon")) tb.polygon.push_back(point_from(pj, "polygon point"));
        tb.text = field(tj, "text").get<std::string>();
        tb.role = text_role_from_name(field(tj, "role").get<std::string>());
        c.text_boxes.push_back(std::move(tb));
    }

    for (const Json& tj : field(j, "axis_ticks")) {
        AxisTick t;
        std::string ax = field(tj, "axis").get<std::string>();
        if (ax == "x")
            t.axis = Axis::X;
        else if (ax == "y")
            t.axis = Axis::Y;
        else
            fail("MalformedAnnotation", "axis must be 'x' or 'y'");
        t.pixel = point_from(field(tj, "pixel"), "tick pixel");
        t.text_id = field(tj, "text_id").get<int>();
        c.axis_ticks.push_back(t);
    }

    for (const Json& lj : field(j, "legend_pairs")) {
        LegendPair lp;
        lp.text_id = field(lj, "text_id").get<int>();
        lp.patch_bbox = rect_from(field(lj, "patch_bbox"), "legend patch_bbox");
        c.legend_pairs.push_back(lp);
    }

    for (const Json& sj : field(j, "data_series")) {
        DataSeries s;
        s.name = field(sj, "name").get<std::string>();
        s.kind = series_kind_from_name(field(sj, "kind").get<std::string>());
        if (s.kind == SeriesKind::Box) {
            const Json& bj = field(sj, "box");
            s.box = BoxStats{field(bj, "min").get<double>(), field(bj, "q1").get<double>(),
                             field(bj, "median").get<double>(), field(bj, "q3").get<double>(),
                             field(bj, "max").get<double>()};
        } else {
            for (const Json& vj : field(sj, "values")) {
                const Json& x = field(vj, "x");
                double y = field(vj, "y").get<double>();
                if (x.is_number())
                    s.values.push_back(DataPoint::numeric(x.get<double>(), y));
                else if (x.is_string())
                    s.values.push_back(DataPoint::categorical(x.get<std::string>(), y));
                else
                    fail("MalformedAnnotation", "value x must be number or string");
            }
        }
        c.data_series.push_back(std::move(s));
    }

    if (auto it = j.find("pixel_geometry"); it != j.end() && !it->is_null()) {
        for (const Json& gj : *it) {
            SeriesGeometry g;
            if (auto v = gj.find("vertices"); v != gj.end())
                for (const Json& pj : *v) g.vertices.push_back(point_from(pj, "vertex"));
            if (auto v = gj.find("bar_rects"); v != gj.end())
                for (const Json& rj : *v) g.bar_rects.push_back(rect_from(rj, "bar rect"));
            if (auto v = gj.find("whiskers"); v != gj.end())
                for (const Json& pj : *v) g.whiskers.push_back(point_from(pj, "whisker"));
            c.pixel_geometry.push_back(std::move(g));
        }
    }

    validate(c, canvas_h, canvas_w);

    if (load_image && !c.image_file.empty()) {
        auto img_path = std::filesystem::path(path).parent_path() / c.image_file;
        c.image = read_png(img_path.string());
        if (c.image.height() != canvas_h || c.image.width() != canvas_w)
            fail("MalformedAnnotation", "image size does not match recorded canvas");
    }
    return c;
}

void save_annotation(const std::string& path, const AnnotatedChart& chart) {
    Json j;
    j["format_version"] = 1;
    j["image_file"] = chart.image_file;
    int h = chart.image.empty() ? static_cast<int>(std::lround(chart.plot_bbox.y1)) + 1
                                : chart.image.height();
    int w = chart.image.empty() ? static_cast<int>(std::lround(chart.plot_bbox.x1)) + 1
                                : chart.image.width();
    j["canvas"] = Json::array({h, w});
    j["chart_type"] = chart_type_name(chart.chart_type);
    j["plot_bbox"] = rect_json(chart.plot_bbox);

    Json text_boxes = Json::array();
    for (const auto& tb : chart.text_boxes) {
        Json tj;
        Json poly = Json::array();
        for (const auto& p : tb.polygon) poly.push_back(point_json(p));
        tj["polygon"] = std::move(poly);
        tj["text"] = tb.text;
        tj["role"] = text_role_name(tb.role);
        text_boxes.push_back(std::move(tj));
    }
    j["text_boxes"] = std::move(text_boxes);

    Json ticks = Json::array();
    for (const auto& t : chart.axis_ticks) {
        Json tj;
        tj["axis"] = t.axis == Axis::X ? "x" : "y";
        tj["pixel"] = point_json(t.pixel);
        tj["text_id"] = t.text_id;
        ticks.push_back(std::move(tj));
    }
    j["axis_ticks"] = std::move(ticks);

    Json legend = Json::array();
    for (const auto& lp : chart.legend_pairs) {
        Json lj;
        lj["text_id"] = lp.text_id;
        lj["patch_bbox"] = rect_json(lp.patch_bbox);
        legend.push_back(std::move(lj));
    }
    j["legend_pairs"] = std::move(legend);

    Json series = Json::array();
    for (const auto& s : chart.data_series) {
        Json sj;
        sj["name"] = s.name;
        sj["kind"] = series_kind_name(s.kind);
        if (s.kind == SeriesKind::Box) {
            sj["box"] = Json{{"min", s.box.min},
                             {"q1", s.box.q1},
                             {"median", s.box.median},
                             {"q3", s.box.q3},
                             {"max", s.box.max}};
        } else {
            Json vals = Json::array();
            for (const auto& v : s.values) {
                Json vj;
                if (v.x_is_numeric())
                    vj["x"] = *v.x_num;
                else
                    vj["x"] = v.x_str;
                vj["y"] = v.y;
                vals.push_back(std::move(vj));
            }
            sj["values"] = std::move(vals);
        }
        series.push_back(std::move(sj));
    }
    j["data_series"] = std::move(series);

    Json geom = Json::array();
    for (const auto& g : chart.pixel_geometry) {
        Json gj = Json::object();
        if (!g.vertices.empty()) {
            Json v = Json::array();
            for (const auto& p : g.vertices) v.push_back(point_json(p));
            gj["vertices"] = std::move(v);
        }
        if (!g.bar_rects.empty()) {
            Json v = Json::array();
            for (const auto& r : g.bar_rects) v.push_back(rect_json(r));
            gj["bar_rects"] = std::move(v);
        }
        if (!g.whiskers.empty()) {
            Json v = Json::array();
            for (const auto& p : g.whiskers) v.push_back(point_json(p));
            gj["whiskers"] = std::move(v);
        }
        geom.push_back(std::move(gj));
    }
    j["pixel_geometry"] = std::move(geom);

    std::ofstream out(path);
    if (!out) fail("IoError", "cannot write annotation " + path);
    out << j.dump(2) << '\n';
    if (!out) fail("IoError", "write failed for " + path);
}

std::string save_chart(const std::string& dir, const std::string& stem, AnnotatedChart& chart) {
    std::filesystem::create_directories(dir);
    chart.image_file = stem + ".png";
    auto png_path = std::filesystem::path(dir) / chart.image_file;
    write_png(png_path.string(), chart.image);
    auto json_path = std::filesystem::path(dir) / (stem + ".json");
    save_annotation(json_path.string(), chart);
    return json_path.string();
}

KeypointList extract_keypoints(const AnnotatedChart& gt) {
    if (gt.pixel_geometry.empty() || gt.pixel_geometry.size() != gt.data_series.size())
        fail("MissingGeometry", "annotation lacks per-series pixel geometry");

    KeypointList out;
    int group = 0;
    for (std::size_t i = 0; i < gt.data_series.size(); ++i) {
        const auto& s = gt.data_series[i];
        const auto& g = gt.pixel_geometry[i];
        switch (s.kind) {
            case SeriesKind::Continuous: {
                for (const auto& p : g.vertices)
                    out.points.push_back({p.x, p.y, group, KpRole::Inflection});
                ++group;
                break;
            }
            case SeriesKind::Points: {
                for (const auto& p : g.vertices)
                    out.points.push_back({p.x, p.y, group, KpRole::Scatter});
                ++group;
                break;
            }
            case SeriesKind::Bars: {
                for (const auto& r : g.bar_rects) {
                    Point c = r.center();
                    out.points.push_back({r.x0, r.y0, group, KpRole::TopLeft});
                    out.points.push_back({c.x, c.y, group, KpRole::Center});
                    out.points.push_back({r.x1, r.y1, group, KpRole::BottomRight});
                    ++group;
                }
                break;
            }
            case SeriesKind::Box: {
                static constexpr KpRole roles[5] = {KpRole::WhiskerMin, KpRole::WhiskerQ1,
                                                    KpRole::WhiskerMedian, KpRole::WhiskerQ3,
                                                    KpRole::WhiskerMax};
                for (int k = 0; k < 5; ++k) {
                    const Point& p = g.whiskers[static_cast<std::size_t>(k)];
                    out.points.push_back({p.x, p.y, group, roles[k]});
                }
                ++group;
                break;
            }
        }
    }
    return out;
}

namespace {

const auto eq_point = [](const Point& a, const Point& b) { return a.x == b.x && a.y == b.y; };
const auto eq_rect = [](const Rect& a, const Rect& b) {
    return a.x0 == b.x0 && a.y0 == b.y0 && a.x1 == b.x1 && a.y1 == b.y1;
};
template <typename T, typename F>
bool all_eq(const std::vector<T>& a, const std::vector<T>& b, F f) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!f(a[i], b[i])) return false;
    return true;
}

}  // namespace

bool annotation_equal(const AnnotatedChart& a, const AnnotatedChart& b, bool compare_image) {
    if (a.chart_type != b.chart_type || a.image_file != b.image_file) return false;
    if (!eq_rect(a.plot_bbox, b.plot_bbox)) return false;
    if (!all_eq(a.text_boxes, b.text_boxes, [](const TextBox& x, const TextBox& y) {
            return x.text == y.text && x.role == y.role && all_eq(x.polygon, y.polygon, eq_point);
        }))
        return false;
    if (!all_eq(a.axis_ticks, b.axis_ticks, [](const AxisTick& x, const AxisTick& y) {
            return x.axis == y.axis && x.text_id == y.text_id && eq_point(x.pixel, y.pixel);
        }))
        return false;
    if (!all_eq(a.legend_pairs, b.legend_pairs, [](const LegendPair& x, const LegendPair& y) {
            return x.text_id == y.text_id && eq_rect(x.patch_bbox, y.patch_bbox);
        }))
        return false;
    if (!all_eq(a.data_series, b.data_series, [](const DataSeries& x, const DataSeries& y) {
            if (x.name != y.name || x.kind != y.kind) return false;
            if (x.kind == SeriesKind::Box)
                return x.box.values() == y.box.values();
            return all_eq(x.values, y.values, [](const DataPoint& p, const DataPoint& q) {
                return p.x_num == q.x_num && p.x_str == q.x_str && p.y == q.y;
            });
        }))
        return false;
    if (!all_eq(a.pixel_geometry, b.pixel_geometry,
                [](const SeriesGeometry& x, const SeriesGeometry& y) {
                    return all_eq(x.vertices, y.vertices, eq_point) &&
                           all_eq(x.bar_rects, y.bar_rects, eq_rect) &&
                           all_eq(x.whiskers, y.whiskers, eq_point);
                }))
        return false;
    if (compare_image && !(a.image == b.image)) return false;
    return true;
}

}  // namespace chartex
