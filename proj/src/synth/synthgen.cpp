#include "chartex/synth/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>

#include "chartex/image/draw.hpp"

namespace chartex {
namespace {

// Keypoints closer than ~16 px merge into one blob after stride-4 Gaussian
// masking, so every sampler below keeps ground-truth keypoints >= kMinSep apart.
constexpr float kMinSep = 18.0f;
constexpr int kLatticeStep = 24;  // scatter grid / line x-step; 24 - 2*3 jitter >= 18

const std::vector<Rgb>& palette_master() {
    static const std::vector<Rgb> p = {
        Rgb{214, 39, 40},    // red
        Rgb{31, 119, 180},   // blue
        Rgb{44, 160, 44},    // green
        Rgb{255, 127, 14},   // orange
        Rgb{148, 103, 189},  // purple
        Rgb{140, 86, 75},    // brown
        Rgb{227, 119, 194},  // pink
        Rgb{23, 190, 207},   // cyan
    };
    return p;
}

const char* kSeriesNames[] = {"alpha", "beta", "gamma", "delta",
                              "kappa", "sigma", "omega", "theta"};
const char* kAxisWords[] = {"time", "index", "size", "count", "value", "score", "rate", "level"};
const char* kTitleWords[] = {"run", "test", "data", "trial"};
const double kNiceMax[] = {1, 2, 4, 10, 20, 40, 100, 200, 400};

int ri(std::mt19937_64& g, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(g);
}
double rd(std::mt19937_64& g, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(g);
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

struct Layout {
    int x0, y0, x1, y1;  // plot bbox, axis lines on left/bottom edges
    int pad = 10;        // data inset from plot edges

    int inner_x0() const { return x0 + pad; }
    int inner_x1() const { return x1 - pad; }
    int inner_y0() const { return y0 + pad; }
    int inner_y1() const { return y1 - pad; }
    int inner_w() const { return inner_x1() - inner_x0(); }
    int inner_h() const { return inner_y1() - inner_y0(); }
};

Layout make_layout(int h, int w) {
    Layout L;
    L.x0 = 40;
    L.y0 = 16;
    L.x1 = w - 9;
    L.y1 = h - 40;  // room for x labels, axis title, legend strip
    return L;
}

// Affine value<->pixel map; p0 is the pixel of value 0, p1 of value vmax.
struct ValAxis {
    double vmax = 1;
    float p0 = 0, p1 = 1;

    float to_px(double v) const {
        return p0 + (p1 - p0) * static_cast<float>(v / vmax);
    }
    double to_val(float p) const {
        return vmax * static_cast<double>(p - p0) / static_cast<double>(p1 - p0);
    }
};

int tick_count(int span_px) { return span_px >= 110 ? 5 : 3; }

int add_text_box(AnnotatedChart& c, const Rect& r, const std::string& text, TextRole role) {
    TextBox tb;
    tb.polygon = {{r.x0, r.y0}, {r.x1, r.y0}, {r.x1, r.y1}, {r.x0, r.y1}};
    tb.text = text;
    tb.role = role;
    c.text_boxes.push_back(std::move(tb));
    return static_cast<int>(c.text_boxes.size()) - 1;
}

// ---- per-type count caps, shared by sample_spec and generate_chart ----

int line_max_points(const Layout& L) { return L.inner_w() / kLatticeStep + 1; }
int line_max_series(const Layout& L) {
    // disjoint 24px bands with 18px gaps
    return std::clamp((L.inner_h() + 18) / (24 + 18), 1, 4);
}

void scatter_grid(const Layout& L, int& cols, int& rows) {
    cols = std::max(0, (L.inner_w() - 2 * 12) / kLatticeStep + 1);
    rows = std::max(0, (L.inner_h() - 2 * 12) / kLatticeStep + 1);
}

// widest bar that fits `s` grouped bars in one category slot; <16 means overflow
int bar_width_for(int slot, int s) {
    return std::min(24, (slot - 8 - (s - 1) * 6) / s);
}

int bar_max_categories(int span, int s) {
    int n = 2;
    while (n <= 6 && bar_width_for(span / (n + 1), s) >= 16) ++n;
    return bar_width_for(span / 2, s) >= 16 ? n : 0;
}

constexpr int kBoxMinSpan = 4 * 20 + 4;  // four >=20px whisker gaps

}  // namespace

const std::vector<Rgb>& master_palette() { return palette_master(); }

ChartSpec sample_spec(ChartType chart_type, std::uint64_t rng_seed) {
    return sample_spec(chart_type, rng_seed, 256, 256);
}

ChartSpec sample_spec(ChartType chart_type, std::uint64_t rng_seed, int canvas_h, int canvas_w) {
    require(canvas_h >= 128 && canvas_w >= 128, "LayoutOverflow", "canvas below 128x128");
    std::mt19937_64 rng(rng_seed * 0x9E3779B97F4A7C15ULL +
                        static_cast<std::uint64_t>(chart_type) * 0xBF58476D1CE4E5B9ULL + 1);

    ChartSpec spec;
    spec.chart_type = chart_type;
    spec.canvas_h = canvas_h;
    spec.canvas_w = canvas_w;
    spec.rng_seed = rng_seed;

    Layout L = make_layout(canvas_h, canvas_w);
    switch (chart_type) {
        case ChartType::Line: {
            spec.n_series = ri(rng, 1, line_max_series(L));
            spec.n_points_per_series = ri(rng, 3, std::max(3, line_max_points(L)));
            break;
        }
        case ChartType::Scatter: {
            int cols, rows;
            scatter_grid(L, cols, rows);
            int cells = cols * rows;
            require(cells >= 3, "LayoutOverflow", "canvas too small for scatter lattice");
            int s_max = std::clamp(cells / 3, 1, 3);
            spec.n_series = ri(rng, 1, s_max);
            int n_max = std::max(2, std::min(7, cells / spec.n_series));
            spec.n_points_per_series = ri(rng, std::min(3, n_max), n_max);
            break;
        }
        case ChartType::BarVertical:
        case ChartType::BarHorizontal: {
            int span = chart_type == ChartType::BarVertical ? L.x1 - L.x0 - 12
                                                            : L.y1 - L.y0 - 12;
            int s_max = 1;
            for (int s = 3; s >= 1; --s)
                if (bar_max_categories(span, s) >= 2) {
                    s_max = s;
                    break;
                }
            spec.n_series = ri(rng, 1, s_max);
            int n_max = bar_max_categories(span, spec.n_series);
            require(n_max >= 2, "LayoutOverflow", "canvas too small for bars");
            int n_min = spec.n_series == 1 ? std::min(3, n_max) : 2;
            spec.n_points_per_series = ri(rng, n_min, n_max);
            break;
        }
        case ChartType::BoxVertical: {
            require(L.inner_h() >= kBoxMinSpan + 14, "LayoutOverflow",
                    "canvas too small for box whisker spacing");
            spec.n_series = 1;
            int span = L.x1 - L.x0 - 12;
            int n_max = std::clamp(span / 44, 2, 4);
            spec.n_points_per_series = ri(rng, 2, n_max);
            break;
        }
    }

    // colors: one per series (bars/lines/scatter); boxes reuse the first
    std::vector<Rgb> pal = palette_master();
    std::shuffle(pal.begin(), pal.end(), rng);
    int need = spec.chart_type == ChartType::BoxVertical ? 1 : spec.n_series;
    spec.style.palette.assign(pal.begin(), pal.begin() + need);
    spec.style.legend_position =
        (spec.n_series >= 2 && chart_type != ChartType::BoxVertical) ? LegendPos::Bottom
                                                                     : LegendPos::None;
    return spec;
}

AnnotatedChart generate_chart(const ChartSpec& spec) {
    require(spec.canvas_h >= 128 && spec.canvas_w >= 128, "LayoutOverflow", "canvas below 128x128");
    require(spec.n_series >= 1 && spec.n_series <= 4, "MalformedAnnotation",
            "n_series out of [1,4]");
    require(spec.n_points_per_series >= 2 && spec.n_points_per_series <= 20,
            "MalformedAnnotation", "n_points_per_series out of [2,20]");
    require(!spec.style.palette.empty(), "MalformedAnnotation", "empty palette");
    for (std::size_t i = 0; i < spec.style.palette.size(); ++i)
        for (std::size_t j = i + 1; j < spec.style.palette.size(); ++j)
            require(color_distance(spec.style.palette[i], spec.style.palette[j]) >= 60.f,
                    "MalformedAnnotation", "palette colors closer than L2=60");

    const int H = spec.canvas_h, W = spec.canvas_w;
    Layout L = make_layout(H, W);
    std::mt19937_64 rng(spec.rng_seed * 0x2545F4914F6CDD1DULL +
                        static_cast<std::uint64_t>(spec.chart_type) + 2);

    AnnotatedChart chart;
    chart.chart_type = spec.chart_type;
    chart.image = RgbImage(H, W, spec.style.background);
    chart.plot_bbox = Rect{static_cast<float>(L.x0), static_cast<float>(L.y0),
                           static_cast<float>(L.x1), static_cast<float>(L.y1)};
    RgbImage& img = chart.image;
    const Rgb black{0, 0, 0};
    const int fs = spec.style.font_scale;

    // title + axis titles
    {
        std::string title = std::string(kTitleWords[ri(rng, 0, 3)]) + " " +
                            std::to_string(ri(rng, 1, 99));
        int tw = text_width(title, fs);
        Rect r = draw_text(img, (W - tw) / 2, 3, title, black, fs);
        add_text_box(chart, r, title, TextRole::ChartTitle);
    }
    std::string x_title = kAxisWords[ri(rng, 0, 7)];
    std::string y_title = kAxisWords[ri(rng, 0, 7)];
    if (y_title == x_title) y_title = kAxisWords[(ri(rng, 1, 7) + 3) % 8];
    {
        int tw = text_width(x_title, fs);
        Rect r = draw_text(img, L.x0 + (L.x1 - L.x0 - tw) / 2, L.y1 + 14, x_title, black, fs);
        add_text_box(chart, r, x_title, TextRole::AxisTitle);
        int th = text_width(y_title, fs);
        Rect ry = draw_text_rot90(img, 2, L.y0 + (L.y1 - L.y0 - th) / 2, y_title, black, fs);
        add_text_box(chart, ry, y_title, TextRole::AxisTitle);
    }

    const bool y_numeric = spec.chart_type != ChartType::BarHorizontal;
    const bool x_numeric =
        spec.chart_type == ChartType::Line || spec.chart_type == ChartType::Scatter ||
        spec.chart_type == ChartType::BarHorizontal;

    ValAxis ax_y{kNiceMax[ri(rng, 0, 8)], static_cast<float>(L.y1),
                 static_cast<float>(L.inner_y0())};
    ValAxis ax_x{kNiceMax[ri(rng, 0, 8)], static_cast<float>(L.x0),
                 static_cast<float>(L.inner_x1())};

    const int s = spec.n_series;
    const int n = spec.n_points_per_series;
    std::vector<std::string> cat_labels;  // categorical axis labels, set by bar/box paths

    switch (spec.chart_type) {
        case ChartType::Line: {
            require(n <= line_max_points(L) && s <= line_max_series(L), "LayoutOverflow",
                    "too many line points/series for canvas");
            float step = static_cast<float>(L.inner_w()) / static_cast<float>(n - 1);
            int gap = 18;
            int band_h = (L.inner_h() - (s - 1) * gap) / s;
            for (int si = 0; si < s; ++si) {
                DataSeries ds;
                ds.name = s == 1 ? "series-1" : kSeriesNames[si];
                ds.kind = SeriesKind::Continuous;
                SeriesGeometry g;
                int band_y0 = L.inner_y0() + si * (band_h + gap);
                for (int i = 0; i < n; ++i) {
                    int px = L.inner_x0() + static_cast<int>(std::lround(i * step));
                    int py = band_y0 + ri(rng, 0, band_h);
                    g.vertices.push_back(
                        {static_cast<float>(px), static_cast<float>(py)});
                    ds.values.push_back(DataPoint::numeric(
                        ax_x.to_val(static_cast<float>(px)),
                        ax_y.to_val(static_cast<float>(py))));
                }
                for (int i = 0; i + 1 < n; ++i)
                    draw_segment(img, g.vertices[static_cast<std::size_t>(i)],
                                 g.vertices[static_cast<std::size_t>(i + 1)],
                                 spec.style.palette[static_cast<std::size_t>(si)],
                                 spec.style.line_width);
                for (const Point& v : g.vertices)
                    fill_disk(img, v, static_cast<float>(spec.style.line_width),
                              spec.style.palette[static_cast<std::size_t>(si)]);
                chart.data_series.push_back(std::move(ds));
                chart.pixel_geometry.push_back(std::move(g));
            }
            break;
        }
        case ChartType::Scatter: {
            int cols, rows;
            scatter_grid(L, cols, rows);
            require(s * n <= cols * rows, "LayoutOverflow",
                    "too many scatter points for canvas lattice");
            std::vector<int> cells(static_cast<std::size_t>(cols * rows));
            std::iota(cells.begin(), cells.end(), 0);
            std::shuffle(cells.begin(), cells.end(), rng);
            int next = 0;
            for (int si = 0; si < s; ++si) {
                DataSeries ds;
                ds.name = s == 1 ? "series-1" : kSeriesNames[si];
                ds.kind = SeriesKind::Points;
                SeriesGeometry g;
                for (int i = 0; i < n; ++i) {
                    int cell = cells[static_cast<std::size_t>(next++)];
                    int cx = L.inner_x0() + 12 + (cell % cols) * kLatticeStep + ri(rng, -3, 3);
                    int cy = L.inner_y0() + 12 + (cell / cols) * kLatticeStep + ri(rng, -3, 3);
                    g.vertices.push_back({static_cast<float>(cx), static_cast<float>(cy)});
                }
                std::sort(g.vertices.begin(), g.vertices.end(),
                          [](const Point& a, const Point& b) {
                              return a.x < b.x || (a.x == b.x && a.y < b.y);
                          });
                for (const Point& v : g.vertices) {
                    fill_disk(img, v, static_cast<float>(spec.style.marker_radius),
                              spec.style.palette[static_cast<std::size_t>(si)]);
                    ds.values.push_back(
                        DataPoint::numeric(ax_x.to_val(v.x), ax_y.to_val(v.y)));
                }
                chart.data_series.push_back(std::move(ds));
                chart.pixel_geometry.push_back(std::move(g));
            }
            break;
        }
        case ChartType::BarVertical:
        case ChartType::BarHorizontal: {
            const bool vert = spec.chart_type == ChartType::BarVertical;
            int span = vert ? L.x1 - L.x0 - 12 : L.y1 - L.y0 - 12;
            int slot = span / n;
            int bw = bar_width_for(slot, s);
            require(bw >= 16, "LayoutOverflow", "bars too narrow for canvas");
            int group_w = s * bw + (s - 1) * 6;
            int base = vert ? L.x0 + 6 : L.y0 + 6;

            for (int si = 0; si < s; ++si) {
                DataSeries ds;
                ds.name = s == 1 ? "series-1" : kSeriesNames[si];
                ds.kind = SeriesKind::Bars;
                chart.data_series.push_back(std::move(ds));
                chart.pixel_geometry.emplace_back();
            }
            for (int ci = 0; ci < n; ++ci)
                cat_labels.push_back(std::string(1, static_cast<char>('a' + ci)));

            const ValAxis& val_ax = vert ? ax_y : ax_x;
            for (int ci = 0; ci < n; ++ci) {
                int slot_c = base + ci * slot + slot / 2;
                int group_lo = slot_c - group_w / 2;
                for (int si = 0; si < s; ++si) {
                    int gidx = ci * s + si;  // global bar index, parity sets the height band
                    double frac = (gidx % 2 == 0) ? rd(rng, 0.75, 0.95) : rd(rng, 0.58, 0.68);
                    int lo = group_lo + si * (bw + 6);
                    int tip = static_cast<int>(std::lround(
                        val_ax.to_px(frac * val_ax.vmax)));
                    double value = val_ax.to_val(static_cast<float>(tip));
                    Rect r = vert ? Rect{static_cast<float>(lo), static_cast<float>(tip),
                                         static_cast<float>(lo + bw - 1),
                                         static_cast<float>(L.y1 - 1)}
                                  : Rect{static_cast<float>(L.x0 + 1), static_cast<float>(lo),
                                         static_cast<float>(tip),
                                         static_cast<float>(lo + bw - 1)};
                    fill_rect(img, r, spec.style.palette[static_cast<std::size_t>(si)]);
                    chart.pixel_geometry[static_cast<std::size_t>(si)].bar_rects.push_back(r);
                    chart.data_series[static_cast<std::size_t>(si)].values.push_back(
                        DataPoint::categorical(cat_labels[static_cast<std::size_t>(ci)], value));
                }
            }
            break;
        }
        case ChartType::BoxVertical: {
            require(L.inner_h() >= kBoxMinSpan, "LayoutOverflow",
                    "canvas too short for box whisker spacing");
            int span_x = L.x1 - L.x0 - 12;
            int slot = span_x / n;
            require(slot >= 34, "LayoutOverflow", "too many boxes for canvas");
            const Rgb col = spec.style.palette[0];
            for (int bi = 0; bi < n; ++bi) {
                std::string label(1, static_cast<char>('a' + bi));
                cat_labels.push_back(label);
                int cx = L.x0 + 6 + bi * slot + slot / 2;

                int max_span = L.inner_h();
                int span = ri(rng, kBoxMinSpan, std::min(max_span, 170));
                int top = L.inner_y0() + ri(rng, 0, max_span - span);
                double u[4];
                double usum = 0;
                for (double& v : u) {
                    v = rd(rng, 0.1, 1.0);
                    usum += v;
                }
                int leftover = span - 4 * 20;
                int ys[5];  // pixel y of max,q3,median,q1,min (top to bottom)
                ys[0] = top;
                double acc = 0;
                for (int k = 0; k < 4; ++k) {
                    acc += 20.0 + u[k] / usum * leftover;
                    ys[k + 1] = top + static_cast<int>(std::lround(acc));
                }
                ys[4] = top + span;

                // draw: stems, caps, q1-q3 box, median line
                auto P = [&](int yy) { return Point{static_cast<float>(cx), static_cast<float>(yy)}; };
                int hw = 12;
                draw_segment(img, P(ys[0]), P(ys[1]), col, 2);
                draw_segment(img, P(ys[3]), P(ys[4]), col, 2);
                draw_segment(img, {static_cast<float>(cx - 8), static_cast<float>(ys[0])},
                             {static_cast<float>(cx + 8), static_cast<float>(ys[0])}, col, 2);
                draw_segment(img, {static_cast<float>(cx - 8), static_cast<float>(ys[4])},
                             {static_cast<float>(cx + 8), static_cast<float>(ys[4])}, col, 2);
                draw_rect_outline(img,
                                  Rect{static_cast<float>(cx - hw), static_cast<float>(ys[1]),
                                       static_cast<float>(cx + hw), static_cast<float>(ys[3])},
                                  col, 2);
                draw_segment(img, {static_cast<float>(cx - hw), static_cast<float>(ys[2])},
                             {static_cast<float>(cx + hw), static_cast<float>(ys[2])}, col, 2);

                DataSeries ds;
                ds.name = label;
                ds.kind = SeriesKind::Box;
                ds.box.max = ax_y.to_val(static_cast<float>(ys[0]));
                ds.box.q3 = ax_y.to_val(static_cast<float>(ys[1]));
                ds.box.median = ax_y.to_val(static_cast<float>(ys[2]));
                ds.box.q1 = ax_y.to_val(static_cast<float>(ys[3]));
                ds.box.min = ax_y.to_val(static_cast<float>(ys[4]));
                chart.data_series.push_back(std::move(ds));
                SeriesGeometry g;
                g.whiskers = {P(ys[4]), P(ys[3]), P(ys[2]), P(ys[1]), P(ys[0])};
                chart.pixel_geometry.push_back(std::move(g));
            }
            break;
        }
    }

    // axes
    draw_segment(img, {static_cast<float>(L.x0), static_cast<float>(L.y0)},
                 {static_cast<float>(L.x0), static_cast<float>(L.y1)}, black, 1);
    draw_segment(img, {static_cast<float>(L.x0), static_cast<float>(L.y1)},
                 {static_cast<float>(L.x1), static_cast<float>(L.y1)}, black, 1);

    // ticks + labels
    auto numeric_ticks = [&](Axis axis, const ValAxis& ax) {
        int span = axis == Axis::X ? static_cast<int>(ax.p1 - ax.p0)
                                   : static_cast<int>(ax.p0 - ax.p1);
        int k = tick_count(span);
        for (int i = 0; i < k; ++i) {
            double v = ax.vmax * i / (k - 1);
            std::string label = format_value(v);
            // the mark is drawn on the pixel grid, but the annotation keeps
            // the exact position so tick maps reproduce the axis exactly
            float fp = ax.to_px(v);
            int p = static_cast<int>(std::lround(fp));
            if (axis == Axis::X) {
                draw_segment(img, {static_cast<float>(p), static_cast<float>(L.y1 + 1)},
                             {static_cast<float>(p), static_cast<float>(L.y1 + 3)}, black, 1);
                int tw = text_width(label, fs);
                Rect r = draw_text(img, p - tw / 2, L.y1 + 5, label, black, fs);
                int id = add_text_box(chart, r, label, TextRole::TickLabel);
                chart.axis_ticks.push_back({Axis::X, {fp, static_cast<float>(L.y1)}, id});
            } else {
                draw_segment(img, {static_cast<float>(L.x0 - 3), static_cast<float>(p)},
                             {static_cast<float>(L.x0 - 1), static_cast<float>(p)}, black, 1);
                int tw = text_width(label, fs);
                Rect r = draw_text(img, L.x0 - 5 - tw, p - 3, label, black, fs);
                int id = add_text_box(chart, r, label, TextRole::TickLabel);
                chart.axis_ticks.push_back({Axis::Y, {static_cast<float>(L.x0), fp}, id});
            }
        }
    };
    auto categorical_ticks = [&](Axis axis) {
        int n_cat = static_cast<int>(cat_labels.size());
        int span = axis == Axis::X ? L.x1 - L.x0 - 12 : L.y1 - L.y0 - 12;
        int slot = span / n_cat;
        int base = (axis == Axis::X ? L.x0 : L.y0) + 6;
        for (int i = 0; i < n_cat; ++i) {
            int c = base + i * slot + slot / 2;
            const std::string& label = cat_labels[static_cast<std::size_t>(i)];
            if (axis == Axis::X) {
                draw_segment(img, {static_cast<float>(c), static_cast<float>(L.y1 + 1)},
                             {static_cast<float>(c), static_cast<float>(L.y1 + 3)}, black, 1);
                int tw = text_width(label, fs);
                Rect r = draw_text(img, c - tw / 2, L.y1 + 5, label, black, fs);
                int id = add_text_box(chart, r, label, TextRole::TickLabel);
                chart.axis_ticks.push_back(
                    {Axis::X, {static_cast<float>(c), static_cast<float>(L.y1)}, id});
            } else {
                draw_segment(img, {static_cast<float>(L.x0 - 3), static_cast<float>(c)},
                             {static_cast<float>(L.x0 - 1), static_cast<float>(c)}, black, 1);
                int tw = text_width(label, fs);
                Rect r = draw_text(img, L.x0 - 5 - tw, c - 3, label, black, fs);
                int id = add_text_box(chart, r, label, TextRole::TickLabel);
                chart.axis_ticks.push_back(
                    {Axis::Y, {static_cast<float>(L.x0), static_cast<float>(c)}, id});
            }
        }
    };

    if (x_numeric)
        numeric_ticks(Axis::X, ax_x);
    else
        categorical_ticks(Axis::X);
    if (y_numeric)
        numeric_ticks(Axis::Y, ax_y);
    else
        categorical_ticks(Axis::Y);

    // legend strip along the bottom
    if (spec.style.legend_position == LegendPos::Bottom && s >= 2 &&
        spec.chart_type != ChartType::BoxVertical) {
        int total = 0;
        for (int si = 0; si < s; ++si)
            total += 13 + text_width(chart.data_series[static_cast<std::size_t>(si)].name, fs) + 12;
        require(total <= W - 12, "LayoutOverflow", "legend strip wider than canvas");
        int x = (W - total) / 2;
        int ys0 = H - 14;
        for (int si = 0; si < s; ++si) {
            const std::string& name = chart.data_series[static_cast<std::size_t>(si)].name;
            Rect patch{static_cast<float>(x), static_cast<float>(ys0 + 1),
                       static_cast<float>(x + 9), static_cast<float>(ys0 + 8)};
            fill_rect(img, patch, spec.style.palette[static_cast<std::size_t>(si)]);
            Rect r = draw_text(img, x + 13, ys0 + 1, name, black, fs);
            int id = add_text_box(chart, r, name, TextRole::LegendLabel);
            chart.legend_pairs.push_back({id, patch});
            x += 13 + text_width(name, fs) + 12;
        }
    }

    return chart;
}

}  // namespace chartex
