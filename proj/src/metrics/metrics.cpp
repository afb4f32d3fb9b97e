#include "chartex/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <thread>

#include <nlohmann/json.hpp>

#include "chartex/core/annotation.hpp"
#include "chartex/core/error.hpp"

namespace fs = std::filesystem;

namespace chartex {

int levenshtein(const std::string& a, const std::string& b) {
    const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
    std::vector<int> prev(m + 1), cur(m + 1);
    for (int j = 0; j <= m; ++j) prev[j] = j;
    for (int i = 1; i <= n; ++i) {
        cur[0] = i;
        for (int j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double normalized_edit_distance(const std::string& a, const std::string& b) {
    const auto longest = std::max(a.size(), b.size());
    if (longest == 0) return 0.0;
    return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

std::vector<int> hungarian(const MatX<double>& a) {
    const int n = static_cast<int>(a.rows());
    require(a.cols() == n, "BadCostMatrix", "assignment needs a square matrix");
    if (n == 0) return {};
    const double inf = std::numeric_limits<double>::infinity();
    // potentials formulation; p[j] = row matched to column j (1-based, 0 = free)
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

namespace {

// Pads an n x m capped-cost matrix square with unmatched cost 1 and returns
// 1 - mean assignment cost. Empty vs empty is a vacuous perfect score.
double one_minus_mean_assignment(const MatX<double>& cost) {
    const int n = static_cast<int>(cost.rows()), m = static_cast<int>(cost.cols());
    const int k = std::max(n, m);
    if (k == 0) return 1.0;
    MatX<double> padded = MatX<double>::Ones(k, k);
    if (n > 0 && m > 0) padded.topLeftCorner(n, m) = cost;
    const auto cols = hungarian(padded);
    double total = 0.0;
    for (int i = 0; i < k; ++i) total += padded(i, cols[i]);
    return 1.0 - total / static_cast<double>(k);
}

std::vector<XY> numeric_points(const DataSeries& s) {
    std::vector<XY> out;
    for (const auto& dp : s.values)
        if (dp.x_is_numeric()) out.push_back({*dp.x_num, dp.y});
    std::sort(out.begin(), out.end(), [](const XY& a, const XY& b) { return a.x < b.x; });
    return out;
}

// Piecewise-linear evaluation with constant extrapolation beyond the ends.
double eval_polyline(const std::vector<XY>& pts, double x) {
    if (pts.empty()) return 0.0;
    if (x <= pts.front().x) return pts.front().y;
    if (x >= pts.back().x) return pts.back().y;
    auto it = std::upper_bound(pts.begin(), pts.end(), x,
                               [](double v, const XY& p) { return v < p.x; });
    const XY& b = *it;
    const XY& a = *(it - 1);
    const double dx = b.x - a.x;
    if (dx <= 0.0) return a.y;
    const double t = (x - a.x) / dx;
    return a.y + t * (b.y - a.y);
}

}  // namespace

double score_continuous(const DataSeries& pred, const DataSeries& gt) {
    const auto g = numeric_points(gt);
    const auto p = numeric_points(pred);
    if (g.empty()) return p.empty() ? 1.0 : 0.0;
    if (p.empty()) return 0.0;

    double ymin = g.front().y, ymax = g.front().y;
    for (const auto& pt : g) {
        ymin = std::min(ymin, pt.y);
        ymax = std::max(ymax, pt.y);
    }
    double range = ymax - ymin;
    if (range <= 0.0) range = std::max(1.0, std::abs(g.front().y));

    const double x0 = g.front().x, x1 = g.back().x;
    auto dev = [&](double x) { return eval_polyline(p, x) - eval_polyline(g, x); };
    if (x1 <= x0) return 1.0 - std::min(1.0, std::abs(dev(x0)) / range);

    // Breakpoints of both interpolants; between consecutive ones the deviation
    // is linear, so the capped integral only needs extra splits at d = 0, +-R.
    std::vector<double> xs{x0, x1};
    for (const auto& pt : g)
        if (pt.x > x0 && pt.x < x1) xs.push_back(pt.x);
    for (const auto& pt : p)
        if (pt.x > x0 && pt.x < x1) xs.push_back(pt.x);
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

    double total = 0.0;
    for (size_t i = 0; i + 1 < xs.size(); ++i) {
        const double a = xs[i], b = xs[i + 1];
        if (b <= a) continue;
        const double da = dev(a), db = dev(b);
        std::vector<double> ts{0.0, 1.0};
        auto add_root = [&](double target) {
            if (db == da) return;
            const double t = (target - da) / (db - da);
            if (t > 1e-12 && t < 1.0 - 1e-12) ts.push_back(t);
        };
        add_root(0.0);
        add_root(range);
        add_root(-range);
        std::sort(ts.begin(), ts.end());
        auto f = [&](double t) {
            return std::min(1.0, std::abs(da + t * (db - da)) / range);
        };
        for (size_t j = 0; j + 1 < ts.size(); ++j)
            total += 0.5 * (f(ts[j]) + f(ts[j + 1])) * (b - a) * (ts[j + 1] - ts[j]);
    }
    return 1.0 - total / (x1 - x0);
}

double score_scatter(const std::vector<XY>& pred, const std::vector<XY>& gt) {
    const int n = static_cast<int>(pred.size()), m = static_cast<int>(gt.size());
    if (n == 0 && m == 0) return 1.0;
    if (m == 0 || n == 0) return one_minus_mean_assignment(MatX<double>::Ones(n, m));

    double mx = 0.0, my = 0.0;
    for (const auto& g : gt) {
        mx += g.x;
        my += g.y;
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& g : gt) {
        sxx += (g.x - mx) * (g.x - mx);
        sxy += (g.x - mx) * (g.y - my);
        syy += (g.y - my) * (g.y - my);
    }
    if (m > 1) {
        sxx /= m - 1;
        sxy /= m - 1;
        syy /= m - 1;
    }
    const double trace = sxx + syy;
    if (trace <= 0.0) {
        sxx = syy = 1.0;
        sxy = 0.0;
    } else {
        sxx += 1e-6 * trace;
        syy += 1e-6 * trace;
    }
    const double det = sxx * syy - sxy * sxy;
    double ixx = 1.0, ixy = 0.0, iyy = 1.0;
    if (det > 0.0) {
        ixx = syy / det;
        ixy = -sxy / det;
        iyy = sxx / det;
    }

    MatX<double> cost(n, m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            const double dx = pred[i].x - gt[j].x, dy = pred[i].y - gt[j].y;
            const double q = dx * (ixx * dx + ixy * dy) + dy * (ixy * dx + iyy * dy);
            cost(i, j) = std::min(1.0, std::sqrt(std::max(0.0, q)));
        }
    }
    return one_minus_mean_assignment(cost);
}

double score_discrete(const std::vector<std::pair<std::string, double>>& pred,
                      const std::vector<std::pair<std::string, double>>& gt, MatchMode mode) {
    const int n = static_cast<int>(pred.size()), m = static_cast<int>(gt.size());
    if (n == 0 && m == 0) return 1.0;
    if (m == 0 || n == 0) return one_minus_mean_assignment(MatX<double>::Ones(n, m));

    double vmin = gt.front().second, vmax = gt.front().second;
    for (const auto& g : gt) {
        vmin = std::min(vmin, g.second);
        vmax = std::max(vmax, g.second);
    }
    const double range = vmax - vmin;

    MatX<double> cost(n, m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            const double denom = range > 0.0 ? range : std::max(1.0, std::abs(gt[j].second));
            const double vd = std::min(1.0, std::abs(pred[i].second - gt[j].second) / denom);
            double ld;
            if (mode == MatchMode::Exact)
                ld = pred[i].first == gt[j].first ? 0.0 : 1.0;
            else
                ld = normalized_edit_distance(pred[i].first, gt[j].first);
            cost(i, j) = std::min(1.0, ld + vd);
        }
    }
    return one_minus_mean_assignment(cost);
}

double score_box(const std::vector<std::pair<std::string, BoxStats>>& pred,
                 const std::vector<std::pair<std::string, BoxStats>>& gt) {
    const int n = static_cast<int>(pred.size()), m = static_cast<int>(gt.size());
    if (n == 0 && m == 0) return 1.0;
    if (m == 0 || n == 0) return one_minus_mean_assignment(MatX<double>::Ones(n, m));

    // per-stat range across the gt boxes
    std::array<double, 5> lo{}, hi{};
    for (int j = 0; j < m; ++j) {
        const auto vals = gt[j].second.values();
        for (int s = 0; s < 5; ++s) {
            if (j == 0 || vals[s] < lo[s]) lo[s] = vals[s];
            if (j == 0 || vals[s] > hi[s]) hi[s] = vals[s];
        }
    }

    MatX<double> cost(n, m);
    for (int i = 0; i < n; ++i) {
        const auto pv = pred[i].second.values();
        for (int j = 0; j < m; ++j) {
            if (pred[i].first != gt[j].first) {
                cost(i, j) = 1.0;
                continue;
            }
            const auto gv = gt[j].second.values();
            double d = 0.0;
            for (int s = 0; s < 5; ++s) {
                const double r = hi[s] - lo[s];
                const double denom = r > 0.0 ? r : std::max(1.0, std::abs(gv[s]));
                d += std::min(1.0, std::abs(pv[s] - gv[s]) / denom);
            }
            cost(i, j) = d / 5.0;
        }
    }
    return one_minus_mean_assignment(cost);
}

namespace {

double point_cost(const Point& a, const Point& b, double radius) {
    const double d = std::hypot(a.x - b.x, a.y - b.y);
    return std::min(1.0, d / radius);
}

std::vector<XY> polyline_xy(const std::vector<Point>& pts) {
    std::vector<XY> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back({p.x, p.y});
    std::sort(out.begin(), out.end(), [](const XY& a, const XY& b) { return a.x < b.x; });
    return out;
}

double line_pair_cost(const std::vector<Point>& pred, const std::vector<Point>& gt,
                      double plot_h) {
    const auto g = polyline_xy(gt);
    const auto p = polyline_xy(pred);
    if (g.empty()) return p.empty() ? 0.0 : 1.0;
    if (p.empty()) return 1.0;
    const double x0 = g.front().x, x1 = g.back().x;
    constexpr int kSamples = 50;
    double sum = 0.0;
    for (int i = 0; i < kSamples; ++i) {
        const double x = kSamples == 1 ? x0 : x0 + (x1 - x0) * i / (kSamples - 1);
        sum += std::abs(eval_polyline(p, x) - eval_polyline(g, x));
    }
    if (plot_h <= 0.0) plot_h = 1.0;
    return std::min(1.0, sum / kSamples / plot_h);
}

std::vector<Point> pooled_vertices(const std::vector<SeriesGeometry>& gs) {
    std::vector<Point> out;
    for (const auto& g : gs) out.insert(out.end(), g.vertices.begin(), g.vertices.end());
    return out;
}

std::vector<Point> pooled_whiskers(const std::vector<SeriesGeometry>& gs) {
    std::vector<Point> out;
    for (const auto& g : gs) out.insert(out.end(), g.whiskers.begin(), g.whiskers.end());
    return out;
}

std::vector<Rect> pooled_bars(const std::vector<SeriesGeometry>& gs) {
    std::vector<Rect> out;
    for (const auto& g : gs) out.insert(out.end(), g.bar_rects.begin(), g.bar_rects.end());
    return out;
}

}  // namespace

double score_6a(const std::vector<SeriesGeometry>& pred, const std::vector<SeriesGeometry>& gt,
                ChartType type, const Rect& plot_bbox) {
    const double diag = std::hypot(plot_bbox.width(), plot_bbox.height());
    const double radius = std::max(1e-9, 0.02 * diag);

    if (type == ChartType::Line) {
        const int n = static_cast<int>(pred.size()), m = static_cast<int>(gt.size());
        MatX<double> cost(n, m);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j)
                cost(i, j) = line_pair_cost(pred[i].vertices, gt[j].vertices,
                                            plot_bbox.height());
        return one_minus_mean_assignment(cost);
    }
    if (type == ChartType::Scatter) {
        const auto p = pooled_vertices(pred);
        const auto g = pooled_vertices(gt);
        MatX<double> cost(p.size(), g.size());
        for (size_t i = 0; i < p.size(); ++i)
            for (size_t j = 0; j < g.size(); ++j)
                cost(i, j) = point_cost(p[i], g[j], radius);
        return one_minus_mean_assignment(cost);
    }
    if (type == ChartType::BarHorizontal || type == ChartType::BarVertical) {
        const auto p = pooled_bars(pred);
        const auto g = pooled_bars(gt);
        MatX<double> cost(p.size(), g.size());
        for (size_t i = 0; i < p.size(); ++i) {
            for (size_t j = 0; j < g.size(); ++j) {
                const double tl = point_cost({p[i].x0, p[i].y0}, {g[j].x0, g[j].y0}, radius);
                const double br = point_cost({p[i].x1, p[i].y1}, {g[j].x1, g[j].y1}, radius);
                cost(i, j) = 0.5 * (tl + br);
            }
        }
        return one_minus_mean_assignment(cost);
    }
    // box: whisker points are the atomic elements
    const auto p = pooled_whiskers(pred);
    const auto g = pooled_whiskers(gt);
    MatX<double> cost(p.size(), g.size());
    for (size_t i = 0; i < p.size(); ++i)
        for (size_t j = 0; j < g.size(); ++j)
            cost(i, j) = point_cost(p[i], g[j], radius);
    return one_minus_mean_assignment(cost);
}

double score_6b_name(const std::vector<std::string>& pred, const std::vector<std::string>& gt) {
    MatX<double> cost(pred.size(), gt.size());
    for (size_t i = 0; i < pred.size(); ++i)
        for (size_t j = 0; j < gt.size(); ++j)
            cost(i, j) = normalized_edit_distance(pred[i], gt[j]);
    return one_minus_mean_assignment(cost);
}

double score_6b_data(const AnnotatedChart& pred, const AnnotatedChart& gt) {
    const auto& ps = pred.data_series;
    const auto& gs = gt.data_series;
    switch (gt.chart_type) {
        case ChartType::Line: {
            MatX<double> cost(ps.size(), gs.size());
            for (size_t i = 0; i < ps.size(); ++i)
                for (size_t j = 0; j < gs.size(); ++j)
                    cost(i, j) = 1.0 - score_continuous(ps[i], gs[j]);
            return one_minus_mean_assignment(cost);
        }
        case ChartType::Scatter: {
            std::vector<XY> p, g;
            for (const auto& s : ps) {
                const auto pts = numeric_points(s);
                p.insert(p.end(), pts.begin(), pts.end());
            }
            for (const auto& s : gs) {
                const auto pts = numeric_points(s);
                g.insert(g.end(), pts.begin(), pts.end());
            }
            return score_scatter(p, g);
        }
        case ChartType::BarHorizontal:
        case ChartType::BarVertical: {
            auto pairs = [](const DataSeries& s) {
                std::vector<std::pair<std::string, double>> out;
                for (const auto& dp : s.values) out.emplace_back(dp.x_str, dp.y);
                return out;
            };
            MatX<double> cost(ps.size(), gs.size());
            for (size_t i = 0; i < ps.size(); ++i)
                for (size_t j = 0; j < gs.size(); ++j)
                    cost(i, j) = 1.0 - score_discrete(pairs(ps[i]), pairs(gs[j]),
                                                      MatchMode::Exact);
            return one_minus_mean_assignment(cost);
        }
        case ChartType::BoxVertical: {
            auto boxes = [](const std::vector<DataSeries>& ss) {
                std::vector<std::pair<std::string, BoxStats>> out;
                for (const auto& s : ss)
                    if (s.kind == SeriesKind::Box) out.emplace_back(s.name, s.box);
                return out;
            };
            return score_box(boxes(ps), boxes(gs));
        }
    }
    return 0.0;
}

namespace {

std::vector<std::string> series_names(const AnnotatedChart& c) {
    std::vector<std::string> out;
    out.reserve(c.data_series.size());
    for (const auto& s : c.data_series) out.push_back(s.name);
    return out;
}

void append_row(std::string& out, const std::string& label, const ScoreAggregate& agg) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-16s %5d  %8.4f  %8.4f  %8.4f\n", label.c_str(),
                  agg.count, agg.s6a, agg.s6b_data, agg.s6b_name);
    out += buf;
}

}  // namespace

std::string EvalReport::table() const {
    std::string out = "type                 n        6a   6b-data   6b-name\n";
    for (const auto& [type, agg] : per_type) append_row(out, chart_type_name(type), agg);
    append_row(out, "overall", overall);
    return out;
}

EvalReport evaluate(const std::string& pred_dir, const std::string& gt_dir, int jobs) {
    require(fs::is_directory(gt_dir), "MissingDirectory", gt_dir);
    require(fs::is_directory(pred_dir), "MissingDirectory", pred_dir);
    require(jobs >= 1, "BadConfig", "evaluate: jobs must be >= 1");

    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(gt_dir))
        if (e.path().extension() == ".json") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());

    EvalReport report;
    report.per_chart.resize(ids.size());
    const auto score_one = [&](std::size_t i) {
        const std::string& id = ids[i];
        const auto gt = load_annotation((fs::path(gt_dir) / (id + ".json")).string(),
                                        /*load_image=*/false);
        ChartScores row;
        row.id = id;
        row.type = gt.chart_type;
        row.scorable_6b = gt.scorable_6b();

        const fs::path ppath = fs::path(pred_dir) / (id + ".json");
        if (!fs::exists(ppath)) {
            row.missing_pred = true;  // scored zero across the board
        } else {
            const auto pred = load_annotation(ppath.string(), /*load_image=*/false);
            row.s6a = score_6a(pred.pixel_geometry, gt.pixel_geometry, gt.chart_type,
                               gt.plot_bbox);
            if (row.scorable_6b) {
                row.s6b_data = score_6b_data(pred, gt);
                row.s6b_name = score_6b_name(series_names(pred), series_names(gt));
            }
        }
        report.per_chart[i] = std::move(row);
    };
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(ids.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < ids.size(); ++i) score_one(i);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = static_cast<std::size_t>(w); i < ids.size();
                         i += static_cast<std::size_t>(workers))
                        score_one(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    struct Accum {
        int n = 0, n6b = 0;
        double a = 0, d = 0, nm = 0;
    };
    std::map<ChartType, Accum> acc;
    Accum all;
    for (const ChartScores& row : report.per_chart) {
        auto& t = acc[row.type];
        t.n++;
        all.n++;
        t.a += row.s6a;
        all.a += row.s6a;
        if (row.scorable_6b) {
            t.n6b++;
            all.n6b++;
            t.d += row.s6b_data;
            all.d += row.s6b_data;
            t.nm += row.s6b_name;
            all.nm += row.s6b_name;
        }
    }

    auto finalize = [](const Accum& a) {
        ScoreAggregate s;
        s.count = a.n;
        s.s6a = a.n ? a.a / a.n : 0.0;
        s.s6b_data = a.n6b ? a.d / a.n6b : 0.0;
        s.s6b_name = a.n6b ? a.nm / a.n6b : 0.0;
        return s;
    };
    for (const auto& [type, a] : acc) report.per_type[type] = finalize(a);
    report.overall = finalize(all);
    return report;
}

void export_challenge_json(const AnnotatedChart& pred, const std::string& path) {
    using json = nlohmann::ordered_json;
    static const std::map<ChartType, std::string> kOfficialName = {
        {ChartType::Line, "line"},
        {ChartType::Scatter, "scatter"},
        {ChartType::BarVertical, "vertical bar"},
        {ChartType::BarHorizontal, "horizontal bar"},
        {ChartType::BoxVertical, "boxplot"},
    };

    json series = json::array();
    for (const auto& s : pred.data_series) {
        json data = json::array();
        if (s.kind == SeriesKind::Box) {
            data.push_back({{"min", s.box.min},
                            {"first_quartile", s.box.q1},
                            {"median", s.box.median},
                            {"third_quartile", s.box.q3},
                            {"max", s.box.max}});
        } else {
            for (const auto& dp : s.values) {
                json pt;
                if (dp.x_is_numeric())
                    pt["x"] = *dp.x_num;
                else
                    pt["x"] = dp.x_str;
                pt["y"] = dp.y;
                data.push_back(pt);
            }
        }
        series.push_back({{"name", s.name}, {"data", data}});
    }

    json visual;
    json lines = json::array(), points = json::array(), bars = json::array(),
         boxplots = json::array();
    for (const auto& g : pred.pixel_geometry) {
        if (!g.vertices.empty()) {
            json poly = json::array();
            for (const auto& v : g.vertices) poly.push_back({{"x", v.x}, {"y", v.y}});
            if (pred.chart_type == ChartType::Scatter)
                for (auto& p : poly) points.push_back(p);
            else
                lines.push_back(poly);
        }
        for (const auto& r : g.bar_rects)
            bars.push_back({{"x0", r.x0}, {"y0", r.y0}, {"width", r.width()},
                            {"height", r.height()}});
        if (!g.whiskers.empty()) {
            json bp;
            static const char* kStat[5] = {"min", "first_quartile", "median",
                                           "third_quartile", "max"};
            for (size_t i = 0; i < g.whiskers.size() && i < 5; ++i)
                bp[kStat[i]] = {{"x", g.whiskers[i].x}, {"y", g.whiskers[i].y}};
            boxplots.push_back(bp);
        }
    }
    visual["lines"] = lines;
    visual["scatter points"] = points;
    visual["bars"] = bars;
    visual["boxplots"] = boxplots;

    json root;
    root["task6"] = {{"name", fs::path(path).stem().string()},
                     {"output", {{"chart_type", kOfficialName.at(pred.chart_type)},
                                 {"data series", series},
                                 {"visual elements", visual}}}};
    std::ofstream out(path);
    require(static_cast<bool>(out), "WriteFailed", path);
    out << root.dump(2) << "\n";
}

}  // namespace chartex
