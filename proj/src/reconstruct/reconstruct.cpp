#include "chartex/reconstruct/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>

namespace chartex {
namespace {

struct Dsu {
    std::vector<int> parent;

    explicit Dsu(int n) : parent(static_cast<std::size_t>(n)) {
        for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
    }
    int find(int a) {
        while (parent[static_cast<std::size_t>(a)] != a) {
            parent[static_cast<std::size_t>(a)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
            a = parent[static_cast<std::size_t>(a)];
        }
        return a;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    }
};

}  // namespace

std::vector<std::vector<int>> cluster_keypoints(const MatX<double>& emb,
                                                const ClusterParams& p) {
    require(p.valid(), "BadConfig", "cluster_keypoints: bad params");
    const int k = static_cast<int>(emb.rows());
    if (k == 0) return {};

    VecXd norms(k);
    for (int i = 0; i < k; ++i) norms(i) = emb.row(i).norm();

    Dsu dsu(k);
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) {
            bool edge = false;
            if (p.metric == ClusterMetric::Cosine) {
                const double nn = norms(i) * norms(j);
                const double cosine = nn > 1e-12 ? emb.row(i).dot(emb.row(j)) / nn : 0.0;
                edge = cosine >= p.cosine_threshold;
            } else {
                edge = (emb.row(i) - emb.row(j)).norm() <= p.euclidean_threshold;
            }
            if (edge) dsu.unite(i, j);
        }

    std::vector<std::vector<int>> clusters;
    std::vector<int> slot(static_cast<std::size_t>(k), -1);
    for (int i = 0; i < k; ++i) {
        const int root = dsu.find(i);
        if (slot[static_cast<std::size_t>(root)] < 0) {
            slot[static_cast<std::size_t>(root)] = static_cast<int>(clusters.size());
            clusters.emplace_back();
        }
        clusters[static_cast<std::size_t>(slot[static_cast<std::size_t>(root)])].push_back(i);
    }
    return clusters;
}

namespace {

double fg_confidence(const HeatmapSet& hm, const CandidatePoint& c) {
    const GridD& g = hm.fg_class().grid;
    if (g.size() == 0) return c.confidence;
    const Eigen::Index y = std::clamp<Eigen::Index>(c.cell_y, 0, g.rows() - 1);
    const Eigen::Index x = std::clamp<Eigen::Index>(c.cell_x, 0, g.cols() - 1);
    return g(y, x);
}

// indices sorted by confidence descending, candidate index ascending on ties
std::vector<int> by_confidence(const std::vector<int>& members,
                               const std::vector<double>& conf) {
    std::vector<int> order = members;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double ca = conf[static_cast<std::size_t>(a)];
        const double cb = conf[static_cast<std::size_t>(b)];
        if (ca != cb) return ca > cb;
        return a < b;
    });
    return order;
}

}  // namespace

ReconstructResult reconstruct_components(const std::vector<std::vector<int>>& clusters,
                                         const HeatmapSet& hm, ChartType chart_type,
                                         const std::vector<CandidatePoint>& cands,
                                         double scatter_keep_factor) {
    const double stride = hm.stride > 0 ? hm.stride : 1;
    std::vector<double> conf(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) conf[i] = fg_confidence(hm, cands[i]);
    auto pixel = [&](int i) {
        const CandidatePoint& c = cands[static_cast<std::size_t>(i)];
        return Point{static_cast<float>(c.x * stride), static_cast<float>(c.y * stride)};
    };

    ReconstructResult out;
    for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
        const std::vector<int>& members = clusters[ci];
        if (members.empty()) continue;
        const int cid = static_cast<int>(ci);

        switch (chart_type) {
            case ChartType::Line: {
                // one vertex per rounded pixel x, best confidence wins
                std::map<long, int> best_at_x;
                for (int m : members) {
                    const long qx = std::lround(pixel(m).x);
                    auto it = best_at_x.find(qx);
                    if (it == best_at_x.end() ||
                        conf[static_cast<std::size_t>(m)] > conf[static_cast<std::size_t>(it->second)])
                        best_at_x[qx] = m;
                }
                ChartComponent comp{chart_type, {}, {}, cid, ""};
                for (const auto& [qx, m] : best_at_x) {
                    comp.points.push_back(pixel(m));
                    comp.cand_indices.push_back(m);
                }
                out.components.push_back(std::move(comp));
                break;
            }
            case ChartType::BarVertical:
            case ChartType::BarHorizontal: {
                if (members.size() < 2) {
                    out.diagnostics.push_back("cluster " + std::to_string(cid) +
                                              ": bar needs 2 candidates, got " +
                                              std::to_string(members.size()));
                    break;
                }
                const std::vector<int> order = by_confidence(members, conf);
                const int first = order[0];
                // second corner: among confidence ties prefer the farthest
                // candidate, so plateaued heatmaps pick a true corner over
                // the bar's center keypoint
                int second = order[1];
                double best_d = distance(pixel(first), pixel(second));
                for (std::size_t r = 2; r < order.size(); ++r) {
                    const int cnd = order[r];
                    if (conf[static_cast<std::size_t>(order[1])] -
                            conf[static_cast<std::size_t>(cnd)] >
                        1e-9)
                        break;
                    const double d = distance(pixel(first), pixel(cnd));
                    if (d > best_d + 1e-9) {
                        best_d = d;
                        second = cnd;
                    }
                }
                const Point a = pixel(first), b = pixel(second);
                ChartComponent comp{chart_type,
                                    {Point{std::min(a.x, b.x), std::min(a.y, b.y)},
                                     Point{std::max(a.x, b.x), std::max(a.y, b.y)}},
                                    {first, second},
                                    cid,
                                    ""};
                out.components.push_back(std::move(comp));
                break;
            }
            case ChartType::BoxVertical: {
                if (members.size() < 5) {
                    out.diagnostics.push_back("cluster " + std::to_string(cid) +
                                              ": box needs 5 candidates, got " +
                                              std::to_string(members.size()));
                    break;
                }
                std::vector<int> order = by_confidence(members, conf);
                order.resize(5);
                std::sort(order.begin(), order.end(), [&](int a, int b) {
                    const Point pa = pixel(a), pb = pixel(b);
                    if (pa.y != pb.y) return pa.y < pb.y;
                    if (pa.x != pb.x) return pa.x < pb.x;
                    return a < b;
                });
                ChartComponent comp{chart_type, {}, order, cid, ""};
                for (int m : order) comp.points.push_back(pixel(m));
                out.components.push_back(std::move(comp));
                break;
            }
            case ChartType::Scatter: {
                double cluster_max = 0;
                for (int m : members)
                    cluster_max = std::max(cluster_max, conf[static_cast<std::size_t>(m)]);
                for (int m : members) {
                    if (conf[static_cast<std::size_t>(m)] <
                        scatter_keep_factor * cluster_max - 1e-12)
                        continue;
                    out.components.push_back(ChartComponent{
                        chart_type, {pixel(m)}, {m}, cid, ""});
                }
                break;
            }
        }
    }
    return out;
}

// ---- pixel -> value maps ----

TickMap TickMap::fit(std::vector<std::pair<double, double>> anchors) {
    std::sort(anchors.begin(), anchors.end());
    anchors.erase(std::unique(anchors.begin(), anchors.end(),
                              [](const auto& a, const auto& b) { return a.first == b.first; }),
                  anchors.end());
    require(anchors.size() >= 2, "InsufficientTicks",
            "tick map needs two ticks with distinct pixels, got " +
                std::to_string(anchors.size()));

    // least-squares residual of predicting pixel from f(value)
    auto residual = [&](auto f) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(anchors.size());
        for (const auto& [px, v] : anchors) {
            const double x = f(v);
            sx += x;
            sy += px;
            sxx += x * x;
            sxy += x * px;
        }
        const double det = n * sxx - sx * sx;
        if (std::abs(det) < 1e-12) return std::numeric_limits<double>::infinity();
        const double a = (n * sxy - sx * sy) / det;
        const double b = (sy - a * sx) / n;
        double ss = 0;
        for (const auto& [px, v] : anchors) {
            const double r = px - (a * f(v) + b);
            ss += r * r;
        }
        return ss;
    };

    TickMap map;
    const bool positive = std::all_of(anchors.begin(), anchors.end(),
                                      [](const auto& a) { return a.second > 0; });
    if (positive &&
        residual([](double v) { return std::log(v); }) + 1e-9 <
            residual([](double v) { return v; })) {
        map.log_scale_ = true;
        for (auto& [px, v] : anchors) v = std::log(v);
    }
    map.anchors_ = std::move(anchors);
    return map;
}

double TickMap::value_at(double px) const {
    // segment whose span covers px; end segments extend outward
    std::size_t i = 0;
    while (i + 2 < anchors_.size() && px > anchors_[i + 1].first) ++i;
    const auto& [p0, v0] = anchors_[i];
    const auto& [p1, v1] = anchors_[i + 1];
    const double t = (px - p0) / (p1 - p0);
    const double v = v0 + t * (v1 - v0);
    return log_scale_ ? std::exp(v) : v;
}

namespace {

double tick_px(const AxisTick& t, Axis axis) {
    return axis == Axis::X ? t.pixel.x : t.pixel.y;
}

const std::string& tick_text(const AxisTick& t, const std::vector<TextBox>& text_boxes) {
    require(t.text_id >= 0 && t.text_id < static_cast<int>(text_boxes.size()),
            "DanglingReference", "axis tick references text box " + std::to_string(t.text_id));
    return text_boxes[static_cast<std::size_t>(t.text_id)].text;
}

TickMap numeric_map(const std::vector<AxisTick>& ticks, Axis axis,
                    const std::vector<TextBox>& text_boxes) {
    std::vector<std::pair<double, double>> anchors;
    for (const AxisTick& t : ticks) {
        if (t.axis != axis) continue;
        const std::string& label = tick_text(t, text_boxes);
        const char* s = label.c_str();
        char* end = nullptr;
        const double v = std::strtod(s, &end);
        while (end && *end == ' ') ++end;
        require(end != s && end && *end == '\0', "NonNumericTick",
                "tick label '" + label + "' is not numeric");
        anchors.emplace_back(tick_px(t, axis), v);
    }
    return TickMap::fit(std::move(anchors));
}

}  // namespace

std::string nearest_tick_label(const std::vector<AxisTick>& ticks, Axis axis, double px,
                               const std::vector<TextBox>& text_boxes) {
    const AxisTick* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const AxisTick& t : ticks) {
        if (t.axis != axis) continue;
        const double d = std::abs(tick_px(t, axis) - px);
        const bool better =
            !best || d < best_d ||
            (d == best_d && (tick_px(t, axis) < tick_px(*best, axis) ||
                             (tick_px(t, axis) == tick_px(*best, axis) &&
                              t.text_id < best->text_id)));
        if (better) {
            best = &t;
            best_d = d;
        }
    }
    require(best != nullptr, "InsufficientTicks",
            std::string("no ticks on the ") + (axis == Axis::X ? "x" : "y") + " axis");
    return tick_text(*best, text_boxes);
}

namespace {

struct SeriesGroup {
    std::string name;
    std::vector<int> comps;  // indices into components
};

double bar_center(const ChartComponent& c, bool vertical) {
    return vertical ? (c.points[0].x + c.points[1].x) * 0.5
                    : (c.points[0].y + c.points[1].y) * 0.5;
}

// bars: one group per name, first-appearance order, members by position;
// scatter: one group per cluster; line/box: one group per component
std::vector<SeriesGroup> group_series(const std::vector<ChartComponent>& comps,
                                      ChartType chart_type) {
    std::vector<SeriesGroup> groups;
    switch (chart_type) {
        case ChartType::BarVertical:
        case ChartType::BarHorizontal: {
            const bool vertical = chart_type == ChartType::BarVertical;
            std::map<std::string, std::size_t> by_name;
            for (int i = 0; i < static_cast<int>(comps.size()); ++i) {
                const std::string& name = comps[static_cast<std::size_t>(i)].name;
                auto it = by_name.find(name);
                if (it == by_name.end()) {
                    it = by_name.emplace(name, groups.size()).first;
                    groups.push_back({name, {}});
                }
                groups[it->second].comps.push_back(i);
            }
            for (SeriesGroup& g : groups)
                std::sort(g.comps.begin(), g.comps.end(), [&](int a, int b) {
                    const double ca = bar_center(comps[static_cast<std::size_t>(a)], vertical);
                    const double cb = bar_center(comps[static_cast<std::size_t>(b)], vertical);
                    if (ca != cb) return ca < cb;
                    return a < b;
                });
            break;
        }
        case ChartType::Scatter: {
            std::map<int, std::size_t> by_cluster;
            for (int i = 0; i < static_cast<int>(comps.size()); ++i) {
                const ChartComponent& c = comps[static_cast<std::size_t>(i)];
                auto it = by_cluster.find(c.cluster_id);
                if (it == by_cluster.end()) {
                    it = by_cluster.emplace(c.cluster_id, groups.size()).first;
                    groups.push_back({c.name, {}});
                }
                groups[it->second].comps.push_back(i);
            }
            break;
        }
        default: {
            for (int i = 0; i < static_cast<int>(comps.size()); ++i)
                groups.push_back({comps[static_cast<std::size_t>(i)].name, {i}});
            break;
        }
    }
    return groups;
}

struct SeriesBundle {
    std::vector<DataSeries> data;
    std::vector<SeriesGeometry> geometry;
};

SeriesBundle build_series(const std::vector<ChartComponent>& components,
                          const std::vector<AxisTick>& ticks,
                          const std::vector<TextBox>& text_boxes, ChartType chart_type) {
    const std::vector<SeriesGroup> groups = group_series(components, chart_type);
    SeriesBundle out;

    switch (chart_type) {
        case ChartType::Line:
        case ChartType::Scatter: {
            const TickMap xmap = numeric_map(ticks, Axis::X, text_boxes);
            const TickMap ymap = numeric_map(ticks, Axis::Y, text_boxes);
            for (const SeriesGroup& g : groups) {
                DataSeries ds;
                ds.name = g.name;
                ds.kind = chart_type == ChartType::Line ? SeriesKind::Continuous
                                                        : SeriesKind::Points;
                SeriesGeometry geom;
                for (int ci : g.comps)
                    for (const Point& p : components[static_cast<std::size_t>(ci)].points) {
                        ds.values.push_back(
                            DataPoint::numeric(xmap.value_at(p.x), ymap.value_at(p.y)));
                        geom.vertices.push_back(p);
                    }
                out.data.push_back(std::move(ds));
                out.geometry.push_back(std::move(geom));
            }
            break;
        }
        case ChartType::BarVertical:
        case ChartType::BarHorizontal: {
            const bool vertical = chart_type == ChartType::BarVertical;
            const TickMap vmap =
                numeric_map(ticks, vertical ? Axis::Y : Axis::X, text_boxes);
            const Axis cat_axis = vertical ? Axis::X : Axis::Y;
            for (const SeriesGroup& g : groups) {
                DataSeries ds;
                ds.name = g.name;
                ds.kind = SeriesKind::Bars;
                SeriesGeometry geom;
                for (int ci : g.comps) {
                    const ChartComponent& c = components[static_cast<std::size_t>(ci)];
                    const std::string label = nearest_tick_label(
                        ticks, cat_axis, bar_center(c, vertical), text_boxes);
                    // value at the far edge: top for vertical, right for horizontal
                    const double value = vertical ? vmap.value_at(c.points[0].y)
                                                  : vmap.value_at(c.points[1].x);
                    ds.values.push_back(DataPoint::categorical(label, value));
                    geom.bar_rects.push_back(Rect{c.points[0].x, c.points[0].y,
                                                  c.points[1].x, c.points[1].y});
                }
                out.data.push_back(std::move(ds));
                out.geometry.push_back(std::move(geom));
            }
            break;
        }
        case ChartType::BoxVertical: {
            const TickMap ymap = numeric_map(ticks, Axis::Y, text_boxes);
            for (const SeriesGroup& g : groups) {
                const ChartComponent& c = components[static_cast<std::size_t>(g.comps[0])];
                double mean_x = 0;
                std::array<double, 5> vals{};
                for (int k = 0; k < 5; ++k) {
                    mean_x += c.points[static_cast<std::size_t>(k)].x / 5.0;
                    vals[static_cast<std::size_t>(k)] =
                        ymap.value_at(c.points[static_cast<std::size_t>(k)].y);
                }
                std::sort(vals.begin(), vals.end());
                DataSeries ds;
                // boxes are named by their category tick, matching the axis oracle
                ds.name = nearest_tick_label(ticks, Axis::X, mean_x, text_boxes);
                ds.kind = SeriesKind::Box;
                ds.box = BoxStats{vals[0], vals[1], vals[2], vals[3], vals[4]};
                SeriesGeometry geom;
                geom.whiskers = {c.points[4], c.points[3], c.points[2], c.points[1],
                                 c.points[0]};
                out.data.push_back(std::move(ds));
                out.geometry.push_back(std::move(geom));
            }
            break;
        }
    }
    return out;
}

}  // namespace

std::vector<DataSeries> pixels_to_data(const std::vector<ChartComponent>& components,
                                       const std::vector<AxisTick>& axis_ticks,
                                       const std::vector<TextBox>& text_boxes,
                                       ChartType chart_type) {
    return build_series(components, axis_ticks, text_boxes, chart_type).data;
}

std::vector<int> match_embeddings(const MatX<double>& cluster_emb,
                                  const MatX<double>& patch_emb) {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(cluster_emb.rows()));
    for (Eigen::Index i = 0; i < cluster_emb.rows(); ++i) {
        const double ni = cluster_emb.row(i).norm();
        int best = 0;
        double best_cos = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < patch_emb.rows(); ++j) {
            const double nn = ni * patch_emb.row(j).norm();
            const double c =
                nn > 1e-12 ? cluster_emb.row(i).dot(patch_emb.row(j)) / nn : 0.0;
            if (c > best_cos) {
                best_cos = c;
                best = static_cast<int>(j);
            }
        }
        out.push_back(best);
    }
    return out;
}

std::vector<int> match_colors(const std::vector<std::array<double, 3>>& cluster_rgb,
                              const std::vector<std::array<double, 3>>& patch_rgb) {
    std::vector<int> out;
    out.reserve(cluster_rgb.size());
    for (const auto& c : cluster_rgb) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < patch_rgb.size(); ++j) {
            double d = 0;
            for (int k = 0; k < 3; ++k) {
                const double diff = c[static_cast<std::size_t>(k)] -
                                    patch_rgb[j][static_cast<std::size_t>(k)];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(j);
            }
        }
        out.push_back(best);
    }
    return out;
}

std::vector<int> component_cluster_ids(const std::vector<ChartComponent>& comps) {
    std::vector<int> ids;
    for (const ChartComponent& c : comps) ids.push_back(c.cluster_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

void name_components(std::vector<ChartComponent>& comps, const std::vector<int>& matches,
                     const std::vector<LegendPair>& legend_pairs,
                     const std::vector<TextBox>& text_boxes) {
    const std::vector<int> ids = component_cluster_ids(comps);
    const bool have_legend = !legend_pairs.empty() && matches.size() == ids.size();

    std::map<int, std::string> name_of;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (have_legend) {
            const int m = matches[k];
            require(m >= 0 && m < static_cast<int>(legend_pairs.size()), "DanglingReference",
                    "legend match out of range");
            const int tid = legend_pairs[static_cast<std::size_t>(m)].text_id;
            require(tid >= 0 && tid < static_cast<int>(text_boxes.size()), "DanglingReference",
                    "legend pair references text box " + std::to_string(tid));
            name_of[ids[k]] = text_boxes[static_cast<std::size_t>(tid)].text;
        } else {
            name_of[ids[k]] = "series-" + std::to_string(k + 1);
        }
    }
    for (ChartComponent& c : comps) {
        const bool bar =
            c.kind == ChartType::BarVertical || c.kind == ChartType::BarHorizontal;
        // an unlegended bar chart is a single series
        c.name = (!have_legend && bar) ? "series-1" : name_of[c.cluster_id];
    }
}

AnnotatedChart assemble_prediction(ChartType chart_type,
                                   const std::vector<ChartComponent>& components,
                                   const std::vector<AxisTick>& axis_ticks,
                                   const std::vector<TextBox>& text_boxes,
                                   const Rect& plot_bbox) {
    SeriesBundle bundle = build_series(components, axis_ticks, text_boxes, chart_type);
    AnnotatedChart pred;
    pred.chart_type = chart_type;
    pred.plot_bbox = plot_bbox;
    pred.data_series = std::move(bundle.data);
    pred.pixel_geometry = std::move(bundle.geometry);
    return pred;
}

}  // namespace chartex
