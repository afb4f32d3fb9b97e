#pragma once

// Candidate keypoints -> chart components -> data values. Clustering by
// embedding similarity, per-type reconstruction heuristics, tick-anchored
// pixel->value maps, and legend-based series naming.

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "chartex/core/dense.hpp"
#include "chartex/core/types.hpp"
#include "chartex/nets/model.hpp"
#include "chartex/postprocess/postprocess.hpp"

namespace chartex {

enum class ClusterMetric { Cosine, Euclidean };

struct ClusterParams {
    ClusterMetric metric = ClusterMetric::Cosine;
    double cosine_threshold = 0.85;
    double euclidean_threshold = 1e-5;

    bool valid() const {
        return cosine_threshold > 0 && cosine_threshold < 1 && euclidean_threshold > 0;
    }
};

// Connected components of the thresholded K x K similarity graph over the
// rows of `emb` (one embedding per candidate). Edge i~j iff cosine >=
// cosine_threshold (zero-norm rows have cosine 0 to everything) or Euclidean
// distance <= euclidean_threshold. Clusters are ordered by smallest member,
// members ascending. K = 0 -> empty, K = 1 -> one singleton.
std::vector<std::vector<int>> cluster_keypoints(const MatX<double>& emb,
                                                const ClusterParams& p = {});

// One reconstructed element, in pixel coordinates. Point semantics by kind:
//   Line          polyline vertices, strictly increasing x
//   Bar*          {top-left, bottom-right} of the rectangle
//   BoxVertical   five whisker points sorted by pixel y (ascending)
//   Scatter       a single marker
struct ChartComponent {
    ChartType kind = ChartType::Line;
    std::vector<Point> points;
    std::vector<int> cand_indices;  // retained candidates, indices into `cands`
    int cluster_id = -1;
    std::string name;  // filled by name_components / pixels_to_data
};

struct ReconstructResult {
    std::vector<ChartComponent> components;
    std::vector<std::string> diagnostics;  // one line per dropped cluster
};

// Apply the per-type rules to each cluster. Confidence is the fg_class
// activation at the candidate's peak cell (falls back to the candidate's own
// confidence when the map is empty). Line: sort by x, merge duplicate
// rounded-pixel x by confidence. Bar: top-2 by confidence as corners
// (confidence ties broken by largest separation, so plateaued maps pick the
// true corners over the center), canonicalized to (top-left, bottom-right);
// <2 candidates -> dropped. Box: top-5 by confidence sorted by y; <5 ->
// dropped. Scatter: keep candidates >= scatter_keep_factor x cluster max,
// one component per kept point.
ReconstructResult reconstruct_components(const std::vector<std::vector<int>>& clusters,
                                         const HeatmapSet& hm, ChartType chart_type,
                                         const std::vector<CandidatePoint>& cands,
                                         double scatter_keep_factor = 0.25);

// Piecewise-linear pixel->value map through tick anchors, extrapolating with
// the end segments. When every tick value is positive and a least-squares
// line predicts pixel from log(value) strictly better than from value, the
// interpolation runs in log space (log-scale axes).
class TickMap {
  public:
    // anchors: (pixel, value); needs >= 2 distinct pixels, else InsufficientTicks
    static TickMap fit(std::vector<std::pair<double, double>> anchors);

    double value_at(double px) const;
    bool log_scale() const { return log_scale_; }

  private:
    std::vector<std::pair<double, double>> anchors_;  // (pixel, value-or-log)
    bool log_scale_ = false;
};

// Label of the nearest tick on `axis`; ties -> smaller pixel position, then
// lower text id. Throws InsufficientTicks when the axis has no ticks.
std::string nearest_tick_label(const std::vector<AxisTick>& ticks, Axis axis, double px,
                               const std::vector<TextBox>& text_boxes);

// Convert components to data series using the tick oracle. Continuous axes
// get TickMaps (NonNumericTick on parse failure, InsufficientTicks below 2
// anchors); categorical axes use nearest-tick labels. Bars read their value
// at the far edge (top edge for vertical, right edge for horizontal) and
// group into one series per component name; boxes are named by their
// category tick (overriding any legend name) with whisker values sorted into
// min..max.
std::vector<DataSeries> pixels_to_data(const std::vector<ChartComponent>& components,
                                       const std::vector<AxisTick>& axis_ticks,
                                       const std::vector<TextBox>& text_boxes,
                                       ChartType chart_type);

// Argmax-cosine patch per cluster embedding row; ties -> lowest patch index.
std::vector<int> match_embeddings(const MatX<double>& cluster_emb,
                                  const MatX<double>& patch_emb);

// Argmin-L2 patch per cluster mean color (no-model path). Ties -> lowest index.
std::vector<int> match_colors(const std::vector<std::array<double, 3>>& cluster_rgb,
                              const std::vector<std::array<double, 3>>& patch_rgb);

// Distinct cluster ids over components, ascending.
std::vector<int> component_cluster_ids(const std::vector<ChartComponent>& comps);

// Write series names onto components: matches[k] (one per distinct cluster
// id, ascending) indexes legend_pairs, whose label text becomes the name.
// Without a legend, bar components all become "series-1" (an unlegended bar
// chart is one series) and other kinds get "series-1..n" in cluster-id order.
void name_components(std::vector<ChartComponent>& comps, const std::vector<int>& matches,
                     const std::vector<LegendPair>& legend_pairs,
                     const std::vector<TextBox>& text_boxes);

// Full prediction annotation: data series plus parallel pixel geometry
// (polylines / marker sets / bar rects / whiskers in min..max value order).
// The image stays empty; ticks and text boxes are not copied.
AnnotatedChart assemble_prediction(ChartType chart_type,
                                   const std::vector<ChartComponent>& components,
                                   const std::vector<AxisTick>& axis_ticks,
                                   const std::vector<TextBox>& text_boxes,
                                   const Rect& plot_bbox);

}  // namespace chartex
