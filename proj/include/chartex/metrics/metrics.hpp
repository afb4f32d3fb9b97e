#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "chartex/core/dense.hpp"
#include "chartex/core/types.hpp"

namespace chartex {

// ---- small shared pieces (exposed for oracle-style tests) ----

int levenshtein(const std::string& a, const std::string& b);
// edit distance / max length; two empty strings -> 0
double normalized_edit_distance(const std::string& a, const std::string& b);

// Minimum-cost perfect assignment on a square cost matrix; returns row -> col.
std::vector<int> hungarian(const MatX<double>& cost);

struct XY {
    double x = 0, y = 0;
};

// ---- Task-6b scorers ----

// Exact integral of min(1, |pred(x)-gt(x)| / gt-y-range) over the gt x-range,
// both series linearly interpolated (constant beyond their ends). Empty or
// single-point pred scores 0 against a 2+ point gt only when the cap is hit;
// a truly empty pred scores 0.
double score_continuous(const DataSeries& pred, const DataSeries& gt);

// Capped Mahalanobis matching under the gt covariance (+1e-6*trace on the
// diagonal; identity when the trace vanishes). Optimal one-to-one assignment,
// unmatched points cost 1; score = 1 - total / max(|pred|, |gt|).
double score_scatter(const std::vector<XY>& pred, const std::vector<XY>& gt);

enum class MatchMode { Exact, Fuzzy };

// (label, value) pairs. Label distance: equality (exact) or normalized edit
// distance (fuzzy, assignment-optimal). Pair distance = min(1, label + value
// distance), value distance = min(1, |dv| / gt value-range).
double score_discrete(const std::vector<std::pair<std::string, double>>& pred,
                      const std::vector<std::pair<std::string, double>>& gt, MatchMode mode);

// Boxes matched by exact label; per box mean over the 5 stats of
// min(1, |d| / per-stat gt range across boxes).
double score_box(const std::vector<std::pair<std::string, BoxStats>>& pred,
                 const std::vector<std::pair<std::string, BoxStats>>& gt);

// ---- Task-6a (pixel space) ----

// Point-like elements (scatter markers, box whiskers) match with cost
// min(1, d / (0.02 * plot diagonal)); bars use the mean of their two corner
// costs; lines are sampled at 50 x-positions and cost the capped mean
// vertical deviation over plot height. Optimal assignment, unmatched cost 1.
double score_6a(const std::vector<SeriesGeometry>& pred, const std::vector<SeriesGeometry>& gt,
                ChartType type, const Rect& plot_bbox);

// Optimal assignment on normalized edit distance over name multisets.
double score_6b_name(const std::vector<std::string>& pred, const std::vector<std::string>& gt);

// Routes to the type-appropriate 6b data scorer (lines: per-series continuous
// scores under optimal series assignment; scatter: pooled points; bars:
// per-series discrete; box: label-matched stats).
double score_6b_data(const AnnotatedChart& pred, const AnnotatedChart& gt);

// ---- directory-level evaluation ----

struct ChartScores {
    std::string id;
    ChartType type = ChartType::Line;
    double s6a = 0, s6b_data = 0, s6b_name = 0;
    bool missing_pred = false;
    bool scorable_6b = true;
};

struct ScoreAggregate {
    int count = 0;
    double s6a = 0, s6b_data = 0, s6b_name = 0;
};

struct EvalReport {
    std::vector<ChartScores> per_chart;  // sorted by id
    std::map<ChartType, ScoreAggregate> per_type;
    ScoreAggregate overall;

    std::string table() const;  // Table-1-shaped text summary
};

// Pairs <id>.json files across the two directories (ids = gt stems). Charts
// are scored by `jobs` workers; the report is identical for any worker count.
EvalReport evaluate(const std::string& pred_dir, const std::string& gt_dir, int jobs = 1);

// Adapter: one JSON per chart shaped like the public challenge scorer input
// ("task6" -> "output" -> "data series" / "visual elements").
void export_challenge_json(const AnnotatedChart& pred, const std::string& path);

}  // namespace chartex
