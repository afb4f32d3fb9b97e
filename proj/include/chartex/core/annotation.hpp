#pragma once

#include <string>

#include "chartex/core/types.hpp"

namespace chartex {

// Annotation files are JSON (format_version 1) referencing a sibling PNG.
// Layout:
//   { "format_version": 1, "image_file": "c.png", "canvas": [H, W],
//     "chart_type": "line", "plot_bbox": [x0,y0,x1,y1],
//     "text_boxes": [{"polygon": [[x,y]*4], "text": "...", "role": "tick-label"}],
//     "axis_ticks": [{"axis": "x", "pixel": [x,y], "text_id": 0}],
//     "legend_pairs": [{"text_id": 1, "patch_bbox": [x0,y0,x1,y1]}],
//     "data_series": [{"name": "...", "kind": "continuous",
//                      "values": [{"x": <num|string>, "y": <num>}] | "box": {...}}],
//     "pixel_geometry": [{"vertices": [[x,y]...]} | {"bar_rects": [[...]...]}
//                        | {"whiskers": [[x,y]*5]}] }
// Predictions reuse the schema; ground-truth-only fields may be empty.

// Parses and validates. Throws Error with kind MalformedAnnotation,
// DanglingReference, OutOfBounds, or IoError. When load_image is true the
// referenced PNG must exist and match the recorded canvas size.
AnnotatedChart load_annotation(const std::string& path, bool load_image = true);

// Writes the JSON file only; the raster is saved separately via write_png.
void save_annotation(const std::string& path, const AnnotatedChart& chart);

// Convenience: writes <dir>/<stem>.png plus <dir>/<stem>.json and returns the
// annotation path. chart.image_file is set to "<stem>.png".
std::string save_chart(const std::string& dir, const std::string& stem, AnnotatedChart& chart);

// Ground-truth keypoints per chart component instance:
//   line: every polyline vertex (inflection), one group per series;
//   scatter: every marker center, one group per series;
//   bars: top-left / center / bottom-right of each bar, one group per bar;
//   box: the five whisker points, one group per box.
// Throws Error("MissingGeometry") when pixel_geometry is absent.
KeypointList extract_keypoints(const AnnotatedChart& gt);

// Field-by-field equality (exact float compare), used by round-trip tests.
bool annotation_equal(const AnnotatedChart& a, const AnnotatedChart& b, bool compare_image = true);

}  // namespace chartex
