#pragma once

#include <random>
#include <string>
#include <vector>

#include "chartex/core/types.hpp"
#include "chartex/mask/maskgen.hpp"

namespace chartex {

struct AugmentationPolicy {
    float p_erase_text = 0.25f;
    float p_add_text = 0.25f;
    int max_added_boxes = 4;
    float skew_range = 15.0f;  // degrees, +/-

    bool valid() const {
        return p_erase_text >= 0.f && p_add_text >= 0.f && p_erase_text <= 1.f &&
               p_add_text <= 1.f && p_erase_text + p_add_text <= 1.f;
    }
};

enum class AugBranch { Erase, Add, Identity };

// One branch per call: with p_erase_text every text-box region is filled with
// the image's per-channel median color; with p_add_text, 1..max_added_boxes
// crops of this image's own text boxes are skewed within +/-skew_range and
// pasted at uniform random positions inside plot_bbox; otherwise the image is
// returned unchanged. Training targets are never touched here. Zero text
// boxes degenerate to identity. `taken` (optional) reports the branch.
RgbImage apply_text_invariance(const RgbImage& image, const std::vector<TextBox>& text_boxes,
                               const Rect& plot_bbox, const AugmentationPolicy& policy,
                               std::mt19937_64& rng, AugBranch* taken = nullptr);

struct TrainingExample {
    RgbImage image;
    MaskSet masks;
    ChartType chart_type = ChartType::Line;
    KeypointList keypoints;
};

// Augments the raster and builds mask targets from the *unaugmented* chart.
TrainingExample build_training_example(const AnnotatedChart& chart,
                                       const AugmentationPolicy& policy, std::mt19937_64& rng,
                                       int stride = 4);

// Dataset manifest: one "annotation-path<TAB>split" line per chart.
struct ManifestEntry {
    std::string annotation_path;  // resolved against the manifest's directory
    std::string split;            // train | val | test
};

std::vector<ManifestEntry> load_manifest(const std::string& path);
void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

}  // namespace chartex
