#pragma once

// Keypoint backbones (hourglass / cascaded-pyramid / simple-pose families),
// optional four-direction corner pooling and deep-aggregation skips, the five
// heatmap heads plus offset and chart-type heads, and the cross-attention
// embedding head used for keypoint grouping and legend matching.

#include <array>
#include <cstdint>
#include <vector>

#include "chartex/core/types.hpp"
#include "chartex/image/raster.hpp"
#include "chartex/mask/maskgen.hpp"
#include "chartex/nn/autodiff.hpp"
#include "chartex/nn/params.hpp"

namespace chartex {

enum class Family { HGN, CPN, SPN };

const char* family_name(Family f);
Family family_from_name(const std::string& s);

struct BackboneConfig {
    Family family = Family::HGN;
    bool use_corner_pool = false;
    bool use_dla = false;
    int base_channels = 32;
    int n_stages = 2;  // downsampling levels below the stem resolution
    int stride = 4;
    int embed_dim = 32;

    bool valid() const {
        const bool pow2 = stride >= 1 && (stride & (stride - 1)) == 0;
        return pow2 && base_channels >= 8 && n_stages >= 1 && embed_dim >= 4;
    }
};

inline constexpr int kNumViews = 5;

// view order mirrors MaskSet field order
enum class View { BinaryRecon = 0, FgRegress, BgRegress, FgClass, BgClass };

// plain (detached) prediction bundle consumed by postprocessing
struct HeatmapSet {
    std::array<Heatmap, kNumViews> act;     // sigmoid outputs in [0,1]
    std::array<Heatmap, kNumViews> logits;  // pre-activation
    GridD offset_x, offset_y;
    std::array<double, kNumViews + 0> type_logits{};  // 5 chart-type scores
    int stride = 4;

    const Heatmap& view(View v) const { return act[static_cast<int>(v)]; }
    const Heatmap& binary_recon() const { return view(View::BinaryRecon); }
    const Heatmap& fg_regress() const { return view(View::FgRegress); }
    const Heatmap& bg_regress() const { return view(View::BgRegress); }
    const Heatmap& fg_class() const { return view(View::FgClass); }
    const Heatmap& bg_class() const { return view(View::BgClass); }
    ChartType predicted_type() const;
};

// graph-side bundle for one image (batch dimension 1)
template <typename S>
struct NetOutputs {
    nn::Tensor<S> features;                        // trunk (1,C,H',W')
    std::array<nn::Tensor<S>, kNumViews> logits;   // (1,1,H',W') each
    std::array<nn::Tensor<S>, kNumViews> act;      // sigmoid(logits)
    nn::Tensor<S> offset;                          // (1,2,H',W')
    nn::Tensor<S> type_logits;                     // (1,5) matrix
};

template <typename S>
class Model {
  public:
    Model(BackboneConfig cfg, uint64_t seed);

    // image: (1,3,H,W) with H,W divisible by stride (ShapeError otherwise)
    NetOutputs<S> forward(const nn::Tensor<S>& image, bool training);

    // cross-attention embeddings at selected heatmap cells -> (K, D) matrix;
    // identical to sampling embedding_map at those cells (attention rows are
    // independent per query position)
    nn::Tensor<S> embeddings_at(const NetOutputs<S>& out,
                                const std::vector<nn::CellRef>& cells);

    // full (1, D, H', W') embedding map
    nn::Tensor<S> embedding_map(const NetOutputs<S>& out);

    // legend-patch descriptor: ROI-align over trunk features + projection -> (1, D)
    nn::Tensor<S> patch_embedding(const NetOutputs<S>& out, float cx0, float cy0, float cx1,
                                  float cy1);

    // cluster descriptor: linear mix of [mean cell embedding, mean trunk
    // feature] followed by a channelwise affine -> (1, D)
    nn::Tensor<S> cluster_embedding(const NetOutputs<S>& out,
                                    const std::vector<nn::CellRef>& cells);

    nn::ParamStore<S>& params() { return store_; }
    const BackboneConfig& config() const { return cfg_; }

  private:
    BackboneConfig cfg_;
    nn::ParamStore<S> store_;
    bool training_ = false;

    nn::Tensor<S> conv_bn_relu(const std::string& name, const nn::Tensor<S>& x, int cout,
                               int k, int stride, int pad);
    nn::Tensor<S> conv(const std::string& name, const nn::Tensor<S>& x, int cout, int k,
                       int stride, int pad, bool zero_init = false);
    nn::Tensor<S> bn(const std::string& name, const nn::Tensor<S>& x);
    nn::Tensor<S> aggregate(const std::string& name, const nn::Tensor<S>& a,
                            const nn::Tensor<S>& b);
    nn::Tensor<S> merge(const std::string& name, const nn::Tensor<S>& skip,
                        const nn::Tensor<S>& up);
    nn::Tensor<S> stem(const nn::Tensor<S>& x);
    nn::Tensor<S> hourglass(const std::string& prefix, const nn::Tensor<S>& x, int level);
    nn::Tensor<S> backbone_hgn(const nn::Tensor<S>& x);
    nn::Tensor<S> backbone_cpn(const nn::Tensor<S>& x);
    nn::Tensor<S> backbone_spn(const nn::Tensor<S>& x);
    nn::Tensor<S> corner_block(const nn::Tensor<S>& x);
    nn::Tensor<S> attention_sum(const NetOutputs<S>& out, const nn::Tensor<S>& queries);
};

// (1,3,H,W) float tensor in [0,1] from an image
template <typename S>
nn::Tensor<S> image_to_tensor(const RgbImage& img);

// detach graph outputs into the plain prediction bundle
HeatmapSet to_heatmap_set(const NetOutputs<float>& out, int stride);

// Ground-truth masks repackaged as perfect predictions (oracle-heatmap mode);
// logits are clamped logit(act), the type entry is one-hot. The class/recon
// views carry the continuous sparse Gaussian rebuilt from the KP cells (the
// binarized training target has radius-2 plateaus that fuse keypoints closer
// than ~5 cells into one connected component), and the offset maps are
// densified so every cell points at its nearest keypoint, which makes the
// confidence-weighted centroid in candidate extraction recover the exact
// sub-cell position.
HeatmapSet oracle_heatmaps(const MaskSet& masks, ChartType type, float sigma = 2.0f);

}  // namespace chartex
