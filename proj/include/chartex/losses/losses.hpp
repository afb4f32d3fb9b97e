#pragma once

// Training objectives: the five-view keypoint loss with offset and class
// weighting, push-pull and multi-similarity contrastive losses (scalar
// reference forms plus batched graph forms), and the 0.7/0.2/0.1 blend.

#include <array>
#include <cstdint>
#include <vector>

#include "chartex/mask/maskgen.hpp"
#include "chartex/nets/model.hpp"
#include "chartex/nn/autodiff.hpp"

namespace chartex {

struct LossWeights {
    double w_kp = 0.7;
    double w_contrastive = 0.2;
    double w_type = 0.1;
    double w_fg = 0.99;  // class weight at keypoint pixels
    double w_bg = 0.01;
};

struct PushPullParams {
    double m = 0.3;   // margin
    int Y = 0;        // 1 = similar pair
    double d_p = 0;   // distance to positive
    double d_n = 0;   // distance to negative
};

// L = (1-Y)*max(0, d_p - d_n + m)^2 + Y*max(0, d_n - d_p + m)^2, verbatim
double push_pull_loss(const PushPullParams& p);

struct MSParams {
    double alpha = 1.0;
    std::vector<std::vector<double>> f;  // N score rows, C entries each
    std::vector<int> y;                  // labels in [0, C)
};

struct MSTerms {
    double dis = 0;  // -sum_i log softmax(f_i)[y_i]
    double sim = 0;  // (1/2N) sum over same-label pairs (self-pairs included)
    double total = 0;
};

MSTerms multi_similarity_loss(const MSParams& p);

struct KpLossBreakdown {
    double binary_recon = 0;
    double fg_regress = 0;
    double bg_regress = 0;
    double fg_class = 0;
    double bg_class = 0;
    double offset = 0;
    double total = 0;  // mean of the five view losses + offset loss
};

// plain double evaluation on detached predictions (validation, logging)
KpLossBreakdown spaden_kp_loss(const HeatmapSet& pred, const MaskSet& target,
                               const LossWeights& w);

// graph form used in training; optional breakdown mirrors the scalar one
template <typename S>
nn::Tensor<S> spaden_kp_loss_graph(const NetOutputs<S>& pred, const MaskSet& target,
                                   const LossWeights& w, KpLossBreakdown* breakdown = nullptr);

enum class ContrastiveKind { PushPull, MultiSimilarity };

struct ContrastiveConfig {
    ContrastiveKind kind = ContrastiveKind::PushPull;
    double margin = 0.3;
    double alpha = 1.0;
    int max_pairs = 512;  // cap per polarity (positive / negative)
    uint64_t seed = 0;    // pair subsampling
};

// emb: (K, D) embedding rows; group_ids: per-row instance labels. Fewer than
// two cells contributes 0 and raises *degenerate instead of erroring.
template <typename S>
nn::Tensor<S> batch_contrastive_loss(const nn::Tensor<S>& emb,
                                     const std::vector<int>& group_ids,
                                     const ContrastiveConfig& cfg,
                                     bool* degenerate = nullptr);

// 0.7*kp + 0.2*contrastive + 0.1*type_ce; NonFinite on non-finite inputs
double total_loss(double kp, double contrastive, double type_ce, const LossWeights& w);

template <typename S>
nn::Tensor<S> total_loss_graph(const nn::Tensor<S>& kp, const nn::Tensor<S>& contrastive,
                               const nn::Tensor<S>& type_ce, const LossWeights& w);

}  // namespace chartex
