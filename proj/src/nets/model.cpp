#include "chartex/nets/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace chartex {

using nn::Shape;
using nn::Tensor;

const char* family_name(Family f) {
    switch (f) {
        case Family::HGN: return "hgn";
        case Family::CPN: return "cpn";
        case Family::SPN: return "spn";
    }
    return "?";
}

Family family_from_name(const std::string& s) {
    for (Family f : {Family::HGN, Family::CPN, Family::SPN})
        if (s == family_name(f)) return f;
    fail("BadConfig", "unknown backbone family '" + s + "'");
}

ChartType HeatmapSet::predicted_type() const {
    int best = 0;
    for (int i = 1; i < 5; ++i)
        if (type_logits[i] > type_logits[best]) best = i;
    return static_cast<ChartType>(best);
}

template <typename S>
Model<S>::Model(BackboneConfig cfg, uint64_t seed) : cfg_(cfg), store_(seed) {
    require(cfg_.valid(), "BadConfig", "invalid backbone configuration");
}

template <typename S>
Tensor<S> Model<S>::conv(const std::string& name, const Tensor<S>& x, int cout, int k,
                         int stride, int pad, bool zero_init) {
    const int cin = x.shape().c;
    auto w = zero_init ? store_.constant(name + ".w", {cout, cin, k, k}, S(0))
                       : store_.he_normal(name + ".w", {cout, cin, k, k}, cin * k * k);
    auto b = store_.constant(name + ".b", {1, cout, 1, 1}, S(0));
    return nn::conv2d(x, w, b, stride, pad);
}

template <typename S>
Tensor<S> Model<S>::bn(const std::string& name, const Tensor<S>& x) {
    const int c = x.shape().c;
    auto gamma = store_.constant(name + ".g", {1, c, 1, 1}, S(1));
    auto beta = store_.constant(name + ".beta", {1, c, 1, 1}, S(0));
    auto& rm = store_.buffer(name + ".running_mean", c, S(0));
    auto& rv = store_.buffer(name + ".running_var", c, S(1));
    return nn::batchnorm(x, gamma, beta, rm, rv, training_);
}

template <typename S>
Tensor<S> Model<S>::conv_bn_relu(const std::string& name, const Tensor<S>& x, int cout, int k,
                                 int stride, int pad) {
    return nn::relu(bn(name + ".bn", conv(name, x, cout, k, stride, pad)));
}

// deep-aggregation node: concat -> 1x1 conv -> BN -> ReLU
template <typename S>
Tensor<S> Model<S>::aggregate(const std::string& name, const Tensor<S>& a, const Tensor<S>& b) {
    auto cat = nn::concat_channels(a, b);
    return nn::relu(bn(name + ".bn", conv(name, cat, cfg_.base_channels, 1, 1, 0)));
}

template <typename S>
Tensor<S> Model<S>::merge(const std::string& name, const Tensor<S>& skip, const Tensor<S>& up) {
    if (cfg_.use_dla) return aggregate(name, skip, up);
    return nn::relu(nn::add(skip, up));
}

template <typename S>
Tensor<S> Model<S>::stem(const Tensor<S>& x) {
    int levels = 0;
    for (int s = cfg_.stride; s > 1; s /= 2) ++levels;
    Tensor<S> h = x;
    for (int i = 0; i < levels; ++i) {
        const int k = i == 0 ? 7 : 3;
        h = conv_bn_relu("stem.c" + std::to_string(i), h, cfg_.base_channels, k, 2, k / 2);
    }
    if (levels == 0) h = conv_bn_relu("stem.c0", h, cfg_.base_channels, 3, 1, 1);
    return h;
}

template <typename S>
Tensor<S> Model<S>::hourglass(const std::string& prefix, const Tensor<S>& x, int level) {
    auto skip = conv_bn_relu(prefix + ".skip", x, cfg_.base_channels, 3, 1, 1);
    auto down = conv_bn_relu(prefix + ".down", nn::maxpool2(x), cfg_.base_channels, 3, 1, 1);
    auto inner = (level + 1 < cfg_.n_stages)
                     ? hourglass(prefix + ".in", down, level + 1)
                     : conv_bn_relu(prefix + ".bottom", down, cfg_.base_channels, 3, 1, 1);
    return merge(prefix + ".merge", skip, nn::upsample2_nearest(inner));
}

template <typename S>
Tensor<S> Model<S>::backbone_hgn(const Tensor<S>& x) {
    return hourglass("hg", x, 0);
}

template <typename S>
Tensor<S> Model<S>::backbone_cpn(const Tensor<S>& x) {
    const int n = cfg_.n_stages;
    std::vector<Tensor<S>> enc{x};
    for (int i = 1; i <= n; ++i)
        enc.push_back(conv_bn_relu("cpn.enc" + std::to_string(i), enc.back(),
                                   cfg_.base_channels, 3, 2, 1));
    // top-down pyramid with lateral 1x1 projections
    std::vector<Tensor<S>> pyr(n + 1);
    pyr[n] = conv_bn_relu("cpn.lat" + std::to_string(n), enc[n], cfg_.base_channels, 1, 1, 0);
    for (int i = n - 1; i >= 0; --i) {
        auto lat = conv_bn_relu("cpn.lat" + std::to_string(i), enc[i], cfg_.base_channels, 1,
                                1, 0);
        pyr[i] = merge("cpn.merge" + std::to_string(i), lat, nn::upsample2_nearest(pyr[i + 1]));
    }
    // cascaded refinement: deeper levels climb back with conv+upsample chains
    Tensor<S> out = pyr[0];
    for (int i = 1; i <= n; ++i) {
        Tensor<S> t = pyr[i];
        for (int j = 0; j < i; ++j) {
            t = conv_bn_relu("cpn.ref" + std::to_string(i) + "_" + std::to_string(j), t,
                             cfg_.base_channels, 3, 1, 1);
            t = nn::upsample2_nearest(t);
        }
        out = nn::concat_channels(out, t);
    }
    return conv_bn_relu("cpn.fuse", out, cfg_.base_channels, 1, 1, 0);
}

template <typename S>
Tensor<S> Model<S>::backbone_spn(const Tensor<S>& x) {
    const int n = cfg_.n_stages;
    std::vector<Tensor<S>> enc{x};
    for (int i = 1; i <= n; ++i)
        enc.push_back(conv_bn_relu("spn.enc" + std::to_string(i), enc.back(),
                                   cfg_.base_channels, 3, 2, 1));
    // decode with learnable stride-2 deconvolutions
    Tensor<S> d = enc[n];
    for (int i = n; i >= 1; --i) {
        const std::string name = "spn.dec" + std::to_string(i);
        const int cin = d.shape().c;
        auto w = store_.he_normal(name + ".w", {cin, cfg_.base_channels, 4, 4}, cin * 16);
        auto b = store_.constant(name + ".b", {1, cfg_.base_channels, 1, 1}, S(0));
        d = nn::relu(bn(name + ".bn", nn::conv_transpose2d(d, w, b, 2, 1)));
        if (cfg_.use_dla) d = aggregate(name + ".agg", d, enc[i - 1]);
    }
    return d;
}

// four-direction corner pooling block: (left+top) and (right+bottom) branches
// after 3x3 convolutions, summed, fused, with a 1x1 shortcut
template <typename S>
Tensor<S> Model<S>::corner_block(const Tensor<S>& x) {
    const int c = cfg_.base_channels;
    auto bl = nn::corner_pool(conv_bn_relu("cp.l", x, c, 3, 1, 1), nn::PoolDir::Left);
    auto bt = nn::corner_pool(conv_bn_relu("cp.t", x, c, 3, 1, 1), nn::PoolDir::Top);
    auto br = nn::corner_pool(conv_bn_relu("cp.r", x, c, 3, 1, 1), nn::PoolDir::Right);
    auto bb = nn::corner_pool(conv_bn_relu("cp.b", x, c, 3, 1, 1), nn::PoolDir::Bottom);
    auto merged = bn("cp.fuse.bn", conv("cp.fuse", nn::add(nn::add(bl, bt), nn::add(br, bb)),
                                        c, 3, 1, 1));
    auto shortcut = bn("cp.short.bn", conv("cp.short", x, c, 1, 1, 0));
    return nn::relu(nn::add(merged, shortcut));
}

template <typename S>
NetOutputs<S> Model<S>::forward(const Tensor<S>& image, bool training) {
    training_ = training;
    const Shape& s = image.shape();
    require(s.c == 3, "ShapeError", "expected a 3-channel image tensor");
    require(s.h % cfg_.stride == 0 && s.w % cfg_.stride == 0, "ShapeError",
            "image dims must be divisible by stride " + std::to_string(cfg_.stride));
    const int down = cfg_.stride << cfg_.n_stages;
    require(s.h % down == 0 && s.w % down == 0, "ShapeError",
            "image dims must be divisible by stride*2^stages = " + std::to_string(down));

    Tensor<S> f = stem(image);
    switch (cfg_.family) {
        case Family::HGN: f = backbone_hgn(f); break;
        case Family::CPN: f = backbone_cpn(f); break;
        case Family::SPN: f = backbone_spn(f); break;
    }
    if (cfg_.use_corner_pool) f = corner_block(f);

    NetOutputs<S> out;
    out.features = conv_bn_relu("head.trunk", f, cfg_.base_channels, 3, 1, 1);
    static const char* kViewNames[kNumViews] = {"binary_recon", "fg_regress", "bg_regress",
                                                "fg_class", "bg_class"};
    for (int v = 0; v < kNumViews; ++v) {
        out.logits[v] = conv("head." + std::string(kViewNames[v]), out.features, 1, 1, 1, 0,
                             /*zero_init=*/true);
        out.act[v] = nn::sigmoid(out.logits[v]);
    }
    out.offset = conv("head.offset", out.features, 2, 1, 1, 0, /*zero_init=*/true);

    auto pooled = nn::global_avg_pool(out.features);  // (1, C, 1, 1): matrix row
    auto wt = store_.constant("head.type.w", {cfg_.base_channels, 5, 1, 1}, S(0));
    auto bt = store_.constant("head.type.b", {1, 5, 1, 1}, S(0));
    out.type_logits = nn::add_bias_cols(nn::matmul(pooled, wt), bt);
    return out;
}

// shared attention machinery: queries (K, D) against the five view-gated
// feature maps; key/value projections are shared across views so the sum is
// invariant to view order
template <typename S>
Tensor<S> Model<S>::attention_sum(const NetOutputs<S>& out, const Tensor<S>& queries) {
    const int d = cfg_.embed_dim;
    const Shape fs = out.features.shape();
    const int hw = fs.h * fs.w;
    const S inv_sqrt_d = S(1) / std::sqrt(S(d));

    Tensor<S> acc;
    for (int v = 0; v < kNumViews; ++v) {
        auto gated = nn::mul_gate(out.features, out.act[v]);
        auto keys = nn::reshape(conv("fuse.k", gated, d, 1, 1, 0), {d, hw, 1, 1});
        auto vals = nn::reshape(conv("fuse.v", gated, d, 1, 1, 0), {d, hw, 1, 1});
        auto scores = nn::affine(nn::matmul(queries, keys), inv_sqrt_d, S(0));  // (K, HW)
        auto attended = nn::matmul(nn::softmax_rows(scores), nn::transpose2d(vals));  // (K, D)
        acc = v == 0 ? attended : nn::add(acc, attended);
    }
    return acc;
}

template <typename S>
Tensor<S> Model<S>::embeddings_at(const NetOutputs<S>& out,
                                  const std::vector<nn::CellRef>& cells) {
    require(!cells.empty(), "ShapeError", "embeddings_at: no cells");
    const int d = cfg_.embed_dim;
    auto qmap = conv("fuse.q", out.features, d, 1, 1, 0);  // (1, D, H, W)
    auto queries = nn::gather_cells(qmap, cells);          // (K, D)
    auto summed = attention_sum(out, queries);
    // final projection, shared with the full-map path
    auto w = store_.he_normal("fuse.proj.w", {d, d, 1, 1}, d);
    auto b = store_.constant("fuse.proj.b", {1, d, 1, 1}, S(0));
    return nn::add_bias_cols(nn::matmul(summed, w), b);
}

template <typename S>
Tensor<S> Model<S>::embedding_map(const NetOutputs<S>& out) {
    const Shape fs = out.features.shape();
    std::vector<nn::CellRef> all;
    all.reserve(static_cast<size_t>(fs.h) * fs.w);
    for (int y = 0; y < fs.h; ++y)
        for (int x = 0; x < fs.w; ++x) all.push_back({0, y, x});
    auto flat = embeddings_at(out, all);  // (HW, D)
    return nn::reshape(nn::transpose2d(flat), {1, cfg_.embed_dim, fs.h, fs.w});
}

template <typename S>
Tensor<S> Model<S>::patch_embedding(const NetOutputs<S>& out, float cx0, float cy0, float cx1,
                                    float cy1) {
    const int d = cfg_.embed_dim;
    const int c = cfg_.base_channels;
    auto roi = nn::roi_align(out.features, S(cx0), S(cy0), S(cx1), S(cy1), 2, 2);
    auto flat = nn::reshape(roi, {1, c * 4, 1, 1});
    auto w = store_.he_normal("legend.patch.w", {c * 4, d, 1, 1}, c * 4);
    auto b = store_.constant("legend.patch.b", {1, d, 1, 1}, S(0));
    return nn::add_bias_cols(nn::matmul(flat, w), b);
}

template <typename S>
Tensor<S> Model<S>::cluster_embedding(const NetOutputs<S>& out,
                                      const std::vector<nn::CellRef>& cells) {
    require(!cells.empty(), "ShapeError", "cluster_embedding: no cells");
    const int d = cfg_.embed_dim;
    const int c = cfg_.base_channels;
    // averaging as a (1,K) x (K,*) matmul keeps the op on the tape
    auto avg = Tensor<S>::constant({1, static_cast<int>(cells.size()), 1, 1},
                                   S(1) / S(cells.size()));
    auto mean_emb = nn::matmul(avg, embeddings_at(out, cells));          // (1, D)
    auto mean_feat = nn::matmul(avg, nn::gather_cells(out.features, cells));  // (1, C)
    auto cat = nn::concat_channels(mean_emb, mean_feat);                 // (1, D+C)
    auto w = store_.he_normal("legend.cluster.w", {d + c, d, 1, 1}, d + c);
    auto b = store_.constant("legend.cluster.b", {1, d, 1, 1}, S(0));
    auto mixed = nn::add_bias_cols(nn::matmul(cat, w), b);
    // channelwise affine in place of batch normalization (single-row input)
    auto gamma = store_.constant("legend.cluster.g", {1, d, 1, 1}, S(1));
    auto beta = store_.constant("legend.cluster.beta", {1, d, 1, 1}, S(0));
    return nn::add_bias_cols(nn::mul(mixed, gamma), beta);
}

template <typename S>
nn::Tensor<S> image_to_tensor(const RgbImage& img) {
    const int h = img.height(), w = img.width();
    nn::Vec<S> v(3 * h * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const Rgb c = img.at(y, x);
            v(0 * h * w + y * w + x) = S(c.r) / S(255);
            v(1 * h * w + y * w + x) = S(c.g) / S(255);
            v(2 * h * w + y * w + x) = S(c.b) / S(255);
        }
    return nn::Tensor<S>::from({1, 3, h, w}, std::move(v));
}

namespace {

Heatmap grid_from_tensor(const nn::Tensor<float>& t, int channel, int stride) {
    const nn::Shape& s = t.shape();
    Heatmap hm;
    hm.stride = stride;
    hm.grid = GridD(s.h, s.w);
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) hm.grid(y, x) = t.at(0, channel, y, x);
    return hm;
}

}  // namespace

HeatmapSet to_heatmap_set(const NetOutputs<float>& out, int stride) {
    HeatmapSet hs;
    hs.stride = stride;
    for (int v = 0; v < kNumViews; ++v) {
        hs.act[v] = grid_from_tensor(out.act[v], 0, stride);
        hs.logits[v] = grid_from_tensor(out.logits[v], 0, stride);
    }
    hs.offset_x = grid_from_tensor(out.offset, 0, stride).grid;
    hs.offset_y = grid_from_tensor(out.offset, 1, stride).grid;
    for (int i = 0; i < 5; ++i) hs.type_logits[i] = out.type_logits.at(0, i, 0, 0);
    return hs;
}

HeatmapSet oracle_heatmaps(const MaskSet& masks, ChartType type, float sigma) {
    const Eigen::Index rows = masks.fg_class.grid.rows();
    const Eigen::Index cols = masks.fg_class.grid.cols();

    // exact keypoint positions in cell coordinates (integer cell + stored
    // fractional offset)
    std::vector<double> tx, ty;
    tx.reserve(masks.kp_cells.size());
    ty.reserve(masks.kp_cells.size());
    for (const KpCell& k : masks.kp_cells) {
        tx.push_back(k.cx + masks.offset_x(k.cy, k.cx));
        ty.push_back(k.cy + masks.offset_y(k.cy, k.cx));
    }

    // continuous sparse Gaussian, integer-cell-centered like the mask builder
    GridD peaks = GridD::Zero(rows, cols);
    const double inv = 1.0 / (2.0 * static_cast<double>(sigma) * sigma);
    for (const KpCell& k : masks.kp_cells)
        for (Eigen::Index y = 0; y < rows; ++y)
            for (Eigen::Index x = 0; x < cols; ++x) {
                const double dx = static_cast<double>(x) - k.cx;
                const double dy = static_cast<double>(y) - k.cy;
                const double v = std::exp(-(dx * dx + dy * dy) * inv);
                if (v > peaks(y, x)) peaks(y, x) = v;
            }

    HeatmapSet hs;
    hs.stride = masks.fg_regress.stride;
    auto as_heatmap = [&](GridD g) {
        Heatmap hm;
        hm.stride = hs.stride;
        hm.grid = std::move(g);
        return hm;
    };
    hs.act[static_cast<int>(View::BinaryRecon)] = as_heatmap(peaks);
    hs.act[static_cast<int>(View::FgRegress)] = masks.fg_regress;
    hs.act[static_cast<int>(View::BgRegress)] = masks.bg_regress;
    hs.act[static_cast<int>(View::FgClass)] = as_heatmap(peaks);
    hs.act[static_cast<int>(View::BgClass)] = as_heatmap(1.0 - peaks);

    auto to_logit = [](double p) {
        const double q = std::clamp(p, 1e-6, 1.0 - 1e-6);
        return std::log(q / (1.0 - q));
    };
    for (int v = 0; v < kNumViews; ++v) {
        hs.logits[v] = hs.act[v];
        hs.logits[v].grid = hs.logits[v].grid.unaryExpr(to_logit);
    }

    // dense offsets: every cell points at its nearest keypoint
    hs.offset_x = GridD::Zero(rows, cols);
    hs.offset_y = GridD::Zero(rows, cols);
    if (!tx.empty())
        for (Eigen::Index y = 0; y < rows; ++y)
            for (Eigen::Index x = 0; x < cols; ++x) {
                std::size_t best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t k = 0; k < tx.size(); ++k) {
                    const double dx = tx[k] - static_cast<double>(x);
                    const double dy = ty[k] - static_cast<double>(y);
                    const double d = dx * dx + dy * dy;
                    if (d < best_d) {
                        best_d = d;
                        best = k;
                    }
                }
                hs.offset_x(y, x) = tx[best] - static_cast<double>(x);
                hs.offset_y(y, x) = ty[best] - static_cast<double>(y);
            }

    hs.type_logits.fill(-10.0);
    hs.type_logits[static_cast<int>(type)] = 10.0;
    return hs;
}

template class Model<float>;
template class Model<double>;
template nn::Tensor<float> image_to_tensor<float>(const RgbImage&);
template nn::Tensor<double> image_to_tensor<double>(const RgbImage&);

}  // namespace chartex
