#include "chartex/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace chartex {

using nn::Shape;
using nn::Tensor;
template <typename S>
using Vec = nn::Vec<S>;

double push_pull_loss(const PushPullParams& p) {
    require(p.m >= 0 && p.d_p >= 0 && p.d_n >= 0, "BadConfig", "push_pull_loss: invariants");
    const double pull = std::max(0.0, p.d_p - p.d_n + p.m);
    const double push = std::max(0.0, p.d_n - p.d_p + p.m);
    return (1.0 - p.Y) * pull * pull + p.Y * push * push;
}

MSTerms multi_similarity_loss(const MSParams& p) {
    require(p.alpha > 0, "BadConfig", "multi_similarity_loss: alpha must be positive");
    const int n = static_cast<int>(p.f.size());
    require(static_cast<int>(p.y.size()) == n, "BadConfig", "multi_similarity_loss: labels");
    MSTerms t;
    std::vector<double> own(n);  // f_{y_i}: each row's score at its own label
    for (int i = 0; i < n; ++i) {
        const auto& row = p.f[i];
        require(p.y[i] >= 0 && p.y[i] < static_cast<int>(row.size()), "BadConfig",
                "multi_similarity_loss: label out of range");
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0;
        for (double v : row) z += std::exp(v - mx);
        t.dis += -(row[p.y[i]] - mx - std::log(z));
        own[i] = row[p.y[i]];
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (p.y[i] != p.y[j]) continue;  // self-pairs (i == j) stay in
            const double u = own[i] - own[j];
            t.sim += 1.0 - u / (std::max(0.0, u) + p.alpha);
        }
    t.sim /= 2.0 * n;
    t.total = t.dis + t.sim;
    return t;
}

namespace {

// stable BCE from a logit: max(z,0) - z*t + log(1 + exp(-|z|))
double bce_logit(double z, double t) {
    return std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
}

void check_shapes(int ph, int pw, const MaskSet& target) {
    require(ph == target.fg_class.height() && pw == target.fg_class.width(), "ShapeMismatch",
            "keypoint loss: prediction and target grids differ");
}

}  // namespace

KpLossBreakdown spaden_kp_loss(const HeatmapSet& pred, const MaskSet& target,
                               const LossWeights& w) {
    const int h = pred.binary_recon().height(), wd = pred.binary_recon().width();
    check_shapes(h, wd, target);
    KpLossBreakdown b;
    const int m = h * wd;

    for (int i = 0; i < m; ++i) {
        const int y = i / wd, x = i % wd;
        const double fg = target.fg_class.grid(y, x);
        const double cw = fg == 1.0 ? w.w_fg : w.w_bg;
        b.binary_recon += bce_logit(pred.logits[0].grid(y, x), target.binary_recon.grid(y, x));
        const double dfg = pred.fg_regress().grid(y, x) - target.fg_regress.grid(y, x);
        const double dbg = pred.bg_regress().grid(y, x) - target.bg_regress.grid(y, x);
        b.fg_regress += dfg * dfg;
        b.bg_regress += dbg * dbg;
        b.fg_class += cw * bce_logit(pred.logits[3].grid(y, x), fg);
        b.bg_class += cw * bce_logit(pred.logits[4].grid(y, x), target.bg_class.grid(y, x));
    }
    double wsum = 0;
    for (int i = 0; i < m; ++i)
        wsum += target.fg_class.grid(i / wd, i % wd) == 1.0 ? w.w_fg : w.w_bg;
    b.binary_recon /= m;
    b.fg_regress /= m;
    b.bg_regress /= m;
    b.fg_class /= wsum;
    b.bg_class /= wsum;

    for (const auto& cell : target.kp_cells) {
        b.offset += std::abs(pred.offset_x(cell.cy, cell.cx) - target.offset_x(cell.cy, cell.cx));
        b.offset += std::abs(pred.offset_y(cell.cy, cell.cx) - target.offset_y(cell.cy, cell.cx));
    }
    b.offset /= std::max<size_t>(1, 2 * target.kp_cells.size());

    b.total = (b.binary_recon + b.fg_regress + b.bg_regress + b.fg_class + b.bg_class) / 5.0 +
              b.offset;
    return b;
}

namespace {

template <typename S>
Vec<S> flatten(const GridD& g) {
    Vec<S> v(g.size());
    for (Eigen::Index y = 0; y < g.rows(); ++y)
        for (Eigen::Index x = 0; x < g.cols(); ++x) v(y * g.cols() + x) = S(g(y, x));
    return v;
}

}  // namespace

template <typename S>
Tensor<S> spaden_kp_loss_graph(const NetOutputs<S>& pred, const MaskSet& target,
                               const LossWeights& w, KpLossBreakdown* breakdown) {
    const Shape& ps = pred.logits[0].shape();
    check_shapes(ps.h, ps.w, target);

    const Vec<S> fg_mask = flatten<S>(target.fg_class.grid);
    Vec<S> ones = Vec<S>::Ones(fg_mask.size());
    Vec<S> cls_w(fg_mask.size());
    for (Eigen::Index i = 0; i < cls_w.size(); ++i)
        cls_w(i) = fg_mask(i) == S(1) ? S(w.w_fg) : S(w.w_bg);

    auto recon = nn::bce_logits_weighted(pred.logits[0], flatten<S>(target.binary_recon.grid),
                                         ones);
    auto fg_reg = nn::mse_against(pred.act[1], flatten<S>(target.fg_regress.grid));
    auto bg_reg = nn::mse_against(pred.act[2], flatten<S>(target.bg_regress.grid));
    auto fg_cls = nn::bce_logits_weighted(pred.logits[3], fg_mask, cls_w);
    auto bg_cls = nn::bce_logits_weighted(pred.logits[4], flatten<S>(target.bg_class.grid),
                                          cls_w);

    // offsets: L1 on both channels, restricted to keypoint cells
    const int plane = ps.h * ps.w;
    Vec<S> off_target(2 * plane), off_mask = Vec<S>::Zero(2 * plane);
    off_target.segment(0, plane) = flatten<S>(target.offset_x);
    off_target.segment(plane, plane) = flatten<S>(target.offset_y);
    for (const auto& cell : target.kp_cells) {
        off_mask(cell.cy * ps.w + cell.cx) = S(1);
        off_mask(plane + cell.cy * ps.w + cell.cx) = S(1);
    }
    auto off = nn::l1_masked(pred.offset, off_target, off_mask);

    auto views = nn::add(nn::add(nn::add(recon, fg_reg), nn::add(bg_reg, fg_cls)), bg_cls);
    auto loss = nn::add(nn::affine(views, S(1) / S(5), S(0)), off);

    if (breakdown) {
        breakdown->binary_recon = double(recon.item());
        breakdown->fg_regress = double(fg_reg.item());
        breakdown->bg_regress = double(bg_reg.item());
        breakdown->fg_class = double(fg_cls.item());
        breakdown->bg_class = double(bg_cls.item());
        breakdown->offset = double(off.item());
        breakdown->total = double(loss.item());
    }
    return loss;
}

namespace {

struct PairLists {
    // anchor / partner index rows, one list per polarity
    std::vector<int> pos_a, pos_b, pos_n;  // pos_n: sampled negative per anchor
    std::vector<int> neg_a, neg_b, neg_p;  // neg_p: sampled positive per anchor
    bool has_negatives = false;
};

// deterministic pair subsampling; enumerates exhaustively under the cap
PairLists sample_pairs(const std::vector<int>& groups, int cap, uint64_t seed) {
    const int k = static_cast<int>(groups.size());
    std::mt19937_64 rng(seed);
    PairLists out;

    std::vector<std::vector<int>> by_group;
    {
        std::vector<int> ids = groups;
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        by_group.resize(ids.size());
        for (int i = 0; i < k; ++i) {
            const int g = int(std::lower_bound(ids.begin(), ids.end(), groups[i]) - ids.begin());
            by_group[g].push_back(i);
        }
        out.has_negatives = ids.size() > 1;
    }

    int64_t n_pos = 0;
    for (const auto& g : by_group) n_pos += int64_t(g.size()) * (int64_t(g.size()) - 1) / 2;
    const int64_t n_neg = int64_t(k) * (k - 1) / 2 - n_pos;

    auto random_same = [&](int i) {  // a positive partner of i, or -1
        const int gi = groups[i];
        std::vector<int>* bucket = nullptr;
        for (auto& g : by_group)
            if (!g.empty() && groups[g[0]] == gi) bucket = &g;
        if (!bucket || bucket->size() < 2) return -1;
        int j;
        do {
            j = (*bucket)[rng() % bucket->size()];
        } while (j == i);
        return j;
    };
    auto random_diff = [&](int i) {  // a negative partner of i, or -1
        if (!out.has_negatives) return -1;
        int j;
        do {
            j = int(rng() % k);
        } while (groups[j] == groups[i]);
        return j;
    };

    if (n_pos <= cap) {
        for (const auto& g : by_group)
            for (size_t a = 0; a < g.size(); ++a)
                for (size_t b = a + 1; b < g.size(); ++b) {
                    out.pos_a.push_back(g[a]);
                    out.pos_b.push_back(g[b]);
                }
    } else {
        while (int(out.pos_a.size()) < cap) {
            const int i = int(rng() % k);
            const int j = random_same(i);
            if (j < 0) continue;
            out.pos_a.push_back(i);
            out.pos_b.push_back(j);
        }
    }
    for (int i : out.pos_a) out.pos_n.push_back(random_diff(i));

    if (n_neg <= cap) {
        for (int a = 0; a < k; ++a)
            for (int b = a + 1; b < k; ++b)
                if (groups[a] != groups[b]) {
                    out.neg_a.push_back(a);
                    out.neg_b.push_back(b);
                }
    } else {
        while (int(out.neg_a.size()) < cap) {
            const int i = int(rng() % k);
            const int j = random_diff(i);
            if (j < 0) break;
            out.neg_a.push_back(i);
            out.neg_b.push_back(j);
        }
    }
    for (int i : out.neg_a) out.neg_p.push_back(random_same(i));
    return out;
}

template <typename S>
Tensor<S> gather_rows(const Tensor<S>& m, const std::vector<int>& rows) {
    std::vector<nn::CellRef> cells;
    cells.reserve(rows.size());
    for (int r : rows) cells.push_back({r, 0, 0});
    return nn::gather_cells(m, cells);
}

// rowwise Euclidean distances between two (P, D) row blocks -> (P, 1)
template <typename S>
Tensor<S> row_distances(const Tensor<S>& a, const Tensor<S>& b) {
    auto diff = nn::sub(a, b);
    auto ones = Tensor<S>::constant({a.shape().c, 1, 1, 1}, S(1));
    return nn::sqrt_op(nn::matmul(nn::mul(diff, diff), ones));
}

template <typename S>
Tensor<S> squared_hinge(const Tensor<S>& x) {
    auto r = nn::relu(x);
    return nn::mul(r, r);
}

template <typename S>
Tensor<S> push_pull_batch(const Tensor<S>& emb, const PairLists& pairs, S margin) {
    std::vector<Tensor<S>> sums;

    if (!pairs.pos_a.empty()) {
        auto d_p = row_distances(gather_rows(emb, pairs.pos_a), gather_rows(emb, pairs.pos_b));
        // no negatives in the batch: substitute d_n = d_p (hinge reduces to m)
        auto d_n = pairs.has_negatives
                       ? row_distances(gather_rows(emb, pairs.pos_a),
                                       gather_rows(emb, pairs.pos_n))
                       : d_p;
        sums.push_back(nn::sum_all(squared_hinge(nn::affine(nn::sub(d_n, d_p), S(1), margin))));
    }
    if (!pairs.neg_a.empty()) {
        auto d_n = row_distances(gather_rows(emb, pairs.neg_a), gather_rows(emb, pairs.neg_b));
        const bool has_pos =
            std::all_of(pairs.neg_p.begin(), pairs.neg_p.end(), [](int i) { return i >= 0; });
        auto d_p = has_pos ? row_distances(gather_rows(emb, pairs.neg_a),
                                           gather_rows(emb, pairs.neg_p))
                           : d_n;
        sums.push_back(nn::sum_all(squared_hinge(nn::affine(nn::sub(d_p, d_n), S(1), margin))));
    }

    const S count = S(pairs.pos_a.size() + pairs.neg_a.size());
    auto total = sums[0];
    for (size_t i = 1; i < sums.size(); ++i) total = nn::add(total, sums[i]);
    return nn::affine(total, S(1) / count, S(0));
}

template <typename S>
Tensor<S> multi_similarity_batch(const Tensor<S>& emb, const std::vector<int>& groups,
                                 const PairLists& pairs, S alpha) {
    const int k = emb.shape().n;

    // class scores: cosine similarity of each cell to each group centroid
    std::vector<int> ids = groups;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    const int g = static_cast<int>(ids.size());
    std::vector<int> labels(k);
    Vec<S> avg = Vec<S>::Zero(g * k);
    std::vector<int> counts(g, 0);
    for (int i = 0; i < k; ++i) {
        labels[i] = int(std::lower_bound(ids.begin(), ids.end(), groups[i]) - ids.begin());
        ++counts[labels[i]];
    }
    for (int i = 0; i < k; ++i) avg(labels[i] * k + i) = S(1) / S(counts[labels[i]]);
    auto centroids = nn::matmul(Tensor<S>::from({g, k, 1, 1}, std::move(avg)), emb);  // (G, D)
    auto scores = nn::matmul(nn::normalize_rows(emb),
                             nn::transpose2d(nn::normalize_rows(centroids)));  // (K, G)

    auto dis = nn::softmax_ce(scores, labels, /*mean=*/true);

    // own-class score per cell as a (K, 1) column
    Vec<S> onehot = Vec<S>::Zero(k * g);
    for (int i = 0; i < k; ++i) onehot(i * g + labels[i]) = S(1);
    auto own = nn::matmul(nn::mul(scores, Tensor<S>::from({k, g, 1, 1}, std::move(onehot))),
                          Tensor<S>::constant({g, 1, 1, 1}, S(1)));

    // similarity term over sampled same-class ordered pairs plus self-pairs
    std::vector<int> ia = pairs.pos_a, ib = pairs.pos_b;
    for (int j : pairs.pos_b) ia.push_back(j);  // make the pairs ordered both ways
    ib.insert(ib.end(), pairs.pos_a.begin(), pairs.pos_a.end());
    for (int i = 0; i < k; ++i) {
        ia.push_back(i);
        ib.push_back(i);
    }
    auto u = nn::sub(gather_rows(own, ia), gather_rows(own, ib));
    auto denom = nn::affine(nn::relu(u), S(1), alpha);
    auto terms = nn::affine(nn::div(u, denom), S(-1), S(1));  // 1 - u/(relu(u)+alpha)
    auto sim = nn::affine(nn::sum_all(terms), S(1) / (S(2) * S(ia.size())), S(0));

    return nn::add(dis, sim);
}

}  // namespace

template <typename S>
Tensor<S> batch_contrastive_loss(const Tensor<S>& emb, const std::vector<int>& group_ids,
                                 const ContrastiveConfig& cfg, bool* degenerate) {
    require(emb.shape().n == static_cast<int>(group_ids.size()), "ShapeMismatch",
            "batch_contrastive_loss: one group id per embedding row");
    if (degenerate) *degenerate = false;
    if (group_ids.size() < 2) {
        if (degenerate) *degenerate = true;
        return Tensor<S>::zeros({1, 1, 1, 1});
    }
    const auto pairs = sample_pairs(group_ids, cfg.max_pairs, cfg.seed);
    if (pairs.pos_a.empty() && pairs.neg_a.empty()) {
        if (degenerate) *degenerate = true;
        return Tensor<S>::zeros({1, 1, 1, 1});
    }
    if (cfg.kind == ContrastiveKind::PushPull)
        return push_pull_batch(emb, pairs, S(cfg.margin));
    return multi_similarity_batch(emb, group_ids, pairs, S(cfg.alpha));
}

double total_loss(double kp, double contrastive, double type_ce, const LossWeights& w) {
    require(std::isfinite(kp) && std::isfinite(contrastive) && std::isfinite(type_ce),
            "NonFinite", "total_loss: non-finite component");
    return w.w_kp * kp + w.w_contrastive * contrastive + w.w_type * type_ce;
}

template <typename S>
Tensor<S> total_loss_graph(const Tensor<S>& kp, const Tensor<S>& contrastive,
                           const Tensor<S>& type_ce, const LossWeights& w) {
    require(std::isfinite(double(kp.item())) && std::isfinite(double(contrastive.item())) &&
                std::isfinite(double(type_ce.item())),
            "NonFinite", "total_loss: non-finite component");
    return nn::add(nn::add(nn::affine(kp, S(w.w_kp), S(0)),
                           nn::affine(contrastive, S(w.w_contrastive), S(0))),
                   nn::affine(type_ce, S(w.w_type), S(0)));
}

template nn::Tensor<float> spaden_kp_loss_graph(const NetOutputs<float>&, const MaskSet&,
                                                const LossWeights&, KpLossBreakdown*);
template nn::Tensor<double> spaden_kp_loss_graph(const NetOutputs<double>&, const MaskSet&,
                                                 const LossWeights&, KpLossBreakdown*);
template nn::Tensor<float> batch_contrastive_loss(const nn::Tensor<float>&,
                                                  const std::vector<int>&,
                                                  const ContrastiveConfig&, bool*);
template nn::Tensor<double> batch_contrastive_loss(const nn::Tensor<double>&,
                                                   const std::vector<int>&,
                                                   const ContrastiveConfig&, bool*);
template nn::Tensor<float> total_loss_graph(const nn::Tensor<float>&, const nn::Tensor<float>&,
                                            const nn::Tensor<float>&, const LossWeights&);
template nn::Tensor<double> total_loss_graph(const nn::Tensor<double>&,
                                             const nn::Tensor<double>&,
                                             const nn::Tensor<double>&, const LossWeights&);

}  // namespace chartex
