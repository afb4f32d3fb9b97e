#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "chartex/losses/losses.hpp"
#include "chartex/mask/maskgen.hpp"
#include "chartex/synth/synthgen.hpp"

using namespace chartex;

namespace {

// central-difference probe of d loss / d leaf at random coordinates
template <typename BuildLoss>
void fd_probe(BuildLoss&& loss_fn, nn::Tensor<double>& leaf, int coords, uint32_t seed,
              double tol = 1e-3) {
    leaf.zero_grad();
    loss_fn().backward();
    nn::Vec<double> ana = leaf.grad();
    std::mt19937 rng(seed);
    const double h = 1e-6;
    int checked = 0;
    for (int trial = 0; trial < coords * 6 && checked < coords; ++trial) {
        const int idx = int(rng() % leaf.val().size());
        const double keep = leaf.val()(idx);
        leaf.val()(idx) = keep + h;
        const double up = loss_fn().item();
        leaf.val()(idx) = keep - h;
        const double dn = loss_fn().item();
        leaf.val()(idx) = keep;
        const double num = (up - dn) / (2 * h);
        if (std::abs(num) < 1e-7 && std::abs(ana(idx)) < 1e-7) continue;
        const double rel =
            std::abs(num - ana(idx)) / std::max({std::abs(num), std::abs(ana(idx)), 1e-12});
        CAPTURE(idx);
        CAPTURE(num);
        CAPTURE(ana(idx));
        CHECK(rel <= tol);
        ++checked;
    }
    CHECK(checked == coords);
}

nn::Tensor<double> random_rows(int k, int d, uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    nn::Vec<double> v(k * d);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
    return nn::Tensor<double>::param({k, d, 1, 1}, std::move(v));
}

MaskSet small_mask_set() {
    const auto spec = sample_spec(ChartType::Line, 404, 128, 128);
    const auto chart = generate_chart(spec);
    return build_mask_set(chart, 4);
}

}  // namespace

TEST_CASE("push-pull loss reproduces the displayed formula") {
    // d_p = d_n with zero margin vanishes for both labels
    for (int y : {0, 1})
        CHECK(push_pull_loss({0.0, y, 0.7, 0.7}) == 0.0);
    // hand evaluation: (max(0, 0.5 - 0.2 + 0.3))^2 = 0.36
    CHECK(push_pull_loss({0.3, 0, 0.5, 0.2}) == doctest::Approx(0.36).epsilon(1e-9));
    // similar pair already separated: max(0, -1)^2 = 0
    CHECK(push_pull_loss({0.0, 1, 1.0, 0.0}) == 0.0);
    CHECK(push_pull_loss({0.3, 1, 0.5, 0.2}) == doctest::Approx(0.0));
    CHECK(push_pull_loss({0.3, 1, 0.2, 0.5}) == doctest::Approx(0.36).epsilon(1e-9));
}

TEST_CASE("multi-similarity loss matches hand-evaluated terms") {
    MSParams p;
    p.f = {{0.0, 0.0}};
    p.y = {0};
    auto t = multi_similarity_loss(p);
    CHECK(t.dis == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    // single self-pair: (1/2)(1 - 0/(0+1)) = 0.5
    CHECK(t.sim == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(t.total == doctest::Approx(std::log(2.0) + 0.5).epsilon(1e-9));

    // dominant own-class score drives the discriminative term to zero
    p.f = {{100.0, 0.0}};
    CHECK(multi_similarity_loss(p).dis < 1e-12);
}

TEST_CASE("multi-similarity loss is invariant to batch order") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    MSParams p;
    for (int i = 0; i < 8; ++i) {
        p.f.push_back({dist(rng), dist(rng), dist(rng)});
        p.y.push_back(int(rng() % 3));
    }
    const auto base = multi_similarity_loss(p);

    std::vector<int> order(8);
    for (int i = 0; i < 8; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    MSParams q;
    q.alpha = p.alpha;
    for (int i : order) {
        q.f.push_back(p.f[i]);
        q.y.push_back(p.y[i]);
    }
    const auto perm = multi_similarity_loss(q);
    CHECK(perm.dis == doctest::Approx(base.dis).epsilon(1e-12));
    CHECK(perm.sim == doctest::Approx(base.sim).epsilon(1e-12));
}

TEST_CASE("keypoint loss worked example: flat 0.5 prediction gives ln 2 everywhere") {
    // 100x100 grid with exactly one foreground pixel (9999 background)
    MaskSet target;
    target.fg_class.grid = GridD::Zero(100, 100);
    target.fg_class.grid(40, 60) = 1.0;
    target.bg_class.grid = 1.0 - target.fg_class.grid;
    target.binary_recon = target.fg_class;
    target.fg_regress.grid = GridD::Zero(100, 100);
    target.bg_regress.grid = 1.0 - target.fg_regress.grid;
    target.offset_x = GridD::Zero(100, 100);
    target.offset_y = GridD::Zero(100, 100);
    target.kp_cells.push_back({40, 60, 0, KpRole::Inflection});

    HeatmapSet pred;
    for (int v = 0; v < kNumViews; ++v) {
        pred.logits[v].grid = GridD::Zero(100, 100);
        pred.act[v].grid = GridD::Constant(100, 100, 0.5);
    }
    pred.offset_x = GridD::Zero(100, 100);
    pred.offset_y = GridD::Zero(100, 100);

    LossWeights w;
    const auto b = spaden_kp_loss(pred, target, w);
    // weighted BCE at p = 0.5: (0.99*1 + 0.01*9999) * ln2 / (0.99 + 0.01*9999) = ln2
    CHECK(b.fg_class == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(b.bg_class == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(b.binary_recon == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(b.offset == 0.0);  // pred offsets equal targets
}

TEST_CASE("keypoint loss vanishes on the regression views at an exact match") {
    const MaskSet target = small_mask_set();
    HeatmapSet pred;
    pred.act[1] = target.fg_regress;
    pred.act[2] = target.bg_regress;
    for (int v : {0, 3, 4}) {
        pred.logits[v].grid = GridD::Zero(target.fg_class.height(), target.fg_class.width());
        pred.act[v] = target.fg_class;  // unused by these views' terms
    }
    pred.logits[1] = pred.logits[0];
    pred.logits[2] = pred.logits[0];
    pred.offset_x = target.offset_x;
    pred.offset_y = target.offset_y;

    const auto b = spaden_kp_loss(pred, target, LossWeights{});
    CHECK(b.fg_regress == 0.0);
    CHECK(b.bg_regress == 0.0);
    CHECK(b.offset == 0.0);
}

TEST_CASE("keypoint loss is minimized when predictions sit on the targets") {
    const MaskSet target = small_mask_set();
    const int h = target.fg_class.height(), w = target.fg_class.width();
    auto logit = [](double p) {
        const double q = std::clamp(p, 1e-6, 1.0 - 1e-6);
        return std::log(q / (1.0 - q));
    };
    HeatmapSet ideal;
    const Heatmap* srcs[5] = {&target.binary_recon, &target.fg_regress, &target.bg_regress,
                              &target.fg_class, &target.bg_class};
    for (int v = 0; v < kNumViews; ++v) {
        ideal.act[v] = *srcs[v];
        ideal.logits[v].grid = srcs[v]->grid.unaryExpr(logit);
    }
    ideal.offset_x = target.offset_x;
    ideal.offset_y = target.offset_y;

    HeatmapSet noisy = ideal;
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> jitter(-0.5, 0.5);
    for (int v = 0; v < kNumViews; ++v)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                noisy.logits[v].grid(y, x) += jitter(rng);
                noisy.act[v].grid(y, x) =
                    std::clamp(noisy.act[v].grid(y, x) + 0.2 * jitter(rng), 0.0, 1.0);
            }
    const auto lo = spaden_kp_loss(ideal, target, LossWeights{});
    const auto hi = spaden_kp_loss(noisy, target, LossWeights{});
    CHECK(lo.total < hi.total);
}

TEST_CASE("graph and scalar keypoint losses agree on random predictions") {
    const MaskSet target = small_mask_set();
    const int h = target.fg_class.height(), w = target.fg_class.width();
    std::mt19937 rng(15);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);

    NetOutputs<double> out;
    HeatmapSet plain;
    plain.offset_x = GridD(h, w);
    plain.offset_y = GridD(h, w);
    for (int v = 0; v < kNumViews; ++v) {
        nn::Vec<double> z(h * w);
        for (int i = 0; i < h * w; ++i) z(i) = dist(rng);
        out.logits[v] = nn::Tensor<double>::from({1, 1, h, w}, z);
        out.act[v] = nn::sigmoid(out.logits[v]);
        plain.logits[v].grid = GridD(h, w);
        plain.act[v].grid = GridD(h, w);
        for (int i = 0; i < h * w; ++i) {
            plain.logits[v].grid(i / w, i % w) = z(i);
            plain.act[v].grid(i / w, i % w) = out.act[v].val()(i);
        }
    }
    nn::Vec<double> offs(2 * h * w);
    for (Eigen::Index i = 0; i < offs.size(); ++i) offs(i) = dist(rng);
    out.offset = nn::Tensor<double>::from({1, 2, h, w}, offs);
    for (int i = 0; i < h * w; ++i) {
        plain.offset_x(i / w, i % w) = offs(i);
        plain.offset_y(i / w, i % w) = offs(h * w + i);
    }

    KpLossBreakdown gb;
    auto g = spaden_kp_loss_graph(out, target, LossWeights{}, &gb);
    const auto s = spaden_kp_loss(plain, target, LossWeights{});
    CHECK(g.item() == doctest::Approx(s.total).epsilon(1e-9));
    CHECK(gb.fg_class == doctest::Approx(s.fg_class).epsilon(1e-9));
    CHECK(gb.offset == doctest::Approx(s.offset).epsilon(1e-9));
}

// acceptance: loss gradients vs central differences, 10 coordinates each
TEST_CASE("finite differences validate the keypoint loss gradients") {
    const MaskSet target = small_mask_set();
    const int h = target.fg_class.height(), w = target.fg_class.width();
    std::mt19937 rng(21);
    std::uniform_real_distribution<double> dist(-1.5, 1.5);
    nn::Vec<double> z(7 * h * w);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = dist(rng);
    auto leaf = nn::Tensor<double>::param({1, 7, h, w}, std::move(z));  // 5 views + 2 offsets

    auto loss_fn = [&] {
        NetOutputs<double> out;
        std::vector<nn::CellRef> sites;
        for (int v = 0; v < kNumViews; ++v) {
            sites.clear();
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) sites.push_back({0, y, x});
            // slice channel v as its own (1,1,h,w) map
            auto rows = nn::gather_cells(leaf, sites);  // (hw, 7)
            nn::Vec<double> pick = nn::Vec<double>::Zero(7);
            pick(v) = 1.0;
            auto col = nn::matmul(rows, nn::Tensor<double>::from({7, 1, 1, 1}, pick));
            out.logits[v] = nn::reshape(col, {1, 1, h, w});
            out.act[v] = nn::sigmoid(out.logits[v]);
        }
        std::vector<nn::CellRef> all;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) all.push_back({0, y, x});
        auto rows = nn::gather_cells(leaf, all);
        nn::Vec<double> px = nn::Vec<double>::Zero(7), py = nn::Vec<double>::Zero(7);
        px(5) = 1.0;
        py(6) = 1.0;
        auto ox = nn::reshape(nn::matmul(rows, nn::Tensor<double>::from({7, 1, 1, 1}, px)),
                              {1, 1, h, w});
        auto oy = nn::reshape(nn::matmul(rows, nn::Tensor<double>::from({7, 1, 1, 1}, py)),
                              {1, 1, h, w});
        out.offset = nn::concat_channels(ox, oy);
        return spaden_kp_loss_graph(out, target, LossWeights{}, nullptr);
    };
    fd_probe(loss_fn, leaf, 10, 31);
}

TEST_CASE("contrastive loss handles degenerate inputs") {
    ContrastiveConfig cfg;
    bool degenerate = false;
    auto one = random_rows(1, 4, 3);
    auto loss = batch_contrastive_loss(one, {7}, cfg, &degenerate);
    CHECK(degenerate);
    CHECK(loss.item() == 0.0);

    // two same-group cells with identical embeddings and zero margin
    nn::Vec<double> v(8);
    for (int i = 0; i < 4; ++i) v(i) = v(4 + i) = 0.25 * i;
    auto twin = nn::Tensor<double>::from({2, 4, 1, 1}, std::move(v));
    cfg.margin = 0.0;
    loss = batch_contrastive_loss(twin, {3, 3}, cfg, &degenerate);
    CHECK_FALSE(degenerate);
    CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("separated groups score lower than shuffled labels under the MS loss") {
    nn::Vec<double> v(8);
    v << 1, 0, 1, 0, 0, 1, 0, 1;  // two cells on each axis
    auto emb = nn::Tensor<double>::from({4, 2, 1, 1}, std::move(v));
    ContrastiveConfig cfg;
    cfg.kind = ContrastiveKind::MultiSimilarity;
    const double aligned = batch_contrastive_loss(emb, {0, 0, 1, 1}, cfg).item();
    const double shuffled = batch_contrastive_loss(emb, {0, 1, 0, 1}, cfg).item();
    CHECK(aligned < shuffled);
}

TEST_CASE("contrastive sampling is deterministic for a fixed seed") {
    auto emb = random_rows(80, 6, 55);
    std::vector<int> groups(80);
    for (int i = 0; i < 80; ++i) groups[i] = i < 40 ? 0 : 1;  // 1560 pos pairs > cap
    ContrastiveConfig cfg;
    cfg.seed = 1234;
    const double a = batch_contrastive_loss(emb, groups, cfg).item();
    const double b = batch_contrastive_loss(emb, groups, cfg).item();
    CHECK(a == b);
}

TEST_CASE("finite differences validate the push-pull batch gradients") {
    auto emb = random_rows(12, 5, 61);
    std::vector<int> groups = {0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 0, 1};
    ContrastiveConfig cfg;
    cfg.seed = 5;
    auto loss_fn = [&] { return batch_contrastive_loss(emb, groups, cfg); };
    fd_probe(loss_fn, emb, 10, 71);
}

TEST_CASE("finite differences validate the multi-similarity batch gradients") {
    auto emb = random_rows(10, 4, 63);
    std::vector<int> groups = {0, 0, 0, 1, 1, 2, 2, 2, 1, 0};
    ContrastiveConfig cfg;
    cfg.kind = ContrastiveKind::MultiSimilarity;
    cfg.seed = 6;
    auto loss_fn = [&] { return batch_contrastive_loss(emb, groups, cfg); };
    fd_probe(loss_fn, emb, 10, 73);
}

TEST_CASE("total loss blends components with the 0.7/0.2/0.1 weights") {
    LossWeights w;
    CHECK(total_loss(1, 1, 1, w) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(total_loss(0, 0, 0, w) == 0.0);
    CHECK(total_loss(2, 0.5, 1, w) == doctest::Approx(1.6).epsilon(1e-12));
    // linear in each component at the unit vectors
    CHECK(total_loss(1, 0, 0, w) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(total_loss(0, 1, 0, w) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(total_loss(0, 0, 1, w) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK_THROWS_AS(total_loss(std::nan(""), 0, 0, w), Error);
    CHECK_THROWS_AS(total_loss(0, INFINITY, 0, w), Error);

    auto t = [](double v) { return nn::Tensor<double>::constant({1, 1, 1, 1}, v); };
    CHECK(total_loss_graph(t(2), t(0.5), t(1), w).item() ==
          doctest::Approx(1.6).epsilon(1e-12));
    CHECK_THROWS_AS(total_loss_graph(t(std::nan("")), t(0), t(0), w), Error);
}
