#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "chartex/nets/model.hpp"

using namespace chartex;

namespace {

template <typename S>
nn::Tensor<S> random_image(int h, int w, uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    nn::Vec<S> v(3 * h * w);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = S(dist(rng));
    return nn::Tensor<S>::from({1, 3, h, w}, std::move(v));
}

std::vector<BackboneConfig> all_combos(int base_channels, int stride) {
    std::vector<BackboneConfig> out;
    for (Family f : {Family::HGN, Family::CPN, Family::SPN})
        for (bool cp : {false, true})
            for (bool dla : {false, true}) {
                BackboneConfig c;
                c.family = f;
                c.use_corner_pool = cp;
                c.use_dla = dla;
                c.base_channels = base_channels;
                c.n_stages = 2;
                c.stride = stride;
                c.embed_dim = 8;
                out.push_back(c);
            }
    return out;
}

}  // namespace

TEST_CASE("backbone families produce stride-4 head maps at 256x256") {
    for (Family f : {Family::HGN, Family::CPN, Family::SPN}) {
        BackboneConfig cfg;
        cfg.family = f;
        cfg.base_channels = 8;
        cfg.n_stages = 2;
        cfg.stride = 4;
        Model<float> model(cfg, 1);
        nn::NoGradGuard ng;
        auto img = random_image<float>(256, 256, 7);
        auto out = model.forward(img, false);
        CAPTURE(family_name(f));
        CHECK(out.features.shape() == nn::Shape{1, 8, 64, 64});
        for (int v = 0; v < kNumViews; ++v) {
            CHECK(out.act[v].shape() == nn::Shape{1, 1, 64, 64});
            CHECK(out.logits[v].shape() == nn::Shape{1, 1, 64, 64});
        }
        CHECK(out.offset.shape() == nn::Shape{1, 2, 64, 64});
        CHECK(out.type_logits.shape() == nn::Shape{1, 5, 1, 1});
    }
}

TEST_CASE("untrained heads sit at sigmoid(0) = 0.5 and uniform type scores") {
    BackboneConfig cfg;
    cfg.base_channels = 8;
    cfg.stride = 4;
    Model<float> model(cfg, 3);
    nn::NoGradGuard ng;
    auto out = model.forward(random_image<float>(64, 64, 11), false);
    for (int v = 0; v < kNumViews; ++v) {
        const auto& a = out.act[v].val();
        CHECK(a.minCoeff() == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(a.maxCoeff() == doctest::Approx(0.5).epsilon(1e-12));
    }
    CHECK(out.offset.val().abs().maxCoeff() == 0.0f);
    for (int i = 0; i < 5; ++i) CHECK(out.type_logits.at(0, i, 0, 0) == 0.0f);
}

TEST_CASE("forward pass is deterministic for a fixed seed") {
    BackboneConfig cfg;
    cfg.family = Family::CPN;
    cfg.base_channels = 8;
    Model<float> a(cfg, 42), b(cfg, 42);
    nn::NoGradGuard ng;
    auto img = random_image<float>(64, 64, 5);
    auto oa = a.forward(img, false);
    auto ob = b.forward(img, false);
    CHECK((oa.features.val() == ob.features.val()).all());
    // different seed, different activations
    Model<float> c(cfg, 43);
    auto oc = c.forward(img, false);
    CHECK_FALSE((oa.features.val() == oc.features.val()).all());
}

TEST_CASE("deep aggregation changes parameter count, never head shapes") {
    for (Family f : {Family::HGN, Family::CPN, Family::SPN}) {
        BackboneConfig cfg;
        cfg.family = f;
        cfg.base_channels = 8;
        Model<float> plain(cfg, 1);
        cfg.use_dla = true;
        Model<float> dla(cfg, 1);
        nn::NoGradGuard ng;
        auto img = random_image<float>(64, 64, 9);
        auto op = plain.forward(img, false);
        auto od = dla.forward(img, false);
        CAPTURE(family_name(f));
        CHECK(op.features.shape() == od.features.shape());
        CHECK(dla.params().parameter_count() > plain.params().parameter_count());
    }
}

// acceptance: every {family} x {corner pool} x {aggregation} combination must
// build and run forward and backward
TEST_CASE("all 12 architecture combinations run forward and backward") {
    auto img = random_image<float>(32, 32, 13);
    for (const auto& cfg : all_combos(8, 4)) {
        CAPTURE(family_name(cfg.family));
        CAPTURE(cfg.use_corner_pool);
        CAPTURE(cfg.use_dla);
        Model<float> model(cfg, 2);
        auto out = model.forward(img, true);
        CHECK(out.features.shape() == nn::Shape{1, 8, 8, 8});
        for (int v = 0; v < kNumViews; ++v) CHECK(out.act[v].shape() == nn::Shape{1, 1, 8, 8});
        CHECK(out.offset.shape() == nn::Shape{1, 2, 8, 8});
        CHECK(out.type_logits.shape() == nn::Shape{1, 5, 1, 1});

        // scalar probe loss: mean activation + mean offset + mean type logit
        auto loss = nn::add(
            nn::add(nn::mean_all(out.act[0]), nn::mean_all(out.offset)),
            nn::add(nn::mean_all(out.type_logits), nn::mean_all(out.features)));
        model.params().zero_grads();
        loss.backward();
        double gsum = 0;
        for (auto& [name, e] : model.params().entries())
            if (e.tensor.grad().size()) gsum += double(e.tensor.grad().abs().sum());
        CHECK(std::isfinite(gsum));
        CHECK(gsum > 0.0);
    }
}

TEST_CASE("embedding map has shape (1, D, H', W')") {
    BackboneConfig cfg;
    cfg.base_channels = 8;
    cfg.embed_dim = 8;
    Model<float> model(cfg, 5);
    nn::NoGradGuard ng;
    auto out = model.forward(random_image<float>(32, 32, 3), false);
    auto emb = model.embedding_map(out);
    CHECK(emb.shape() == nn::Shape{1, 8, 8, 8});
}

TEST_CASE("embeddings_at equals sampling the full embedding map") {
    BackboneConfig cfg;
    cfg.base_channels = 8;
    cfg.embed_dim = 8;
    Model<float> model(cfg, 6);
    nn::NoGradGuard ng;
    auto out = model.forward(random_image<float>(32, 32, 17), false);
    auto full = model.embedding_map(out);
    std::vector<nn::CellRef> cells = {{0, 0, 0}, {0, 3, 5}, {0, 7, 7}, {0, 2, 2}};
    auto picked = model.embeddings_at(out, cells);
    for (size_t i = 0; i < cells.size(); ++i)
        for (int d = 0; d < 8; ++d)
            CHECK(picked.at(int(i), d, 0, 0) ==
                  doctest::Approx(full.at(0, d, cells[i].y, cells[i].x)).epsilon(1e-5));
}

// the attended sum runs over all five views with shared key/value projections,
// so relabeling the views cannot change the fused embedding
TEST_CASE("fused embeddings are invariant to view permutation") {
    BackboneConfig cfg;
    cfg.base_channels = 8;
    cfg.embed_dim = 8;
    Model<float> model(cfg, 8);
    nn::NoGradGuard ng;
    auto out = model.forward(random_image<float>(32, 32, 23), false);
    std::vector<nn::CellRef> cells = {{0, 1, 1}, {0, 4, 6}};
    auto base = model.embeddings_at(out, cells);

    NetOutputs<float> shuffled = out;
    std::array<int, kNumViews> perm = {4, 2, 0, 3, 1};
    for (int v = 0; v < kNumViews; ++v) {
        shuffled.act[v] = out.act[perm[v]];
        shuffled.logits[v] = out.logits[perm[v]];
    }
    auto permuted = model.embeddings_at(shuffled, cells);
    for (int i = 0; i < 2; ++i)
        for (int d = 0; d < 8; ++d)
            CHECK(permuted.at(i, d, 0, 0) ==
                  doctest::Approx(base.at(i, d, 0, 0)).epsilon(1e-6));
}

// acceptance: gradient of a scalar loss through the embedding map matches
// central finite differences at 10 random coordinates, rel. err <= 1e-3
TEST_CASE("finite differences validate gradients through the embedding map") {
    BackboneConfig cfg;
    cfg.base_channels = 8;
    cfg.embed_dim = 4;
    cfg.n_stages = 1;
    Model<double> model(cfg, 9);

    auto img = random_image<double>(16, 16, 31);
    auto probe_vals = [] {
        std::mt19937 rng(77);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        nn::Vec<double> v(4 * 4 * 4);
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
        return v;
    }();

    auto loss_fn = [&]() {
        auto out = model.forward(img, false);
        auto emb = model.embedding_map(out);  // (1, 4, 4, 4)
        auto probe = nn::Tensor<double>::from({1, 4, 4, 4}, probe_vals);
        return nn::mean_all(nn::mul(emb, probe));
    };

    model.params().zero_grads();
    loss_fn().backward();

    // probe 10 random parameter coordinates spread across distinct tensors
    std::mt19937 rng(123);
    auto& entries = model.params().entries();
    std::vector<std::string> names;
    for (auto& [name, e] : entries) names.push_back(name);
    int checked = 0;
    const double h = 1e-6;
    for (int trial = 0; trial < 60 && checked < 10; ++trial) {
        auto& name = names[rng() % names.size()];
        auto& t = entries[name].tensor;
        const int idx = int(rng() % t.val().size());
        const double ana = t.grad()(idx);
        const double keep = t.val()(idx);
        t.val()(idx) = keep + h;
        const double up = loss_fn().item();
        t.val()(idx) = keep - h;
        const double dn = loss_fn().item();
        t.val()(idx) = keep;
        const double num = (up - dn) / (2 * h);
        if (std::abs(num) < 1e-7 && std::abs(ana) < 1e-7) continue;  // below FD noise floor
        const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-12});
        CAPTURE(name);
        CAPTURE(idx);
        CAPTURE(num);
        CAPTURE(ana);
        CHECK(rel <= 1e-3);
        ++checked;
    }
    CHECK(checked == 10);
}

TEST_CASE("patch and cluster descriptors are (1, D) rows") {
    BackboneConfig cfg;
    cfg.base_channels = 8;
    cfg.embed_dim = 8;
    Model<float> model(cfg, 10);
    nn::NoGradGuard ng;
    auto out = model.forward(random_image<float>(32, 32, 41), false);
    auto patch = model.patch_embedding(out, 1.0f, 1.0f, 4.0f, 3.0f);
    CHECK(patch.shape() == nn::Shape{1, 8, 1, 1});
    auto cluster = model.cluster_embedding(out, {{0, 2, 2}, {0, 3, 3}, {0, 4, 4}});
    CHECK(cluster.shape() == nn::Shape{1, 8, 1, 1});
}

TEST_CASE("image_to_tensor scales bytes into [0,1] planes") {
    RgbImage img(4, 6, {0, 0, 0});
    img.set(1, 2, {255, 128, 0});
    auto t = image_to_tensor<float>(img);
    CHECK(t.shape() == nn::Shape{1, 3, 4, 6});
    CHECK(t.at(0, 0, 1, 2) == doctest::Approx(1.0));
    CHECK(t.at(0, 1, 1, 2) == doctest::Approx(128.0 / 255.0));
    CHECK(t.at(0, 2, 1, 2) == doctest::Approx(0.0));
}

TEST_CASE("heatmap bundle detaches graph outputs and picks the argmax type") {
    BackboneConfig cfg;
    cfg.base_channels = 8;
    Model<float> model(cfg, 12);
    nn::NoGradGuard ng;
    auto out = model.forward(random_image<float>(32, 32, 19), false);
    auto hs = to_heatmap_set(out, cfg.stride);
    CHECK(hs.stride == 4);
    CHECK(hs.binary_recon().height() == 8);
    CHECK(hs.binary_recon().width() == 8);
    CHECK(hs.offset_x.rows() == 8);
    for (int v = 0; v < kNumViews; ++v)
        CHECK(hs.act[v].grid(3, 3) == doctest::Approx(out.act[v].at(0, 0, 3, 3)));
    CHECK(hs.predicted_type() == ChartType::Line);  // all-zero logits: first index wins
}

TEST_CASE("model rejects images not divisible by the total downsampling") {
    BackboneConfig cfg;
    cfg.base_channels = 8;
    Model<float> model(cfg, 13);
    nn::NoGradGuard ng;
    CHECK_THROWS_AS(model.forward(random_image<float>(30, 30, 1), false), Error);
}
