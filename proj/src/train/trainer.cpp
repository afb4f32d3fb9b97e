#include "chartex/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <thread>
#include <utility>

#include "chartex/core/annotation.hpp"
#include "chartex/core/error.hpp"
#include "chartex/metrics/metrics.hpp"
#include "chartex/nn/params.hpp"

namespace chartex {

namespace fs = std::filesystem;
using nn::Tensor;

namespace {

uint64_t mix64(uint64_t a, uint64_t b) {
    uint64_t x = a + 0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

const char* contrastive_name(ContrastiveKind k) {
    return k == ContrastiveKind::PushPull ? "push_pull" : "multi_similarity";
}

ContrastiveKind contrastive_from_name(const std::string& s) {
    if (s == "push_pull") return ContrastiveKind::PushPull;
    if (s == "multi_similarity") return ContrastiveKind::MultiSimilarity;
    fail("BadConfig", "unknown contrastive kind '" + s + "'");
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                const std::string& where) {
    require(j.is_object(), "BadConfig", where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(known.begin(), known.end(),
                         [&](const char* k) { return key == k; }) == known.end())
            fail("BadConfig", "unknown key '" + key + "' in " + where);
    }
}

}  // namespace

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    return {
        {"backbone",
         {{"family", family_name(cfg.backbone.family)},
          {"corner_pool", cfg.backbone.use_corner_pool},
          {"dla", cfg.backbone.use_dla},
          {"base_channels", cfg.backbone.base_channels},
          {"n_stages", cfg.backbone.n_stages},
          {"stride", cfg.backbone.stride},
          {"embed_dim", cfg.backbone.embed_dim}}},
        {"loss_weights",
         {{"kp", cfg.loss_weights.w_kp},
          {"contrastive", cfg.loss_weights.w_contrastive},
          {"type", cfg.loss_weights.w_type},
          {"fg", cfg.loss_weights.w_fg},
          {"bg", cfg.loss_weights.w_bg}}},
        {"contrastive", contrastive_name(cfg.contrastive_kind)},
        {"lr", cfg.lr},
        {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"seed", cfg.seed},
        {"calibrate_every", cfg.calibrate_every},
        {"augmentation",
         {{"p_erase_text", cfg.augmentation.p_erase_text},
          {"p_add_text", cfg.augmentation.p_add_text},
          {"max_added_boxes", cfg.augmentation.max_added_boxes},
          {"skew_range", cfg.augmentation.skew_range}}},
        {"max_contrastive_cells", cfg.max_contrastive_cells},
    };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"backbone", "loss_weights", "contrastive", "lr", "epochs", "batch_size",
                "seed", "calibrate_every", "augmentation", "max_contrastive_cells"},
               "train config");
    TrainConfig cfg;
    if (j.contains("backbone")) {
        const auto& b = j.at("backbone");
        check_keys(b, {"family", "corner_pool", "dla", "base_channels", "n_stages", "stride",
                       "embed_dim"},
                   "backbone");
        if (b.contains("family")) cfg.backbone.family = family_from_name(b.at("family"));
        cfg.backbone.use_corner_pool = b.value("corner_pool", cfg.backbone.use_corner_pool);
        cfg.backbone.use_dla = b.value("dla", cfg.backbone.use_dla);
        cfg.backbone.base_channels = b.value("base_channels", cfg.backbone.base_channels);
        cfg.backbone.n_stages = b.value("n_stages", cfg.backbone.n_stages);
        cfg.backbone.stride = b.value("stride", cfg.backbone.stride);
        cfg.backbone.embed_dim = b.value("embed_dim", cfg.backbone.embed_dim);
    }
    if (j.contains("loss_weights")) {
        const auto& w = j.at("loss_weights");
        check_keys(w, {"kp", "contrastive", "type", "fg", "bg"}, "loss_weights");
        cfg.loss_weights.w_kp = w.value("kp", cfg.loss_weights.w_kp);
        cfg.loss_weights.w_contrastive = w.value("contrastive", cfg.loss_weights.w_contrastive);
        cfg.loss_weights.w_type = w.value("type", cfg.loss_weights.w_type);
        cfg.loss_weights.w_fg = w.value("fg", cfg.loss_weights.w_fg);
        cfg.loss_weights.w_bg = w.value("bg", cfg.loss_weights.w_bg);
    }
    if (j.contains("contrastive"))
        cfg.contrastive_kind = contrastive_from_name(j.at("contrastive"));
    cfg.lr = j.value("lr", cfg.lr);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.calibrate_every = j.value("calibrate_every", cfg.calibrate_every);
    if (j.contains("augmentation")) {
        const auto& a = j.at("augmentation");
        check_keys(a, {"p_erase_text", "p_add_text", "max_added_boxes", "skew_range"},
                   "augmentation");
        cfg.augmentation.p_erase_text = a.value("p_erase_text", cfg.augmentation.p_erase_text);
        cfg.augmentation.p_add_text = a.value("p_add_text", cfg.augmentation.p_add_text);
        cfg.augmentation.max_added_boxes =
            a.value("max_added_boxes", cfg.augmentation.max_added_boxes);
        cfg.augmentation.skew_range = a.value("skew_range", cfg.augmentation.skew_range);
    }
    cfg.max_contrastive_cells = j.value("max_contrastive_cells", cfg.max_contrastive_cells);
    require(cfg.valid(), "BadConfig", "train config violates invariants");
    return cfg;
}

nlohmann::json postprocess_to_json(const PostprocessParams& p) {
    return {{"top_k", p.top_k},
            {"cc_threshold_factor", p.cc_threshold_factor},
            {"color_discard_factor", p.color_discard_factor},
            {"scatter_keep_factor", p.scatter_keep_factor}};
}

PostprocessParams postprocess_from_json(const nlohmann::json& j) {
    check_keys(j, {"top_k", "cc_threshold_factor", "color_discard_factor",
                   "scatter_keep_factor"},
               "postprocess");
    PostprocessParams p;
    p.top_k = j.value("top_k", p.top_k);
    p.cc_threshold_factor = j.value("cc_threshold_factor", p.cc_threshold_factor);
    p.color_discard_factor = j.value("color_discard_factor", p.color_discard_factor);
    p.scatter_keep_factor = j.value("scatter_keep_factor", p.scatter_keep_factor);
    require(p.valid(), "BadConfig", "postprocess params violate invariants");
    return p;
}

// ---- optimizer state <-> checkpoint-format sidecar ----

namespace {

void save_optimizer(const std::string& path, nn::Adam<float>& adam) {
    nn::ParamStore<float> store;
    for (auto& [name, mv] : adam.state()) {
        store.buffer("m." + name, static_cast<int>(mv.first.size()), 0.f) = mv.first;
        store.buffer("v." + name, static_cast<int>(mv.second.size()), 0.f) = mv.second;
    }
    nn::save_checkpoint(path, store, {{"t", adam.step_count()}});
}

void load_optimizer(const std::string& path, nn::Adam<float>& adam) {
    nn::ParamStore<float> store;
    const auto meta = nn::load_checkpoint(path, store);
    adam.set_step_count(meta.at("t").get<int>());
    for (auto& [name, buf] : store.buffers()) {
        require(name.size() > 2 && name[1] == '.' && (name[0] == 'm' || name[0] == 'v'),
                "BadCheckpoint", path + ": unexpected optimizer entry '" + name + "'");
        auto& mv = adam.state()[name.substr(2)];
        (name[0] == 'm' ? mv.first : mv.second) = buf;
    }
}

struct LoadedChart {
    AnnotatedChart chart;
    std::string id;
};

void load_split(const std::vector<ManifestEntry>& manifest, const std::string& manifest_dir,
                const std::string& split, std::vector<LoadedChart>& out) {
    for (const ManifestEntry& e : manifest) {
        if (e.split != split) continue;
        const fs::path p = fs::path(manifest_dir) / e.annotation_path;
        out.push_back({load_annotation(p.string(), true), p.stem().string()});
    }
}

nlohmann::json checkpoint_meta(const TrainConfig& cfg, int epoch, double best_6a,
                               const PostprocessParams& post, double initial_loss) {
    return {{"config", train_config_to_json(cfg)},
            {"epoch", epoch},
            {"best_val_6a", best_6a},
            {"postprocess", postprocess_to_json(post)},
            {"initial_loss", initial_loss}};
}

}  // namespace

// ---- inference chain ----

namespace {

// one-hot rows by nearest ground-truth keypoint (oracle-heatmap mode)
MatX<double> oracle_embeddings(const std::vector<CandidatePoint>& cands, const MaskSet& masks) {
    int n_groups = 0;
    for (const KpCell& k : masks.kp_cells) n_groups = std::max(n_groups, k.group_id + 1);
    MatX<double> emb = MatX<double>::Zero(static_cast<Eigen::Index>(cands.size()),
                                          std::max(1, n_groups));
    for (std::size_t i = 0; i < cands.size(); ++i) {
        double best = std::numeric_limits<double>::max();
        int group = 0;
        for (const KpCell& k : masks.kp_cells) {
            const double dx = k.cx + masks.offset_x(k.cy, k.cx) - cands[i].x;
            const double dy = k.cy + masks.offset_y(k.cy, k.cx) - cands[i].y;
            const double d2 = dx * dx + dy * dy;
            if (d2 < best) {
                best = d2;
                group = k.group_id;
            }
        }
        emb(static_cast<Eigen::Index>(i), group) = 1.0;
    }
    return emb;
}

std::vector<std::array<double, 3>> mean_patch_colors(const RgbImage& image,
                                                     const std::vector<Rect>& patches) {
    std::vector<std::array<double, 3>> out;
    for (const Rect& r : patches) {
        std::array<double, 3> acc{};
        int n = 0;
        for (int y = static_cast<int>(r.y0); y <= static_cast<int>(r.y1); ++y)
            for (int x = static_cast<int>(r.x0); x <= static_cast<int>(r.x1); ++x) {
                if (!image.inside(y, x)) continue;
                const Rgb c = image.at(y, x);
                acc[0] += c.r;
                acc[1] += c.g;
                acc[2] += c.b;
                ++n;
            }
        for (double& v : acc) v /= std::max(1, n);
        out.push_back(acc);
    }
    return out;
}

std::vector<std::array<double, 3>> mean_cluster_colors(
    const std::vector<ChartComponent>& comps, const std::vector<int>& ids,
    const std::vector<CandidatePoint>& cands) {
    std::vector<std::array<double, 3>> out;
    for (int id : ids) {
        std::array<double, 3> acc{};
        int n = 0;
        for (const ChartComponent& c : comps)
            if (c.cluster_id == id)
                for (int m : c.cand_indices) {
                    const Rgb col = cands[static_cast<std::size_t>(m)].rgb;
                    acc[0] += col.r;
                    acc[1] += col.g;
                    acc[2] += col.b;
                    ++n;
                }
        for (double& v : acc) v /= std::max(1, n);
        out.push_back(acc);
    }
    return out;
}

void dump_heatmap_panels(const std::string& prefix, const HeatmapSet& hs) {
    static const char* names[kNumViews] = {"binary_recon", "fg_regress", "bg_regress",
                                           "fg_class", "bg_class"};
    for (int v = 0; v < kNumViews; ++v)
        write_gray_png(prefix + "_" + names[v] + ".png", hs.act[v].grid);
}

}  // namespace

Prediction predict_chart(Model<float>& model, const AnnotatedChart& chart,
                         const PredictOptions& opt) {
    Prediction pred;
    pred.predicted_type = chart.chart_type;
    try {
        require(opt.postprocess.valid(), "BadConfig", "predict: postprocess params");
        require(!chart.image.empty(), "MissingImage", "predict: chart carries no raster");
        nn::NoGradGuard ng;

        HeatmapSet hs;
        NetOutputs<float> out;
        MaskSet oracle_masks;
        if (opt.oracle_heatmaps) {
            oracle_masks = build_mask_set(chart, model.config().stride);
            hs = oracle_heatmaps(oracle_masks, chart.chart_type);
        } else {
            out = model.forward(image_to_tensor<float>(chart.image), false);
            hs = to_heatmap_set(out, model.config().stride);
        }
        const ChartType type = opt.oracle_type || opt.oracle_heatmaps ? chart.chart_type
                                                                      : hs.predicted_type();
        pred.predicted_type = type;
        if (opt.keep_heatmaps) pred.heatmaps = hs;
        if (opt.dump_heatmaps && !opt.dump_prefix.empty())
            dump_heatmap_panels(opt.dump_prefix, hs);

        auto before = extract_candidates(hs.fg_class(), hs.offset_x, hs.offset_y, chart.image,
                                         opt.postprocess);
        std::vector<Rect> patches;
        for (const LegendPair& lp : chart.legend_pairs) patches.push_back(lp.patch_bbox);
        const auto filtered =
            color_filter(before, chart.image, chart.plot_bbox, patches, opt.postprocess);
        const std::vector<CandidatePoint>& cands = filtered.kept;
        if (opt.dump_postprocess && !opt.dump_prefix.empty())
            dump_candidates_debug(opt.dump_prefix, hs.fg_class(), before, cands,
                                  opt.postprocess);

        MatX<double> emb;
        std::vector<nn::CellRef> cells;
        for (const CandidatePoint& c : cands) cells.push_back({0, c.cell_y, c.cell_x});
        if (opt.oracle_heatmaps) {
            emb = oracle_embeddings(cands, oracle_masks);
        } else {
            emb = MatX<double>::Zero(static_cast<Eigen::Index>(cands.size()),
                                     model.config().embed_dim);
            if (!cands.empty()) {
                const auto rows = model.embeddings_at(out, cells);
                for (Eigen::Index i = 0; i < emb.rows(); ++i)
                    for (int d = 0; d < model.config().embed_dim; ++d)
                        emb(i, d) = rows.at(static_cast<int>(i), d, 0, 0);
            }
        }

        const auto clusters = cluster_keypoints(emb, opt.cluster);
        auto rec = reconstruct_components(clusters, hs, type, cands,
                                          opt.postprocess.scatter_keep_factor);
        pred.diagnostics = rec.diagnostics;

        std::vector<int> matches;
        const auto ids = component_cluster_ids(rec.components);
        if (!chart.legend_pairs.empty() && !ids.empty()) {
            if (opt.oracle_heatmaps) {
                matches = match_colors(mean_cluster_colors(rec.components, ids, cands),
                                       mean_patch_colors(chart.image, patches));
            } else {
                const int d = model.config().embed_dim;
                const float s = static_cast<float>(model.config().stride);
                MatX<double> cl(static_cast<Eigen::Index>(ids.size()), d);
                for (std::size_t k = 0; k < ids.size(); ++k) {
                    std::vector<nn::CellRef> member_cells;
                    for (const ChartComponent& c : rec.components)
                        if (c.cluster_id == ids[k])
                            for (int m : c.cand_indices) member_cells.push_back(cells[m]);
                    const auto e = model.cluster_embedding(out, member_cells);
                    for (int j = 0; j < d; ++j) cl(static_cast<Eigen::Index>(k), j) = e.at(0, j, 0, 0);
                }
                MatX<double> pe(static_cast<Eigen::Index>(patches.size()), d);
                for (std::size_t k = 0; k < patches.size(); ++k) {
                    const Rect& r = patches[k];
                    const auto e =
                        model.patch_embedding(out, r.x0 / s, r.y0 / s, r.x1 / s, r.y1 / s);
                    for (int j = 0; j < d; ++j) pe(static_cast<Eigen::Index>(k), j) = e.at(0, j, 0, 0);
                }
                matches = match_embeddings(cl, pe);
            }
        }
        name_components(rec.components, matches, chart.legend_pairs, chart.text_boxes);

        pred.chart = assemble_prediction(type, rec.components, chart.axis_ticks,
                                         chart.text_boxes, chart.plot_bbox);
        pred.chart.image_file = chart.image_file;
    } catch (const Error& e) {
        pred.failed = true;
        pred.chart = AnnotatedChart{};
        pred.chart.chart_type = pred.predicted_type;
        pred.diagnostics.push_back(std::string("stage failure: ") + e.what());
    }
    return pred;
}

nlohmann::json read_checkpoint_meta(const std::string& checkpoint_path) {
    std::ifstream in(checkpoint_path, std::ios::binary);
    require(static_cast<bool>(in), "MissingFile", checkpoint_path);
    char magic[4];
    in.read(magic, 4);
    require(in && std::equal(magic, magic + 4, nn::kCheckpointMagic), "BadCheckpoint",
            checkpoint_path + ": wrong magic");
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    require(version == nn::kCheckpointVersion, "BadCheckpoint",
            checkpoint_path + ": unsupported version");
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    require(in && hlen > 0 && hlen < (1ull << 31), "BadCheckpoint",
            checkpoint_path + ": header length");
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    require(static_cast<bool>(in), "BadCheckpoint", checkpoint_path + ": truncated header");
    return nlohmann::json::parse(htext).at("meta");
}

Model<float> load_model(const std::string& checkpoint_path, TrainConfig* cfg_out) {
    nn::ParamStore<float> loaded;
    const auto meta = nn::load_checkpoint(checkpoint_path, loaded);
    require(meta.contains("config"), "BadCheckpoint",
            checkpoint_path + ": missing train config");
    const TrainConfig cfg = train_config_from_json(meta.at("config"));
    if (cfg_out) *cfg_out = cfg;
    Model<float> model(cfg.backbone, cfg.seed);
    model.params().entries() = std::move(loaded.entries());
    model.params().buffers() = std::move(loaded.buffers());
    return model;
}

std::vector<Prediction> predict_charts(const std::string& checkpoint_path,
                                       const std::vector<AnnotatedChart>& charts,
                                       const PredictOptions& opt, int jobs) {
    require(jobs >= 1, "BadConfig", "predict_charts: jobs must be >= 1");
    std::vector<Prediction> out(charts.size());
    const int workers = std::min<int>(jobs, std::max<std::size_t>(charts.size(), 1));
    auto run = [&](int w) {
        Model<float> model = load_model(checkpoint_path);
        for (std::size_t i = w; i < charts.size(); i += workers)
            out[i] = predict_chart(model, charts[i], opt);
    };
    if (workers == 1) {
        run(0);
        return out;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                run(w);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

// ---- training loop ----

TrainResult train(const TrainConfig& cfg, const std::vector<ManifestEntry>& manifest,
                  const std::string& manifest_dir, const std::string& out_dir,
                  const std::string& resume_from) {
    require(cfg.valid(), "BadConfig", "train: config violates invariants");

    std::vector<LoadedChart> train_set, val_set;
    load_split(manifest, manifest_dir, "train", train_set);
    load_split(manifest, manifest_dir, "val", val_set);
    require(!train_set.empty(), "BadConfig", "train: manifest has no train entries");
    if (val_set.empty())  // score on a small train prefix rather than nothing
        val_set.assign(train_set.begin(),
                       train_set.begin() + std::min<std::size_t>(train_set.size(), 16));

    fs::create_directories(out_dir);
    const std::string last_path = (fs::path(out_dir) / "last.ckpt").string();
    const std::string best_path = (fs::path(out_dir) / "best.ckpt").string();
    const std::string log_path = (fs::path(out_dir) / "train_log.jsonl").string();

    Model<float> model(cfg.backbone, cfg.seed);
    nn::Adam<float> adam(static_cast<float>(cfg.lr));
    PostprocessParams post;
    TrainResult result;
    result.best_checkpoint = best_path;
    result.last_checkpoint = last_path;
    int start_epoch = 0;
    bool have_initial = false;

    if (!resume_from.empty()) {
        nn::ParamStore<float> loaded;
        const auto meta = nn::load_checkpoint(resume_from, loaded);
        // the schedule may be extended on resume; everything else must match
        nlohmann::json was = meta.at("config"), want = train_config_to_json(cfg);
        was.erase("epochs");
        want.erase("epochs");
        require(was == want, "BadConfig",
                "resume: checkpoint was trained with a different config");
        model.params().entries() = std::move(loaded.entries());
        model.params().buffers() = std::move(loaded.buffers());
        start_epoch = meta.at("epoch").get<int>();
        result.best_val_6a = meta.at("best_val_6a").get<double>();
        post = postprocess_from_json(meta.at("postprocess"));
        result.initial_loss = meta.at("initial_loss").get<double>();
        have_initial = true;
        const fs::path opt_path = fs::path(resume_from).replace_extension(".opt");
        if (fs::exists(opt_path)) load_optimizer(opt_path.string(), adam);
    }

    std::ofstream log(log_path, std::ios::app);
    require(static_cast<bool>(log), "WriteFailed", log_path);

    ContrastiveConfig ccfg;
    ccfg.kind = cfg.contrastive_kind;

    int global_step = start_epoch == 0
                          ? 0
                          : start_epoch * ((static_cast<int>(train_set.size()) +
                                            cfg.batch_size - 1) /
                                           cfg.batch_size);
    for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
        std::mt19937_64 erng(mix64(cfg.seed, static_cast<uint64_t>(epoch)));
        std::vector<int> order(train_set.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), erng);

        EpochStats es;
        es.epoch = epoch;
        int n_images = 0;

        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
            const int step = static_cast<int>(b0) / cfg.batch_size;
            const std::size_t b1 =
                std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
            model.params().zero_grads();

            Tensor<float> batch_loss;
            double kp_sum = 0, con_sum = 0, type_sum = 0;
            KpLossBreakdown bd_sum;
            int degenerate = 0;
            for (std::size_t bi = b0; bi < b1; ++bi) {
                const AnnotatedChart& chart = train_set[static_cast<std::size_t>(order[bi])].chart;
                TrainingExample ex = build_training_example(chart, cfg.augmentation, erng,
                                                            cfg.backbone.stride);
                auto img = image_to_tensor<float>(ex.image);
                auto net = model.forward(img, true);

                KpLossBreakdown bd;
                auto kp = spaden_kp_loss_graph(net, ex.masks, cfg.loss_weights, &bd);

                std::vector<nn::CellRef> cells;
                std::vector<int> gids;
                {
                    std::vector<std::size_t> pick(ex.masks.kp_cells.size());
                    std::iota(pick.begin(), pick.end(), 0u);
                    if (static_cast<int>(pick.size()) > cfg.max_contrastive_cells) {
                        std::shuffle(pick.begin(), pick.end(), erng);
                        pick.resize(static_cast<std::size_t>(cfg.max_contrastive_cells));
                        std::sort(pick.begin(), pick.end());
                    }
                    for (std::size_t p : pick) {
                        const KpCell& k = ex.masks.kp_cells[p];
                        cells.push_back({0, k.cy, k.cx});
                        gids.push_back(k.group_id);
                    }
                }
                ccfg.seed = mix64(mix64(cfg.seed, static_cast<uint64_t>(epoch)),
                                  static_cast<uint64_t>(global_step) * 131u + (bi - b0));
                bool degen = false;
                auto emb = model.embeddings_at(net, cells);
                auto con = batch_contrastive_loss(emb, gids, ccfg, &degen);
                degenerate += degen ? 1 : 0;

                auto tce = nn::softmax_ce(net.type_logits,
                                          {static_cast<int>(ex.chart_type)});

                const double kp_v = kp.item(), con_v = con.item(), tce_v = tce.item();
                if (!std::isfinite(kp_v) || !std::isfinite(con_v) || !std::isfinite(tce_v))
                    fail("NonFiniteLoss",
                         "epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                             ": kp=" + std::to_string(kp_v) + " contrastive=" +
                             std::to_string(con_v) + " type=" + std::to_string(tce_v));
                auto tot = total_loss_graph(kp, con, tce, cfg.loss_weights);
                batch_loss = batch_loss.defined() ? nn::add(batch_loss, tot) : tot;

                kp_sum += kp_v;
                con_sum += con_v;
                type_sum += tce_v;
                bd_sum.binary_recon += bd.binary_recon;
                bd_sum.fg_regress += bd.fg_regress;
                bd_sum.bg_regress += bd.bg_regress;
                bd_sum.fg_class += bd.fg_class;
                bd_sum.bg_class += bd.bg_class;
                bd_sum.offset += bd.offset;
            }
            const int bsz = static_cast<int>(b1 - b0);
            auto loss = nn::affine(batch_loss, 1.f / static_cast<float>(bsz), 0.f);
            const double loss_v = loss.item();
            if (!std::isfinite(loss_v))
                fail("NonFiniteLoss", "epoch " + std::to_string(epoch) + " step " +
                                          std::to_string(step) + ": batch mean non-finite");
            loss.backward();
            adam.step(model.params());
            ++global_step;

            if (!have_initial) {
                result.initial_loss = loss_v;
                have_initial = true;
            }
            result.final_loss = loss_v;
            es.mean_total += loss_v * bsz;
            es.mean_kp += kp_sum;
            es.mean_contrastive += con_sum;
            es.mean_type += type_sum;
            n_images += bsz;

            log << nlohmann::json{
                       {"event", "step"},
                       {"epoch", epoch},
                       {"step", step},
                       {"global_step", global_step},
                       {"loss", loss_v},
                       {"kp", kp_sum / bsz},
                       {"contrastive", con_sum / bsz},
                       {"type_ce", type_sum / bsz},
                       {"views",
                        {{"binary_recon", bd_sum.binary_recon / bsz},
                         {"fg_regress", bd_sum.fg_regress / bsz},
                         {"bg_regress", bd_sum.bg_regress / bsz},
                         {"fg_class", bd_sum.fg_class / bsz},
                         {"bg_class", bd_sum.bg_class / bsz},
                         {"offset", bd_sum.offset / bsz}}},
                       {"degenerate_contrastive", degenerate},
                       {"lr", cfg.lr}}
                       .dump()
                << "\n";
            log.flush();
        }
        es.mean_total /= n_images;
        es.mean_kp /= n_images;
        es.mean_contrastive /= n_images;
        es.mean_type /= n_images;

        // validation pass: mean 6a with the current weights and thresholds
        const bool calibrating = cfg.calibrate_every > 0 && epoch % cfg.calibrate_every == 0;
        PredictOptions vopt;
        vopt.postprocess = post;
        vopt.keep_heatmaps = calibrating;
        std::vector<Heatmap> val_fg;
        double val_6a = 0;
        for (const LoadedChart& lc : val_set) {
            Prediction p = predict_chart(model, lc.chart, vopt);
            if (!p.failed)
                val_6a += score_6a(p.chart.pixel_geometry, lc.chart.pixel_geometry,
                                   lc.chart.chart_type, lc.chart.plot_bbox);
            if (calibrating) val_fg.push_back(p.heatmaps.fg_class());
        }
        val_6a /= static_cast<double>(val_set.size());
        es.val_6a = val_6a;

        if (calibrating) {
            try {
                post = calibrate_thresholds(val_fg, post);
                es.calibrated = true;
            } catch (const Error& e) {
                log << nlohmann::json{{"event", "calibration_skipped"},
                                      {"epoch", epoch},
                                      {"reason", e.what()}}
                           .dump()
                    << "\n";
            }
        }

        const auto meta =
            checkpoint_meta(cfg, epoch, std::max(result.best_val_6a, val_6a), post,
                            result.initial_loss);
        nn::save_checkpoint(last_path, model.params(), meta);
        save_optimizer(fs::path(last_path).replace_extension(".opt").string(), adam);
        if (val_6a > result.best_val_6a || epoch == 1) {
            result.best_val_6a = std::max(result.best_val_6a, val_6a);
            nn::save_checkpoint(best_path, model.params(), meta);
        }
        result.completed_epochs = epoch;
        result.epoch_stats.push_back(es);

        log << nlohmann::json{{"event", "epoch"},
                              {"epoch", epoch},
                              {"mean_total", es.mean_total},
                              {"mean_kp", es.mean_kp},
                              {"mean_contrastive", es.mean_contrastive},
                              {"mean_type", es.mean_type},
                              {"val_6a", val_6a},
                              {"calibrated", es.calibrated},
                              {"cc_threshold_factor", post.cc_threshold_factor}}
                   .dump()
            << "\n";
        log.flush();
    }

    result.postprocess = post;
    if (result.completed_epochs == 0) result.completed_epochs = start_epoch;
    return result;
}

}  // namespace chartex
