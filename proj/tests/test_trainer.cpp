#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chartex/core/annotation.hpp"
#include "chartex/core/error.hpp"
#include "chartex/metrics/metrics.hpp"
#include "chartex/nn/params.hpp"
#include "chartex/synth/synthgen.hpp"
#include "chartex/train/trainer.hpp"

using namespace chartex;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("chartex_trainer_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// tiny backbone so unit runs stay in seconds
TrainConfig micro_config() {
    TrainConfig cfg;
    cfg.backbone.base_channels = 8;
    cfg.backbone.n_stages = 1;
    cfg.backbone.embed_dim = 8;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.seed = 7;
    cfg.lr = 1e-3;
    cfg.max_contrastive_cells = 16;
    return cfg;
}

// writes `count` small line charts and returns manifest entries
std::vector<ManifestEntry> write_corpus(const fs::path& dir, int count,
                                        ChartType type = ChartType::Line) {
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < count; ++i) {
        AnnotatedChart c = generate_chart(sample_spec(type, 100 + i, 128, 128));
        const std::string stem = "c" + std::to_string(i);
        save_chart(dir.string(), stem, c);
        entries.push_back({stem + ".json", "train"});
    }
    return entries;
}

std::vector<nlohmann::json> read_log(const fs::path& p, const std::string& event) {
    std::vector<nlohmann::json> out;
    std::ifstream in(p);
    REQUIRE(static_cast<bool>(in));
    std::string line;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        if (j.at("event") == event) out.push_back(j);
    }
    return out;
}

}  // namespace

TEST_CASE("train config json round-trips and rejects unknown keys") {
    TrainConfig cfg = micro_config();
    cfg.contrastive_kind = ContrastiveKind::MultiSimilarity;
    cfg.backbone.use_corner_pool = true;
    cfg.calibrate_every = 3;
    const TrainConfig back = train_config_from_json(train_config_to_json(cfg));
    CHECK(train_config_to_json(back) == train_config_to_json(cfg));

    auto j = train_config_to_json(cfg);
    j["learning_rate"] = 0.1;  // not a key
    CHECK_THROWS_WITH_AS(static_cast<void>(train_config_from_json(j)),
                         doctest::Contains("unknown key"), Error);

    j = train_config_to_json(cfg);
    j["backbone"]["width"] = 3;
    CHECK_THROWS_AS(static_cast<void>(train_config_from_json(j)), Error);

    j = train_config_to_json(cfg);
    j["lr"] = 0.0;  // violates lr > 0
    CHECK_THROWS_AS(static_cast<void>(train_config_from_json(j)), Error);
    j = train_config_to_json(cfg);
    j["epochs"] = 0;  // violates epochs >= 1
    CHECK_THROWS_AS(static_cast<void>(train_config_from_json(j)), Error);

    // partial configs fill in defaults
    const TrainConfig defaults = train_config_from_json(nlohmann::json::object());
    CHECK(defaults.lr == doctest::Approx(2.5e-4));
    CHECK(defaults.backbone.base_channels == 32);
}

TEST_CASE("oracle-heatmap predictions are near-perfect through the public chain") {
    Model<float> dummy(micro_config().backbone, 0);  // oracle mode never runs forward
    PredictOptions opt;
    opt.oracle_heatmaps = true;
    for (ChartType type : {ChartType::Line, ChartType::BarVertical, ChartType::BoxVertical}) {
        const AnnotatedChart gt = generate_chart(sample_spec(type, 21));
        const Prediction p = predict_chart(dummy, gt, opt);
        const std::string type_name = chart_type_name(type);
        CAPTURE(type_name);
        CHECK(!p.failed);
        CHECK(p.predicted_type == type);
        CHECK(score_6a(p.chart.pixel_geometry, gt.pixel_geometry, type, gt.plot_bbox) >= 0.95);
        CHECK(score_6b_data(p.chart, gt) >= 0.90);
    }
}

TEST_CASE("stage failures yield an empty prediction with a diagnostic") {
    Model<float> dummy(micro_config().backbone, 0);
    PredictOptions opt;
    opt.oracle_heatmaps = true;  // needs GT geometry, which we strip
    AnnotatedChart gt = generate_chart(sample_spec(ChartType::Line, 3));
    gt.pixel_geometry.clear();
    const Prediction p = predict_chart(dummy, gt, opt);
    CHECK(p.failed);
    CHECK(p.chart.data_series.empty());
    REQUIRE(!p.diagnostics.empty());
    CHECK(p.diagnostics.back().find("MissingGeometry") != std::string::npos);

    // invalid postprocess params are a stage failure too, not a crash
    PredictOptions bad;
    bad.postprocess.top_k = 0;
    const Prediction q = predict_chart(dummy, generate_chart(sample_spec(ChartType::Line, 4)),
                                       bad);
    CHECK(q.failed);
}

TEST_CASE("training runs, logs every step, checkpoints, and reproduces bit-for-bit") {
    const fs::path data = fresh_dir("corpus");
    const auto entries = write_corpus(data, 6);
    const TrainConfig cfg = micro_config();

    const fs::path out_a = fresh_dir("run_a");
    const TrainResult a = train(cfg, entries, data.string(), out_a.string());
    CHECK(a.completed_epochs == 2);
    CHECK(std::isfinite(a.initial_loss));
    CHECK(std::isfinite(a.final_loss));
    CHECK(fs::exists(a.last_checkpoint));
    CHECK(fs::exists(a.best_checkpoint));
    CHECK(fs::exists(out_a / "last.opt"));
    REQUIRE(a.epoch_stats.size() == 2);

    const auto steps_a = read_log(out_a / "train_log.jsonl", "step");
    CHECK(static_cast<int>(steps_a.size()) == 2 * 3);  // 6 charts, batch 2, 2 epochs
    for (const auto& s : steps_a) {
        CHECK(std::isfinite(s.at("loss").get<double>()));
        CHECK(s.at("views").contains("offset"));
    }
    CHECK(read_log(out_a / "train_log.jsonl", "epoch").size() == 2);

    // identical config + seed => identical loss curve, to the last bit
    const fs::path out_b = fresh_dir("run_b");
    const TrainResult b = train(cfg, entries, data.string(), out_b.string());
    const auto steps_b = read_log(out_b / "train_log.jsonl", "step");
    REQUIRE(steps_a.size() == steps_b.size());
    for (std::size_t i = 0; i < steps_a.size(); ++i)
        CHECK(steps_a[i].at("loss").get<double>() == steps_b[i].at("loss").get<double>());
    CHECK(a.final_loss == b.final_loss);
}

TEST_CASE("resume continues with the identical next-step loss") {
    const fs::path data = fresh_dir("corpus_resume");
    const auto entries = write_corpus(data, 6);
    TrainConfig cfg = micro_config();

    const fs::path full = fresh_dir("run_full");
    const TrainResult whole = train(cfg, entries, data.string(), full.string());
    const auto steps_full = read_log(full / "train_log.jsonl", "step");

    cfg.epochs = 1;
    const fs::path part = fresh_dir("run_part");
    train(cfg, entries, data.string(), part.string());
    cfg.epochs = 2;  // resume may extend the schedule
    const TrainResult resumed = train(cfg, entries, data.string(), part.string(),
                                      (part / "last.ckpt").string());
    CHECK(resumed.completed_epochs == 2);

    const auto steps_part = read_log(part / "train_log.jsonl", "step");
    REQUIRE(steps_part.size() == steps_full.size());
    for (std::size_t i = 0; i < steps_full.size(); ++i) {
        CAPTURE(i);
        CHECK(steps_full[i].at("loss").get<double>() ==
              steps_part[i].at("loss").get<double>());
    }

    // a genuinely different config must be rejected
    cfg.lr = 9e-3;
    CHECK_THROWS_WITH_AS(static_cast<void>(train(cfg, entries, data.string(), part.string(),
                                                 (part / "last.ckpt").string())),
                         doctest::Contains("different config"), Error);
}

TEST_CASE("poisoned weights abort with NonFiniteLoss and a step diagnostic") {
    const fs::path data = fresh_dir("corpus_nan");
    const auto entries = write_corpus(data, 2);
    TrainConfig cfg = micro_config();
    cfg.epochs = 1;
    const fs::path out = fresh_dir("run_nan");
    train(cfg, entries, data.string(), out.string());

    nn::ParamStore<float> store;
    const auto meta = nn::load_checkpoint((out / "last.ckpt").string(), store);
    store.entries().begin()->second.tensor.val().setConstant(
        std::numeric_limits<float>::quiet_NaN());
    nn::save_checkpoint((out / "last.ckpt").string(), store, meta);

    cfg.epochs = 2;
    try {
        train(cfg, entries, data.string(), out.string(), (out / "last.ckpt").string());
        FAIL("expected NonFiniteLoss");
    } catch (const Error& e) {
        CHECK(e.kind() == "NonFiniteLoss");
        CHECK(std::string(e.what()).find("epoch 2") != std::string::npos);
    }
}

TEST_CASE("prediction is deterministic and independent of the job count") {
    const fs::path data = fresh_dir("corpus_predict");
    const auto entries = write_corpus(data, 4);
    TrainConfig cfg = micro_config();
    cfg.epochs = 1;
    const fs::path out = fresh_dir("run_predict");
    const TrainResult r = train(cfg, entries, data.string(), out.string());

    std::vector<AnnotatedChart> charts;
    for (const auto& e : entries)
        charts.push_back(load_annotation((data / e.annotation_path).string(), true));

    PredictOptions opt;
    const auto one = predict_charts(r.best_checkpoint, charts, opt, 1);
    const auto three = predict_charts(r.best_checkpoint, charts, opt, 3);
    REQUIRE(one.size() == charts.size());
    REQUIRE(three.size() == charts.size());
    for (std::size_t i = 0; i < charts.size(); ++i) {
        CHECK(one[i].failed == three[i].failed);
        CHECK(annotation_equal(one[i].chart, three[i].chart, false));
    }

    Model<float> m1 = load_model(r.best_checkpoint);
    const Prediction p1 = predict_chart(m1, charts[0], opt);
    const Prediction p2 = predict_chart(m1, charts[0], opt);
    CHECK(annotation_equal(p1.chart, p2.chart, false));
}

TEST_CASE("the type-oracle flag overrides the type head") {
    const fs::path data = fresh_dir("corpus_type");
    const auto entries = write_corpus(data, 2);
    TrainConfig cfg = micro_config();
    cfg.epochs = 1;
    const fs::path out = fresh_dir("run_type");
    const TrainResult r = train(cfg, entries, data.string(), out.string());

    // an untrained-ish type head on a box chart may argmax anywhere; the flag
    // must force the reconstruction type either way
    Model<float> model = load_model(r.best_checkpoint);
    const AnnotatedChart box = generate_chart(sample_spec(ChartType::BoxVertical, 5));
    PredictOptions opt;
    opt.oracle_type = true;
    const Prediction p = predict_chart(model, box, opt);
    CHECK(p.predicted_type == ChartType::BoxVertical);
    CHECK(p.chart.chart_type == ChartType::BoxVertical);
}

TEST_CASE("calibration epochs refit the connected-component threshold") {
    const fs::path data = fresh_dir("corpus_cal");
    auto entries = write_corpus(data, 12);
    for (std::size_t i = 8; i < entries.size(); ++i) entries[i].split = "val";
    TrainConfig cfg = micro_config();
    cfg.epochs = 2;
    cfg.calibrate_every = 1;
    const fs::path out = fresh_dir("run_cal");
    const TrainResult r = train(cfg, entries, data.string(), out.string());

    // 4 val charts < 10 samples: calibration must be skipped with a log line,
    // never crash the run
    CHECK(!r.epoch_stats.empty());
    for (const auto& es : r.epoch_stats) CHECK(!es.calibrated);
    CHECK(!read_log(out / "train_log.jsonl", "calibration_skipped").empty());
    CHECK(r.postprocess.cc_threshold_factor == doctest::Approx(0.85));
}
