// chartex — command-line front end.
//
// Subcommands: synth, train, predict, eval, calibrate. Every run writes a
// resolved-config snapshot next to its outputs so it can be reproduced
// exactly. Exit codes: 0 success, 2 usage / bad config, 1 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "chartex/core/annotation.hpp"
#include "chartex/core/error.hpp"
#include "chartex/data/pipeline.hpp"
#include "chartex/metrics/metrics.hpp"
#include "chartex/nets/model.hpp"
#include "chartex/nn/params.hpp"
#include "chartex/synth/synthgen.hpp"
#include "chartex/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace chartex;

namespace {

// "a.b.c=value" -> cfg["a"]["b"]["c"] = parsed value (JSON literal if it
// parses, raw string otherwise)
void apply_override(json& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        throw Error("BadConfig", "--set expects dotted.key=value, got '" + kv + "'");
    std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);

    json* node = &cfg;
    size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot - start);
        if (part.empty()) throw Error("BadConfig", "empty key segment in '" + kv + "'");
        if (dot == std::string::npos) {
            json val = json::parse(raw, nullptr, /*allow_exceptions=*/false);
            (*node)[part] = val.is_discarded() ? json(raw) : val;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw Error("IoError", "cannot write " + path.string());
    f << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("IoError", "cannot read " + path.string());
    json j = json::parse(f, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw Error("BadConfig", "invalid JSON in " + path.string());
    return j;
}

// annotation stems in a directory, sorted for deterministic order
std::vector<std::string> annotation_stems(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error("IoError", "not a directory: " + dir.string());
    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".json") continue;
        const std::string s = e.path().stem().string();
        if (s.ends_with(".challenge") || s.ends_with("_config")) continue;
        stems.push_back(s);
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw Error("IoError", "no annotation JSON in " + dir.string());
    return stems;
}

// ---------------- synth ----------------

struct SynthArgs {
    std::string type = "mixed";
    int count = 10;
    std::uint64_t seed = 0;
    std::string out_dir;
    int canvas = 256;
    std::string split = "train";
};

int run_synth(const SynthArgs& a) {
    std::vector<ChartType> cycle;
    if (a.type == "mixed") {
        cycle.assign(kAllChartTypes.begin(), kAllChartTypes.end());
    } else {
        try {
            cycle.push_back(chart_type_from_name(a.type));
        } catch (const Error&) {
            throw Error("BadConfig", "unknown --type '" + a.type + "'");
        }
    }
    fs::create_directories(a.out_dir);

    const fs::path manifest_path = fs::path(a.out_dir) / "manifest.tsv";
    std::vector<ManifestEntry> entries;
    if (fs::exists(manifest_path)) entries = load_manifest(manifest_path.string());

    for (int i = 0; i < a.count; ++i) {
        const ChartType t = cycle[size_t(i) % cycle.size()];
        const std::uint64_t seed = a.seed + std::uint64_t(i);
        ChartSpec spec = sample_spec(t, seed, a.canvas, a.canvas);
        AnnotatedChart chart = generate_chart(spec);
        const std::string stem = std::string(chart_type_name(t)) + "_" + std::to_string(seed);
        save_chart(a.out_dir, stem, chart);
        entries.push_back({stem + ".json", a.split});
    }
    save_manifest(manifest_path.string(), entries);

    write_json(fs::path(a.out_dir) / "synth_config.json",
               json{{"type", a.type},
                    {"count", a.count},
                    {"seed", a.seed},
                    {"canvas", a.canvas},
                    {"split", a.split},
                    {"out_dir", a.out_dir}});
    std::printf("wrote %d charts to %s\n", a.count, a.out_dir.c_str());
    return 0;
}

// ---------------- train ----------------

struct TrainArgs {
    std::string manifest;
    std::string out_dir;
    std::string config_path;
    std::vector<std::string> sets;
    std::string resume;
};

int run_train(const TrainArgs& a) {
    json cfg = a.config_path.empty() ? json::object() : read_json(a.config_path);
    for (const auto& kv : a.sets) apply_override(cfg, kv);
    const TrainConfig tc = train_config_from_json(cfg);  // rejects unknown keys

    fs::create_directories(a.out_dir);
    write_json(fs::path(a.out_dir) / "train_config.json", train_config_to_json(tc));

    const std::string manifest_dir = fs::path(a.manifest).parent_path().string();
    const auto entries = load_manifest(a.manifest);
    const TrainResult r = train(tc, entries, manifest_dir, a.out_dir, a.resume);

    std::printf("epochs         %d\n", r.completed_epochs);
    std::printf("loss           %.6f -> %.6f\n", r.initial_loss, r.final_loss);
    std::printf("best val 6a    %.4f\n", r.best_val_6a);
    std::printf("best ckpt      %s\n", r.best_checkpoint.c_str());
    std::printf("last ckpt      %s\n", r.last_checkpoint.c_str());
    return 0;
}

// ---------------- predict ----------------

struct PredictArgs {
    std::string checkpoint;
    std::string in_dir;
    std::string out_dir;
    int jobs = 1;
    bool oracle_type = false;
    bool oracle_heatmaps = false;
    bool dump_heatmaps = false;
    bool dump_postprocess = false;
    bool challenge_json = false;
};

int run_predict(const PredictArgs& a) {
    if (a.checkpoint.empty() && !a.oracle_heatmaps)
        throw Error("BadConfig", "--checkpoint is required unless --oracle-heatmaps is set");
    if (a.jobs < 1) throw Error("BadConfig", "--jobs must be >= 1");

    const auto stems = annotation_stems(a.in_dir);
    std::vector<AnnotatedChart> charts;
    charts.reserve(stems.size());
    for (const auto& s : stems)
        charts.push_back(load_annotation((fs::path(a.in_dir) / (s + ".json")).string(), true));

    PredictOptions opt;
    opt.oracle_type = a.oracle_type;
    opt.oracle_heatmaps = a.oracle_heatmaps;
    if (!a.checkpoint.empty()) {
        const json meta = read_checkpoint_meta(a.checkpoint);
        if (meta.contains("postprocess")) opt.postprocess = postprocess_from_json(meta["postprocess"]);
    }
    fs::create_directories(a.out_dir);

    std::vector<Prediction> preds;
    if (a.dump_heatmaps || a.dump_postprocess) {
        // debug panels need a per-chart prefix, so run sequentially
        Model<float> model = a.checkpoint.empty() ? Model<float>(BackboneConfig{}, 0)
                                                  : load_model(a.checkpoint);
        for (size_t i = 0; i < charts.size(); ++i) {
            PredictOptions o = opt;
            o.dump_heatmaps = a.dump_heatmaps;
            o.dump_postprocess = a.dump_postprocess;
            o.dump_prefix = (fs::path(a.out_dir) / stems[i]).string();
            preds.push_back(predict_chart(model, charts[i], o));
        }
    } else if (!a.checkpoint.empty()) {
        preds = predict_charts(a.checkpoint, charts, opt, a.jobs);
    } else {
        // oracle mode without a checkpoint: the model is only consulted for
        // its stride, so a default-config instance per worker suffices
        preds.resize(charts.size());
        const int workers = std::max(1, std::min<int>(a.jobs, int(charts.size())));
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                Model<float> model(BackboneConfig{}, 0);
                for (size_t i = size_t(w); i < charts.size(); i += size_t(workers))
                    preds[i] = predict_chart(model, charts[i], opt);
            });
        for (auto& t : pool) t.join();
    }

    int failures = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        save_annotation((fs::path(a.out_dir) / (stems[i] + ".json")).string(), preds[i].chart);
        if (a.challenge_json)
            export_challenge_json(preds[i].chart,
                                  (fs::path(a.out_dir) / (stems[i] + ".challenge.json")).string());
        if (preds[i].failed) {
            ++failures;
            for (const auto& d : preds[i].diagnostics)
                std::fprintf(stderr, "%s: %s\n", stems[i].c_str(), d.c_str());
        }
    }

    write_json(fs::path(a.out_dir) / "predict_config.json",
               json{{"checkpoint", a.checkpoint},
                    {"in", a.in_dir},
                    {"out_dir", a.out_dir},
                    {"jobs", a.jobs},
                    {"oracle_type", a.oracle_type},
                    {"oracle_heatmaps", a.oracle_heatmaps},
                    {"dump_heatmaps", a.dump_heatmaps},
                    {"dump_postprocess", a.dump_postprocess},
                    {"challenge_json", a.challenge_json},
                    {"postprocess", postprocess_to_json(opt.postprocess)}});
    std::printf("predicted %zu charts (%d failed) -> %s\n", preds.size(), failures,
                a.out_dir.c_str());
    return 0;
}

// ---------------- eval ----------------

struct EvalArgs {
    std::string pred_dir;
    std::string gt_dir;
    int jobs = 1;
    std::string out_dir;
};

int run_eval(const EvalArgs& a) {
    if (a.jobs < 1) throw Error("BadConfig", "--jobs must be >= 1");
    const EvalReport report = evaluate(a.pred_dir, a.gt_dir, a.jobs);
    std::fputs(report.table().c_str(), stdout);

    if (!a.out_dir.empty()) {
        fs::create_directories(a.out_dir);
        json per = json::array();
        for (const auto& c : report.per_chart)
            per.push_back({{"id", c.id},
                           {"type", chart_type_name(c.type)},
                           {"6a", c.s6a},
                           {"6b_data", c.s6b_data},
                           {"6b_name", c.s6b_name},
                           {"missing_pred", c.missing_pred}});
        write_json(fs::path(a.out_dir) / "eval_report.json",
                   json{{"overall",
                         {{"count", report.overall.count},
                          {"6a", report.overall.s6a},
                          {"6b_data", report.overall.s6b_data},
                          {"6b_name", report.overall.s6b_name}}},
                        {"per_chart", per}});
        write_json(fs::path(a.out_dir) / "eval_config.json",
                   json{{"pred", a.pred_dir}, {"gt", a.gt_dir}, {"jobs", a.jobs}});
    }
    return 0;
}

// ---------------- calibrate ----------------

struct CalibrateArgs {
    std::string checkpoint;
    std::string data_dir;
    std::string out;  // defaults to rewriting the input checkpoint
};

int run_calibrate(const CalibrateArgs& a) {
    TrainConfig cfg;
    Model<float> model = load_model(a.checkpoint, &cfg);
    json meta = read_checkpoint_meta(a.checkpoint);

    PredictOptions opt;
    opt.keep_heatmaps = true;
    if (meta.contains("postprocess")) opt.postprocess = postprocess_from_json(meta["postprocess"]);

    std::vector<Heatmap> fg;
    for (const auto& s : annotation_stems(a.data_dir)) {
        const auto chart =
            load_annotation((fs::path(a.data_dir) / (s + ".json")).string(), true);
        fg.push_back(predict_chart(model, chart, opt).heatmaps.fg_class());
    }

    const PostprocessParams before = opt.postprocess;
    const PostprocessParams after = calibrate_thresholds(fg, before);
    meta["postprocess"] = postprocess_to_json(after);

    const std::string out = a.out.empty() ? a.checkpoint : a.out;
    nn::ParamStore<float> store;
    nn::load_checkpoint(a.checkpoint, store);
    nn::save_checkpoint(out, store, meta);

    const fs::path snap = fs::path(out).parent_path() / "calibrate_config.json";
    write_json(snap, json{{"checkpoint", a.checkpoint},
                          {"data", a.data_dir},
                          {"out", out},
                          {"postprocess", postprocess_to_json(after)}});
    std::printf("cc_threshold_factor %.4f -> %.4f (%zu heatmaps) -> %s\n",
                before.cc_threshold_factor, after.cc_threshold_factor, fg.size(), out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"chart data extraction toolkit"};
    app.require_subcommand(1);
    std::string workdir;
    app.add_option("--workdir", workdir, "resolve all relative paths against this directory");

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "generate synthetic charts with annotations");
    synth->add_option("--type", sa.type,
                      "line|scatter|bar_horizontal|bar_vertical|box_vertical|mixed")
        ->capture_default_str();
    synth->add_option("--count", sa.count, "number of charts")->capture_default_str();
    synth->add_option("--seed", sa.seed, "base seed; chart i uses seed+i")->capture_default_str();
    synth->add_option("--out-dir", sa.out_dir, "output directory")->required();
    synth->add_option("--canvas", sa.canvas, "square canvas size in px")->capture_default_str();
    synth->add_option("--split", sa.split, "manifest split label")->capture_default_str();

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train a model from a manifest");
    train->add_option("--manifest", ta.manifest, "TSV manifest of annotation paths")->required();
    train->add_option("--out-dir", ta.out_dir, "checkpoints and logs go here")->required();
    train->add_option("--config", ta.config_path, "JSON training config");
    train->add_option("--set", ta.sets, "override config values, dotted.key=value");
    train->add_option("--resume", ta.resume, "checkpoint to resume from");

    PredictArgs pa;
    auto* predict = app.add_subcommand("predict", "run inference on annotated images");
    predict->add_option("--checkpoint", pa.checkpoint, "trained checkpoint");
    predict->add_option("--in", pa.in_dir, "directory of annotation JSON (with images)")
        ->required();
    predict->add_option("--out-dir", pa.out_dir, "predictions go here")->required();
    predict->add_option("--jobs", pa.jobs, "parallel workers; results independent of N")
        ->capture_default_str();
    predict->add_flag("--oracle-type", pa.oracle_type, "use the annotated chart type");
    predict->add_flag("--oracle-heatmaps", pa.oracle_heatmaps,
                      "inject ground-truth masks as predicted heatmaps");
    predict->add_flag("--dump-heatmaps", pa.dump_heatmaps, "write per-view heatmap panels");
    predict->add_flag("--dump-postprocess", pa.dump_postprocess,
                      "write candidate-extraction debug panels");
    predict->add_flag("--challenge-json", pa.challenge_json,
                      "also write challenge-scorer-shaped JSON");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
    eval->add_option("--pred", ea.pred_dir, "directory of predicted annotations")->required();
    eval->add_option("--gt", ea.gt_dir, "directory of ground-truth annotations")->required();
    eval->add_option("--jobs", ea.jobs, "parallel workers; results independent of N")
        ->capture_default_str();
    eval->add_option("--out-dir", ea.out_dir, "also write eval_report.json here");

    CalibrateArgs ca;
    auto* calibrate = app.add_subcommand("calibrate", "refit postprocess thresholds on a dataset");
    calibrate->add_option("--checkpoint", ca.checkpoint, "trained checkpoint")->required();
    calibrate->add_option("--data", ca.data_dir, "annotation directory to calibrate on")
        ->required();
    calibrate->add_option("--out", ca.out, "output checkpoint (default: rewrite input)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exits 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the message and usage hint
        return 2;
    }

    try {
        if (!workdir.empty()) fs::current_path(workdir);
        if (synth->parsed()) return run_synth(sa);
        if (train->parsed()) return run_train(ta);
        if (predict->parsed()) return run_predict(pa);
        if (eval->parsed()) return run_eval(ea);
        if (calibrate->parsed()) return run_calibrate(ca);
        return 2;  // unreachable with require_subcommand(1)
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());  // what() = "kind: detail"
        return e.kind() == "BadConfig" ? 2 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
