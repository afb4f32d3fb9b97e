#pragma once

// Training loop binding the nets, losses, and data pipeline: per-step loss
// logging, best-by-validation checkpointing, periodic threshold calibration,
// and the full image -> data-series inference chain.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chartex/core/types.hpp"
#include "chartex/data/pipeline.hpp"
#include "chartex/losses/losses.hpp"
#include "chartex/nets/model.hpp"
#include "chartex/postprocess/postprocess.hpp"
#include "chartex/reconstruct/reconstruct.hpp"

namespace chartex {

struct TrainConfig {
    BackboneConfig backbone;
    LossWeights loss_weights;
    ContrastiveKind contrastive_kind = ContrastiveKind::PushPull;
    double lr = 2.5e-4;
    int epochs = 1;
    int batch_size = 2;
    std::uint64_t seed = 0;
    int calibrate_every = 0;          // epochs between threshold refits; 0 = never
    AugmentationPolicy augmentation;  // raster-only; targets stay untouched
    int max_contrastive_cells = 64;   // KP cells sampled per image for the embedding loss

    bool valid() const {
        return backbone.valid() && augmentation.valid() && lr > 0 && epochs >= 1 &&
               batch_size >= 1 && calibrate_every >= 0 && max_contrastive_cells >= 2;
    }
};

// JSON round-trip used by config files, --set overrides, and checkpoint
// metadata. Unknown keys are rejected (BadConfig).
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

PostprocessParams postprocess_from_json(const nlohmann::json& j);
nlohmann::json postprocess_to_json(const PostprocessParams& p);

struct EpochStats {
    int epoch = 0;  // 1-based
    double mean_total = 0, mean_kp = 0, mean_contrastive = 0, mean_type = 0;
    double val_6a = 0;
    bool calibrated = false;
};

struct TrainResult {
    std::string best_checkpoint;  // <out_dir>/best.ckpt
    std::string last_checkpoint;  // <out_dir>/last.ckpt
    double initial_loss = 0;      // first optimization step (pre-update params)
    double final_loss = 0;        // last optimization step
    double best_val_6a = 0;
    int completed_epochs = 0;
    PostprocessParams postprocess;  // after any calibration
    std::vector<EpochStats> epoch_stats;
};

// Loads every manifest chart, then runs cfg.epochs over the train split: one
// Adam step per batch, a JSONL record per step appended to
// <out_dir>/train_log.jsonl, <out_dir>/last.ckpt (+ last.opt with optimizer
// moments) after every epoch, and <out_dir>/best.ckpt whenever the mean
// validation 6a improves. An empty val split scores on the first (up to) 16
// train charts instead. Every calibrate_every epochs the connected-component
// threshold is refit on validation fg_class heatmaps; too-few samples only
// logs a diagnostic. Per-epoch data order and augmentation draws depend only
// on (seed, epoch), so training is bit-for-bit reproducible and a run resumed
// from last.ckpt continues with the loss the uninterrupted run would have
// produced. resume_from may extend `epochs`, but every other config field
// must match the checkpoint. Throws BadConfig, NonFiniteLoss (with a step
// diagnostic), and annotation-loading errors.
TrainResult train(const TrainConfig& cfg, const std::vector<ManifestEntry>& manifest,
                  const std::string& manifest_dir, const std::string& out_dir,
                  const std::string& resume_from = "");

struct PredictOptions {
    bool oracle_type = false;      // trust chart.chart_type over the type head
    bool oracle_heatmaps = false;  // GT masks as predictions (needs GT geometry)
    PostprocessParams postprocess;
    ClusterParams cluster;
    std::string dump_prefix;  // when set with a flag below, debug PNGs go here
    bool dump_heatmaps = false;
    bool dump_postprocess = false;
    bool keep_heatmaps = false;  // copy the predicted views into the result
};

struct Prediction {
    AnnotatedChart chart;  // predicted data series + pixel geometry
    ChartType predicted_type = ChartType::Line;
    std::vector<std::string> diagnostics;  // dropped clusters, stage failures
    bool failed = false;                   // a stage threw; chart is empty
    HeatmapSet heatmaps;                   // filled when opt.keep_heatmaps
};

// Full inference chain: forward -> heads -> type argmax -> candidate
// extraction on the fg-class activation -> color filter -> embeddings at
// candidate cells -> similarity clustering -> per-type reconstruction ->
// legend matching -> tick-anchored data values. Oracle-heatmap mode swaps the
// forward pass for ground-truth masks, derives one-hot embeddings from the
// nearest GT keypoint's group id, and matches legend entries by mean
// candidate color. Stage errors never propagate; the prediction comes back
// empty with `failed` set and the error in diagnostics.
Prediction predict_chart(Model<float>& model, const AnnotatedChart& chart,
                         const PredictOptions& opt);

// Prediction across charts with `jobs` workers; every worker reconstructs its
// own read-only model from the checkpoint, so results are independent of the
// worker count. jobs < 1 is BadConfig.
std::vector<Prediction> predict_charts(const std::string& checkpoint_path,
                                       const std::vector<AnnotatedChart>& charts,
                                       const PredictOptions& opt, int jobs = 1);

// Builds the model recorded in a checkpoint and loads its weights; the stored
// train config goes to cfg_out when given.
Model<float> load_model(const std::string& checkpoint_path, TrainConfig* cfg_out = nullptr);

// Checkpoint metadata (train config, epoch, calibrated postprocess params)
// without touching the weight blobs.
nlohmann::json read_checkpoint_meta(const std::string& checkpoint_path);

}  // namespace chartex
