#pragma once

#include "stdnet/data.hpp"
#include "stdnet/losses.hpp"
#include "stdnet/metrics.hpp"
#include "stdnet/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>

namespace stdnet::harness {

struct TrainConfig {
    Real lr = 1e-4; // Adam, beta1 = 0.9, beta2 = 0.999
    int hr_crop = 256;
    int clip_frames = 8; // training window length T
    int steps = 1000;
    int checkpoint_every = 500;
    std::uint64_t seed = 0;
    // Randomized per-step augmentation: spatial flips, time reversal, RGB
    // channel shuffle/affine jitter, and depth-amplitude scaling about the
    // window mean. Off by default.
    bool augment = false;
    // Windows sampled per optimizer step; their losses are averaged.
    int batch = 1;
    losses::LossConfig loss;
    std::string data_dir = "data";
    std::string checkpoint_path = "stdnet.ckpt";
    std::string log_path = "train_log.csv";

    void validate(int scale) const;
};

struct Session {
    ModelConfig model;
    TrainConfig train;
};

Session load_config(const std::filesystem::path& path);
void to_json_file(const std::filesystem::path& path, const Session& s);

// Model plus the trainable difference reconstructor and optimizer state; the
// unit everything below operates on and what a checkpoint file captures.
struct Bundle {
    std::unique_ptr<STDNet> model;
    losses::DiffReconstructor rdf;
    nn::Adam adam;
    std::int64_t step = 0;
    std::string rng_state; // serialized training RNG for bit-exact resume

    static Bundle create(const ModelConfig& cfg, const nn::AdamConfig& adam_cfg);
};

void save_checkpoint(const std::filesystem::path& path, const Bundle& b,
                     const losses::LossConfig& loss_cfg);
Bundle load_checkpoint(const std::filesystem::path& path,
                       losses::LossConfig* loss_cfg_out = nullptr);

struct StepLoss {
    std::int64_t step = 0;
    Real total = 0, rec = 0, sd = 0, td = 0;
};

struct TrainResult {
    std::vector<StepLoss> log;
    std::filesystem::path checkpoint;
};

// Runs (cfg.steps - b.step) optimization steps over random crops of the given
// clips. Deterministic for a fixed seed; resumable from a checkpoint.
TrainResult train(Bundle& b, const std::vector<data::Clip>& clips, const TrainConfig& cfg);

struct EvalRow {
    std::string clip_id;
    std::string method; // "stdnet" or "bicubic"
    metrics::ClipMetrics m;
};

struct EvalResult {
    std::vector<EvalRow> rows;
    metrics::ClipMetrics model_avg;
    metrics::ClipMetrics bicubic_avg;
};

// Per-clip metrics for the model and the bicubic baseline, plus clip-averaged
// rows. Throws when a clip's scale does not match the model.
EvalResult evaluate(const Bundle& b, const std::vector<data::Clip>& clips);
void write_eval_csv(const std::filesystem::path& path, const EvalResult& r);
void print_eval_summary(std::ostream& os, const EvalResult& r);

// Full-clip prediction written as pred/%06d.png in the clip PNG convention,
// plus an x-t slice through the middle row.
void infer(const Bundle& b, const std::filesystem::path& clip_dir,
           const std::filesystem::path& out_dir);

// Total learnable scalar count for a config (network + difference
// reconstructor).
std::size_t param_count(const ModelConfig& cfg);

// Prediction for one clip (helper shared by evaluate/infer/tests).
Tensor predict_clip(const Bundle& b, const data::Clip& clip);

} // namespace stdnet::harness
