// stdnet command-line tool: train / eval / infer / analyze / synth / params.
//
// Every subcommand exits 0 on success. Failures print a single line
// "error: <what>" to stderr and exit 1, so scripts can parse the outcome.

#include "stdnet/analysis.hpp"
#include "stdnet/data.hpp"
#include "stdnet/harness.hpp"
#include "stdnet/kernels.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace stdnet;

namespace {

std::vector<data::Clip> load_dataset(const fs::path& root) {
    auto dirs = data::find_clips(root);
    if (dirs.empty())
        throw std::runtime_error("no clips (directories with manifest.json) under " +
                                 root.string());
    std::vector<data::Clip> clips;
    clips.reserve(dirs.size());
    for (const auto& d : dirs) clips.push_back(data::load_clip(d));
    return clips;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& resume, const std::string& data_override) {
    harness::Session s = harness::load_config(config_path);
    if (seed) {
        s.train.seed = *seed;
        s.model.seed = *seed;
    }
    if (!data_override.empty()) s.train.data_dir = data_override;
    s.model.validate();
    s.train.validate(s.model.scale);

    harness::Bundle b = resume.empty()
                            ? harness::Bundle::create(s.model, nn::AdamConfig{s.train.lr})
                            : harness::load_checkpoint(resume);
    if (!resume.empty() && b.model->config().scale != s.model.scale)
        throw std::runtime_error("resume checkpoint scale does not match config");

    auto clips = load_dataset(s.train.data_dir);
    harness::TrainResult r = harness::train(b, clips, s.train);
    if (!r.log.empty()) {
        const auto& last = r.log.back();
        std::cout << "step " << last.step << " total " << last.total << " rec " << last.rec
                  << " sd " << last.sd << " td " << last.td << "\n";
    }
    std::cout << "checkpoint " << r.checkpoint.string() << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& out_csv) {
    harness::Bundle b = harness::load_checkpoint(ckpt);
    auto clips = load_dataset(data_dir);
    harness::EvalResult r = harness::evaluate(b, clips);
    if (!out_csv.empty()) harness::write_eval_csv(out_csv, r);
    harness::print_eval_summary(std::cout, r);
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& clip_dir, const std::string& out_dir) {
    harness::Bundle b = harness::load_checkpoint(ckpt);
    harness::infer(b, clip_dir, out_dir);
    std::cout << "wrote " << (fs::path(out_dir) / "pred").string() << "\n";
    return 0;
}

int cmd_analyze(const std::string& clip_dir, const std::string& out_dir, Real threshold,
                int bins, bool absolute_cm, Real abs_hi_cm) {
    data::Clip clip = data::load_clip(clip_dir);
    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    const auto scale_mode =
        absolute_cm ? analysis::DiffScale::AbsoluteCm : analysis::DiffScale::NormalizedByMaxDepth;

    analysis::SpatialLongtail sp =
        analysis::spatial_longtail_hist(clip.gt, clip.lr, clip.scale, bins, scale_mode, abs_hi_cm);
    analysis::write_histogram_csv(out / "spatial_hist.csv", sp.hist);
    analysis::write_map_png(out / "spatial_diff_map.png", sp.diff_map.frame(0), sp.hist.hi);

    analysis::Histogram t1 =
        analysis::temporal_longtail_hist(clip.gt, 1, bins, scale_mode, abs_hi_cm);
    analysis::Histogram t2 =
        analysis::temporal_longtail_hist(clip.gt, 2, bins, scale_mode, abs_hi_cm);
    analysis::write_histogram_csv(out / "temporal_hist_stride1.csv", t1);
    analysis::write_histogram_csv(out / "temporal_hist_stride2.csv", t2);

    const int mid_row = clip.gt.depth.h() / 2;
    Real max_d = 0;
    for (std::size_t i = 0; i < clip.gt.depth.numel(); ++i)
        max_d = std::max(max_d, clip.gt.depth[i]);
    analysis::write_map_png(out / "xt_slice.png", analysis::xt_slice(clip.gt.depth, mid_row),
                            max_d > 0 ? max_d : 1.0);

    std::cout << "spatial tail mass (>= " << threshold
              << "): " << analysis::longtail_mass(sp.hist, threshold) << "\n"
              << "temporal tail mass stride1: " << analysis::longtail_mass(t1, threshold) << "\n"
              << "temporal tail mass stride2: " << analysis::longtail_mass(t2, threshold) << "\n";
    return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir, int scale,
              std::uint64_t seed, int frames, int size) {
    data::SceneSpec spec;
    if (!spec_path.empty()) {
        spec = data::scene_spec_from_json_file(spec_path);
    } else {
        data::Rng rng(seed);
        spec = data::random_scene_spec(frames, size, size, rng);
    }
    data::SyntheticClip sc = data::make_synthetic_clip(spec);

    data::Clip clip;
    clip.id = fs::path(out_dir).filename().string();
    clip.scale = scale;
    clip.rgb = sc.rgb;
    clip.gt = sc.gt;
    clip.lr = data::synthesize_lr(sc.gt, scale);
    data::save_clip(out_dir, clip);
    std::cout << "wrote clip " << clip.id << " (" << spec.frames << " frames, " << spec.height
              << "x" << spec.width << ", x" << scale << ")\n";
    return 0;
}

int cmd_params(const std::string& config_path) {
    harness::Session s = harness::load_config(config_path);
    s.model.validate();
    std::cout << harness::param_count(s.model) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    kernels::init_from_env();

    CLI::App app{"STDNet: RGB-guided video depth super-resolution"};
    app.require_subcommand(1);

    // train
    std::string train_config, train_resume, train_data;
    std::optional<std::uint64_t> train_seed;
    auto* train = app.add_subcommand("train", "Train a model from a JSON config");
    train->add_option("--config", train_config, "JSON config file")->required();
    train->add_option("--seed", train_seed, "Override config seed");
    train->add_option("--resume", train_resume, "Checkpoint to resume from");
    train->add_option("--data", train_data, "Override the config's data directory");

    // eval
    std::string eval_ckpt, eval_data, eval_out;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against clips");
    eval->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
    eval->add_option("--data", eval_data, "Directory of clip directories")->required();
    eval->add_option("--out", eval_out, "Metrics CSV output path");

    // infer
    std::string infer_ckpt, infer_clip, infer_out;
    auto* infer = app.add_subcommand("infer", "Super-resolve one clip");
    infer->add_option("--ckpt", infer_ckpt, "Checkpoint file")->required();
    infer->add_option("--clip", infer_clip, "Clip directory")->required();
    infer->add_option("--out", infer_out, "Output directory")->required();

    // analyze
    std::string an_clip, an_out;
    Real an_threshold = 0.1;
    int an_bins = 64;
    bool an_abs = false;
    Real an_hi = 100.0;
    auto* analyze = app.add_subcommand("analyze", "Difference histograms and x-t slices");
    analyze->add_option("--clip", an_clip, "Clip directory")->required();
    analyze->add_option("--out", an_out, "Output directory")->required();
    analyze->add_option("--threshold", an_threshold, "Long-tail threshold (default 0.1)");
    analyze->add_option("--bins", an_bins, "Histogram bin count");
    analyze->add_flag("--absolute-cm", an_abs, "Histogram in absolute cm instead of normalized");
    analyze->add_option("--abs-hi-cm", an_hi, "Histogram upper edge in absolute-cm mode");

    // synth
    std::string sy_spec, sy_out;
    int sy_scale = 4, sy_frames = 8, sy_size = 256;
    std::uint64_t sy_seed = 0;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic clip directory");
    synth->add_option("--spec", sy_spec, "Scene spec JSON (random scene when omitted)");
    synth->add_option("--out", sy_out, "Output clip directory")->required();
    synth->add_option("--scale", sy_scale, "LR synthesis factor");
    synth->add_option("--seed", sy_seed, "Random scene seed");
    synth->add_option("--frames", sy_frames, "Random scene frame count");
    synth->add_option("--size", sy_size, "Random scene height/width");

    // params
    std::string pa_config;
    auto* params = app.add_subcommand("params", "Print the learnable parameter count");
    params->add_option("--config", pa_config, "JSON config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(train_config, train_seed, train_resume, train_data);
        if (eval->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_out);
        if (infer->parsed()) return cmd_infer(infer_ckpt, infer_clip, infer_out);
        if (analyze->parsed())
            return cmd_analyze(an_clip, an_out, an_threshold, an_bins, an_abs, an_hi);
        if (synth->parsed())
            return cmd_synth(sy_spec, sy_out, sy_scale, sy_seed, sy_frames, sy_size);
        if (params->parsed()) return cmd_params(pa_config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}
