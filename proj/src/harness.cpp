#include "stdnet/harness.hpp"
#include "stdnet/analysis.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

namespace stdnet::harness {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate(int scale) const {
    require(lr >= 0.0, "TrainConfig: lr must be >= 0");
    require(hr_crop >= scale && hr_crop % scale == 0,
            "TrainConfig: hr_crop " + std::to_string(hr_crop) + " must be divisible by scale " +
                std::to_string(scale));
    require(clip_frames >= 3, "TrainConfig: clip_frames must be >= 3");
    require(steps >= 0, "TrainConfig: steps must be >= 0");
    require(batch >= 1, "TrainConfig: batch must be >= 1");
    require(checkpoint_every >= 1, "TrainConfig: checkpoint_every must be >= 1");
    loss.validate();
}

// ---------------------------------------------------------------------------
// config JSON

namespace {

json model_to_json(const ModelConfig& c) {
    return json{{"scale", c.scale},
                {"channels", c.channels},
                {"encoder_depth", c.encoder_depth},
                {"dyn_kernel", c.dyn_kernel},
                {"dyn_groups", c.dyn_groups},
                {"deform_kernel", c.deform_kernel},
                {"offset_clamp", c.offset_clamp},
                {"neighbors", c.neighbors},
                {"depth_norm", c.depth_norm},
                {"tie_directions", c.tie_directions},
                {"seed", c.seed}};
}

ModelConfig model_from_json(const json& j) {
    ModelConfig c;
    c.scale = j.value("scale", c.scale);
    c.channels = j.value("channels", c.channels);
    c.encoder_depth = j.value("encoder_depth", c.encoder_depth);
    c.dyn_kernel = j.value("dyn_kernel", c.dyn_kernel);
    c.dyn_groups = j.value("dyn_groups", c.dyn_groups);
    c.deform_kernel = j.value("deform_kernel", c.deform_kernel);
    c.offset_clamp = j.value("offset_clamp", c.offset_clamp);
    c.neighbors = j.value("neighbors", c.neighbors);
    c.depth_norm = j.value("depth_norm", c.depth_norm);
    c.tie_directions = j.value("tie_directions", c.tie_directions);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

json loss_to_json(const losses::LossConfig& c) {
    return json{{"alpha1", c.alpha1}, {"alpha2", c.alpha2},
                {"beta", c.beta},     {"eps", c.eps},
                {"use_sd", c.use_sd}, {"use_td", c.use_td},
                {"mean_normalize", c.mean_normalize}};
}

losses::LossConfig loss_from_json(const json& j) {
    losses::LossConfig c;
    c.alpha1 = j.value("alpha1", c.alpha1);
    c.alpha2 = j.value("alpha2", c.alpha2);
    c.beta = j.value("beta", c.beta);
    c.eps = j.value("eps", c.eps);
    c.use_sd = j.value("use_sd", c.use_sd);
    c.use_td = j.value("use_td", c.use_td);
    c.mean_normalize = j.value("mean_normalize", c.mean_normalize);
    c.validate();
    return c;
}

json train_to_json(const TrainConfig& c) {
    return json{{"lr", c.lr},
                {"hr_crop", c.hr_crop},
                {"clip_frames", c.clip_frames},
                {"steps", c.steps},
                {"augment", c.augment},
                {"batch", c.batch},
                {"checkpoint_every", c.checkpoint_every},
                {"seed", c.seed},
                {"data_dir", c.data_dir},
                {"checkpoint_path", c.checkpoint_path},
                {"log_path", c.log_path},
                {"loss", loss_to_json(c.loss)}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.hr_crop = j.value("hr_crop", c.hr_crop);
    c.clip_frames = j.value("clip_frames", c.clip_frames);
    c.steps = j.value("steps", c.steps);
    c.augment = j.value("augment", c.augment);
    c.batch = j.value("batch", c.batch);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.seed = j.value("seed", c.seed);
    c.data_dir = j.value("data_dir", c.data_dir);
    c.checkpoint_path = j.value("checkpoint_path", c.checkpoint_path);
    c.log_path = j.value("log_path", c.log_path);
    if (j.contains("loss")) c.loss = loss_from_json(j["loss"]);
    return c;
}

} // namespace

Session load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path.string());
    json j = json::parse(in);
    Session s;
    if (j.contains("model")) s.model = model_from_json(j["model"]);
    if (j.contains("train")) s.train = train_from_json(j["train"]);
    s.model.validate();
    s.train.validate(s.model.scale);
    return s;
}

void to_json_file(const fs::path& path, const Session& s) {
    std::ofstream out(path);
    out << json{{"model", model_to_json(s.model)}, {"train", train_to_json(s.train)}}.dump(2)
        << "\n";
    if (!out) throw std::runtime_error("config: cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// bundle / checkpoint

Bundle Bundle::create(const ModelConfig& cfg, const nn::AdamConfig& adam_cfg) {
    Bundle b;
    b.model = std::make_unique<STDNet>(cfg);
    nn::Rng rdf_rng(cfg.seed + 0x9e3779b97f4a7c15ull);
    b.rdf = losses::DiffReconstructor(b.model->params(), cfg.channels, cfg.scale, rdf_rng);
    b.adam = nn::Adam(b.model->params(), adam_cfg);
    std::ostringstream ss;
    ss << nn::Rng(cfg.seed);
    b.rng_state = ss.str();
    return b;
}

namespace {
constexpr char kMagic[9] = "STDNETC1";

void write_raw(std::ofstream& out, const Real* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), std::streamsize(n * sizeof(Real)));
}
void read_raw(std::ifstream& in, Real* p, std::size_t n) {
    in.read(reinterpret_cast<char*>(p), std::streamsize(n * sizeof(Real)));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
}
} // namespace

void save_checkpoint(const fs::path& path, const Bundle& b, const losses::LossConfig& loss_cfg) {
    const auto& ps = b.model->params();
    json header;
    header["model"] = model_to_json(b.model->config());
    header["loss"] = loss_to_json(loss_cfg);
    header["step"] = b.step;
    header["adam"] = {{"t", b.adam.steps_taken()},
                      {"lr", b.adam.config().lr},
                      {"beta1", b.adam.config().beta1},
                      {"beta2", b.adam.config().beta2},
                      {"eps", b.adam.config().eps}};
    header["rng_state"] = b.rng_state;
    json names = json::array();
    for (std::size_t i = 0; i < ps.size(); ++i)
        names.push_back({{"name", ps.name(i)}, {"numel", ps.param(i)->value.numel()}});
    header["params"] = names;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
    const std::string h = header.dump();
    const std::uint64_t hlen = h.size();
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(h.data(), std::streamsize(h.size()));
    for (std::size_t i = 0; i < ps.size(); ++i)
        write_raw(out, ps.param(i)->value.data(), ps.param(i)->value.numel());
    auto& adam = const_cast<nn::Adam&>(b.adam);
    for (auto& m : adam.moment1()) write_raw(out, m.data(), m.size());
    for (auto& v : adam.moment2()) write_raw(out, v.data(), v.size());
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Bundle load_checkpoint(const fs::path& path, losses::LossConfig* loss_cfg_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != std::string(kMagic, 8))
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string h(hlen, '\0');
    in.read(h.data(), std::streamsize(hlen));
    if (!in) throw std::runtime_error("checkpoint: truncated header in " + path.string());
    json header = json::parse(h);

    const ModelConfig mc = model_from_json(header.at("model"));
    nn::AdamConfig ac;
    ac.lr = header["adam"].value("lr", ac.lr);
    ac.beta1 = header["adam"].value("beta1", ac.beta1);
    ac.beta2 = header["adam"].value("beta2", ac.beta2);
    ac.eps = header["adam"].value("eps", ac.eps);

    Bundle b = Bundle::create(mc, ac);
    b.step = header.at("step").get<std::int64_t>();
    b.adam.set_steps(header["adam"].at("t").get<std::int64_t>());
    b.rng_state = header.at("rng_state").get<std::string>();
    if (loss_cfg_out) *loss_cfg_out = loss_from_json(header.at("loss"));

    const auto& ps = b.model->params();
    const auto& names = header.at("params");
    require(names.size() == ps.size(), "checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) {
        require(names[i].at("name").get<std::string>() == ps.name(i) &&
                    names[i].at("numel").get<std::size_t>() == ps.param(i)->value.numel(),
                "checkpoint: parameter layout mismatch at " + ps.name(i));
        read_raw(in, ps.param(i)->value.data(), ps.param(i)->value.numel());
    }
    for (auto& m : b.adam.moment1()) read_raw(in, m.data(), m.size());
    for (auto& v : b.adam.moment2()) read_raw(in, v.data(), v.size());
    return b;
}

// ---------------------------------------------------------------------------
// training

namespace {

struct LossBreakdown {
    ag::Var total, rec, sd, td;
};

Tensor flip_hw(const Tensor& x, bool fh, bool fw) {
    if (!fh && !fw) return x;
    Tensor out(x.t(), x.h(), x.w(), x.c());
    for (int t = 0; t < x.t(); ++t)
        for (int y = 0; y < x.h(); ++y)
            for (int xx = 0; xx < x.w(); ++xx)
                for (int c = 0; c < x.c(); ++c)
                    out.at(t, y, xx, c) =
                        x.at(t, fh ? x.h() - 1 - y : y, fw ? x.w() - 1 - xx : xx, c);
    return out;
}

Tensor reverse_t(const Tensor& x) {
    Tensor out(x.t(), x.h(), x.w(), x.c());
    const std::size_t n = std::size_t(x.h()) * x.w() * x.c();
    for (int t = 0; t < x.t(); ++t)
        std::copy(x.data() + t * n, x.data() + (t + 1) * n,
                  out.data() + (x.t() - 1 - t) * n);
    return out;
}

// Nearest-neighbor zoom-out about the frame center, clamped at the borders.
// Nearest sampling keeps depth piecewise constant (no fake intermediate
// values across edges).
Tensor zoom_nearest(const Tensor& x, Real inv_zoom) {
    Tensor out(x.t(), x.h(), x.w(), x.c());
    const Real cy = 0.5 * (x.h() - 1), cx = 0.5 * (x.w() - 1);
    for (int t = 0; t < x.t(); ++t)
        for (int y = 0; y < x.h(); ++y)
            for (int xx = 0; xx < x.w(); ++xx) {
                const int sy =
                    std::clamp<int>(std::lround(cy + (y - cy) * inv_zoom), 0, x.h() - 1);
                const int sx =
                    std::clamp<int>(std::lround(cx + (xx - cx) * inv_zoom), 0, x.w() - 1);
                for (int c = 0; c < x.c(); ++c) out.at(t, y, xx, c) = x.at(t, sy, sx, c);
            }
    return out;
}

// Randomized augmentation of one training window. A fraction of steps pass
// through untouched so the original clip stays in-distribution. Otherwise:
// geometry (flips, time reversal, zoom-out) is applied at HR resolution and
// the LR input re-synthesized, so one clip also teaches small objects; the
// RGB guide is pushed through a random full 3x3 color-mixing matrix so
// learned edge detectors respond to arbitrary color contrasts, not the
// training scene's palette; depth gets an amplitude scaling about the window
// mean, teaching edge responses that are linear in contrast (skipped when the
// scaling would produce non-positive depths).
void augment_window(data::CropResult& w, int scale, nn::Rng& rng) {
    std::uniform_real_distribution<Real> unit(0.0, 1.0);
    if (unit(rng) < 0.35) return;

    std::uniform_int_distribution<int> coin(0, 1);
    const bool fh = coin(rng), fw = coin(rng), ft = coin(rng);
    auto geo = [&](Tensor& x) {
        x = flip_hw(x, fh, fw);
        if (ft) x = reverse_t(x);
    };
    geo(w.rgb.rgb);
    geo(w.gt.depth);
    geo(w.gt.mask);

    std::uniform_real_distribution<Real> zoom(0.5, 1.0);
    const Real z = zoom(rng);
    w.rgb.rgb = zoom_nearest(w.rgb.rgb, 1.0 / z);
    w.gt.depth = zoom_nearest(w.gt.depth, 1.0 / z);
    w.gt.mask = zoom_nearest(w.gt.mask, 1.0 / z);
    w.lr = data::synthesize_lr(w.gt, scale);

    std::uniform_real_distribution<Real> mix(-1.0, 1.0), shift(-0.2, 0.2);
    Real m[3][3], b[3];
    for (int c = 0; c < 3; ++c) {
        for (int k = 0; k < 3; ++k) m[c][k] = mix(rng);
        b[c] = shift(rng);
    }
    Tensor& rgb = w.rgb.rgb;
    Tensor jittered(rgb.t(), rgb.h(), rgb.w(), rgb.c());
    for (int t = 0; t < rgb.t(); ++t)
        for (int y = 0; y < rgb.h(); ++y)
            for (int x = 0; x < rgb.w(); ++x)
                for (int c = 0; c < 3; ++c) {
                    Real v = 0.5 + b[c];
                    for (int k = 0; k < 3; ++k) v += m[c][k] * (rgb.at(t, y, x, k) - 0.5);
                    jittered.at(t, y, x, c) = std::clamp(v, 0.0, 1.0);
                }
    rgb = jittered;

    std::uniform_real_distribution<Real> amp(0.5, 1.8);
    const Real a = amp(rng);
    Real mean = 0.0;
    for (std::size_t i = 0; i < w.gt.depth.numel(); ++i) mean += w.gt.depth[i];
    mean /= Real(w.gt.depth.numel());
    Real lo = std::numeric_limits<Real>::max();
    for (std::size_t i = 0; i < w.gt.depth.numel(); ++i)
        lo = std::min(lo, mean + a * (w.gt.depth[i] - mean));
    if (lo > 1.0) {
        for (Tensor* d : {&w.gt.depth, &w.lr.depth})
            for (std::size_t i = 0; i < d->numel(); ++i)
                (*d)[i] = mean + a * ((*d)[i] - mean);
    }
}

LossBreakdown compute_losses(const Bundle& b, const STDNet::Outputs& out, const Tensor&,
                             const Tensor& gt, const Tensor& mask,
                             const losses::LossConfig& lc) {
    LossBreakdown l;
    l.rec = losses::charbonnier(out.d_hr, gt, mask, lc.eps, lc.mean_normalize);
    if (lc.use_sd) l.sd = losses::spatial_diff_loss(out.sigma, out.d_hr, gt, mask, lc.mean_normalize);
    if (lc.use_td)
        l.td = losses::temporal_diff_loss(b.rdf, out.phi, out.phi_hat, gt, mask, lc.mean_normalize);
    l.total = losses::total_loss(l.rec, l.sd, l.td, lc);
    return l;
}

} // namespace

TrainResult train(Bundle& b, const std::vector<data::Clip>& clips, const TrainConfig& cfg) {
    const ModelConfig& mc = b.model->config();
    cfg.validate(mc.scale);
    require(!clips.empty(), "train: dataset is empty");
    for (const auto& c : clips)
        require(c.scale == mc.scale, "train: clip " + c.id + " has scale " +
                                         std::to_string(c.scale) + ", model expects " +
                                         std::to_string(mc.scale));
    b.adam.config().lr = cfg.lr;

    nn::Rng rng;
    {
        std::istringstream ss(b.rng_state);
        ss >> rng;
        if (!ss) rng.seed(cfg.seed);
    }

    const bool append = b.step > 0;
    std::ofstream log(cfg.log_path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("train: cannot open log " + cfg.log_path);
    if (!append) log << "step,total,rec,sd,td\n";

    TrainResult result;
    result.checkpoint = cfg.checkpoint_path;
    std::uniform_int_distribution<std::size_t> pick(0, clips.size() - 1);

    while (b.step < cfg.steps) {
        // One optimizer step over cfg.batch independently sampled windows
        // (losses averaged); batch = 1 reproduces single-window behavior.
        std::vector<LossBreakdown> parts;
        for (int k = 0; k < cfg.batch; ++k) {
            const data::Clip& clip = clips[pick(rng)];
            const int T = clip.gt.depth.t();
            require(T >= cfg.clip_frames,
                    "train: clip " + clip.id + " shorter than clip_frames");
            std::uniform_int_distribution<int> wstart(0, T - cfg.clip_frames);
            const int t0 = wstart(rng);

            auto window = [&](const Tensor& x) {
                Tensor out(cfg.clip_frames, x.h(), x.w(), x.c());
                const std::size_t n = std::size_t(x.h()) * x.w() * x.c();
                std::copy(x.data() + t0 * n, x.data() + (t0 + cfg.clip_frames) * n,
                          out.data());
                return out;
            };
            data::RGBVideo rgb{window(clip.rgb.rgb)};
            data::DepthVideo gt{window(clip.gt.depth), window(clip.gt.mask)};
            data::DepthVideo lr{window(clip.lr.depth), window(clip.lr.mask)};
            auto cropped = data::random_crop_pair(rgb, gt, lr, cfg.hr_crop, mc.scale, rng);
            if (cfg.augment) augment_window(cropped, mc.scale, rng);

            auto out = b.model->forward(cropped.lr.depth, cropped.rgb.rgb);
            try {
                parts.push_back(compute_losses(b, out, cropped.lr.depth, cropped.gt.depth,
                                               cropped.gt.mask, cfg.loss));
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("train aborted at step " +
                                         std::to_string(b.step + 1) + ": " + e.what());
            }
        }
        ag::Var objective = parts[0].total;
        for (std::size_t k = 1; k < parts.size(); ++k)
            objective = ag::add(objective, parts[k].total);
        if (cfg.batch > 1) objective = ag::scale(objective, 1.0 / Real(cfg.batch));
        ag::backward(objective);
        b.adam.step(b.model->params());
        ++b.step;

        auto avg = [&](auto get) {
            Real v = 0;
            for (const auto& part : parts) v += get(part);
            return v / Real(parts.size());
        };
        StepLoss sl{b.step, objective->value[0],
                    avg([](const LossBreakdown& p) { return p.rec->value[0]; }),
                    avg([](const LossBreakdown& p) { return p.sd ? p.sd->value[0] : 0.0; }),
                    avg([](const LossBreakdown& p) { return p.td ? p.td->value[0] : 0.0; })};
        result.log.push_back(sl);
        log << sl.step << "," << sl.total << "," << sl.rec << "," << sl.sd << "," << sl.td
            << "\n";

        if (b.step % cfg.checkpoint_every == 0 || b.step == cfg.steps) {
            std::ostringstream ss;
            ss << rng;
            b.rng_state = ss.str();
            save_checkpoint(cfg.checkpoint_path, b, cfg.loss);
        }
    }
    std::ostringstream ss;
    ss << rng;
    b.rng_state = ss.str();
    save_checkpoint(cfg.checkpoint_path, b, cfg.loss);
    return result;
}

// ---------------------------------------------------------------------------
// evaluation / inference

Tensor predict_clip(const Bundle& b, const data::Clip& clip) {
    require(clip.scale == b.model->config().scale,
            "predict: clip scale " + std::to_string(clip.scale) + " != model scale " +
                std::to_string(b.model->config().scale));
    auto out = b.model->forward(clip.lr.depth, clip.rgb.rgb);
    return out.d_hr->value;
}

EvalResult evaluate(const Bundle& b, const std::vector<data::Clip>& clips) {
    require(!clips.empty(), "evaluate: dataset is empty");
    EvalResult r;
    std::vector<metrics::ClipMetrics> model_rows, bicubic_rows;
    for (const auto& clip : clips) {
        Tensor pred = predict_clip(b, clip);
        Tensor baseline = kernels::resize_forward(clip.lr.depth, clip.gt.depth.h(),
                                                  clip.gt.depth.w(), kernels::Interp::Bicubic);
        auto mm = metrics::evaluate_clip(pred, clip.gt.depth, clip.gt.mask);
        auto bm = metrics::evaluate_clip(baseline, clip.gt.depth, clip.gt.mask);
        r.rows.push_back({clip.id, "stdnet", mm});
        r.rows.push_back({clip.id, "bicubic", bm});
        model_rows.push_back(mm);
        bicubic_rows.push_back(bm);
    }
    r.model_avg = metrics::average(model_rows);
    r.bicubic_avg = metrics::average(bicubic_rows);
    return r;
}

void write_eval_csv(const fs::path& path, const EvalResult& r) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("evaluate: cannot write " + path.string());
    out << "clip,method,rmse_cm,mae_cm,tepe_cm\n";
    for (const auto& row : r.rows)
        out << row.clip_id << "," << row.method << "," << row.m.rmse << "," << row.m.mae << ","
            << row.m.tepe << "\n";
    out << "average,stdnet," << r.model_avg.rmse << "," << r.model_avg.mae << ","
        << r.model_avg.tepe << "\n";
    out << "average,bicubic," << r.bicubic_avg.rmse << "," << r.bicubic_avg.mae << ","
        << r.bicubic_avg.tepe << "\n";
}

void print_eval_summary(std::ostream& os, const EvalResult& r) {
    os << "clips evaluated: " << r.rows.size() / 2 << "\n";
    os << "stdnet  avg: RMSE " << r.model_avg.rmse << " cm, MAE " << r.model_avg.mae
       << " cm, TEPE " << r.model_avg.tepe << " cm\n";
    os << "bicubic avg: RMSE " << r.bicubic_avg.rmse << " cm, MAE " << r.bicubic_avg.mae
       << " cm, TEPE " << r.bicubic_avg.tepe << " cm\n";
}

void infer(const Bundle& b, const fs::path& clip_dir, const fs::path& out_dir) {
    data::Clip clip = data::load_clip(clip_dir);
    Tensor pred = predict_clip(b, clip);
    Real max_depth = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        pred[i] = std::max(pred[i], 0.0);
        max_depth = std::max(max_depth, pred[i]);
    }
    data::DepthVideo dv{pred, Tensor(pred.shape(), 1.0)};
    fs::create_directories(out_dir);
    data::save_depth_frames(out_dir, "pred", dv, clip.depth_unit_cm);
    analysis::write_map_png(out_dir / "xt_slice.png", analysis::xt_slice(pred, pred.h() / 2),
                            max_depth > 0 ? max_depth : 1.0);
}

std::size_t param_count(const ModelConfig& cfg) {
    Bundle b = Bundle::create(cfg, {});
    return b.model->params().total_scalars();
}

} // namespace stdnet::harness
