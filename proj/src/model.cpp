#include "stdnet/model.hpp"

namespace stdnet {

void ModelConfig::validate() const {
    require(scale == 4 || scale == 8 || scale == 16,
            "ModelConfig: scale must be 4, 8 or 16, got " + std::to_string(scale));
    require(channels >= 1, "ModelConfig: channels must be >= 1");
    require(encoder_depth >= 2, "ModelConfig: encoder_depth must be >= 2");
    require(dyn_kernel >= 1 && dyn_kernel % 2 == 1, "ModelConfig: dyn_kernel must be odd");
    require(dyn_groups >= 1 && channels % dyn_groups == 0,
            "ModelConfig: dyn_groups must divide channels");
    require(deform_kernel >= 1 && deform_kernel % 2 == 1,
            "ModelConfig: deform_kernel must be odd");
    require(offset_clamp > 0.0, "ModelConfig: offset_clamp must be positive");
    require(neighbors == 1 || neighbors == 2, "ModelConfig: neighbors must be 1 or 2");
    require(depth_norm > 0.0, "ModelConfig: depth_norm must be positive");
}

int ModelConfig::num_upsample_stages() const {
    int s = scale, n = 0;
    while (s > 1) {
        s /= 2;
        ++n;
    }
    return n;
}

// ---------------------------------------------------------------------------
// SpatialBranch

SpatialBranch::SpatialBranch(nn::ParamStore& ps, const ModelConfig& cfg, nn::Rng& rng)
    : cfg_(cfg) {
    const int c = cfg.channels;
    // depth encoder: 1 -> c, then c -> c
    depth_enc_.emplace_back(ps, "spatial.depth_enc.0", 1, c, 3, 1, rng);
    for (int i = 1; i < cfg.encoder_depth; ++i)
        depth_enc_.emplace_back(ps, "spatial.depth_enc." + std::to_string(i), c, c, 3, 1, rng);
    // RGB encoder: log2(s) stride-2 layers bring the guide to LR resolution
    const int stages = cfg.num_upsample_stages();
    rgb_enc_.emplace_back(ps, "spatial.rgb_enc.0", 3, c, 3, 2, rng);
    for (int i = 1; i < stages; ++i)
        rgb_enc_.emplace_back(ps, "spatial.rgb_enc." + std::to_string(i), c, c, 3, 2, rng);
    rgb_enc_.emplace_back(ps, "spatial.rgb_enc." + std::to_string(stages), c, c, 3, 1, rng);
    // kernel generator
    kgen_.emplace_back(ps, "spatial.kgen.0", c, c, 3, 1, rng);
    kgen_.emplace_back(ps, "spatial.kgen.1", c, cfg.dyn_groups * cfg.dyn_kernel * cfg.dyn_kernel,
                       3, 1, rng);
    // adaptive weight encoder
    weight_conv_.emplace_back(ps, "spatial.wenc.conv", c, c, 3, 1, rng);
    weight_proj_ = nn::Conv2d(ps, "spatial.wenc.proj", 2, 1, 1, 1, rng);
    fuse_conv_ = nn::Conv2d(ps, "spatial.fuse", 3 * c, c, 3, 1, rng);
}

ag::Var SpatialBranch::encode_depth(const ag::Var& d_lr_norm) const {
    require(d_lr_norm->shape().c == 1, "encode_depth: expected 1-channel depth");
    ag::Var x = d_lr_norm;
    for (std::size_t i = 0; i < depth_enc_.size(); ++i) {
        x = depth_enc_[i](x);
        if (i + 1 < depth_enc_.size()) x = ag::relu(x);
    }
    return x;
}

ag::Var SpatialBranch::encode_rgb(const ag::Var& rgb) const {
    require(rgb->shape().c == 3, "encode_rgb: expected 3-channel input");
    require(rgb->shape().h % cfg_.scale == 0 && rgb->shape().w % cfg_.scale == 0,
            "encode_rgb: RGB dims " + rgb->shape().str() + " not divisible by scale " +
                std::to_string(cfg_.scale));
    ag::Var x = rgb;
    for (std::size_t i = 0; i < rgb_enc_.size(); ++i) {
        x = rgb_enc_[i](x);
        if (i + 1 < rgb_enc_.size()) x = ag::relu(x);
    }
    return x;
}

ag::Var SpatialBranch::spatial_difference_rep(const ag::Var& f_d) const {
    const Shape s = f_d->shape();
    require(s.h >= 2 && s.w >= 2, "spatial_difference_rep: dims must be >= 2");
    ag::Var down = ag::resize_factor(f_d, 0.5, kernels::Interp::Bilinear);
    ag::Var up = ag::resize(down, s.h, s.w, kernels::Interp::Bilinear);
    return ag::abs(ag::sub(f_d, up));
}

ag::Var SpatialBranch::kernel_generator(const ag::Var& sigma) const {
    ag::Var x = ag::relu(kgen_[0](sigma));
    x = kgen_[1](x);
    return ag::softmax_groups(x, cfg_.dyn_kernel * cfg_.dyn_kernel);
}

ag::Var SpatialBranch::weight_encoder(const ag::Var& sigma) const {
    ag::Var x = weight_conv_[0](sigma);
    ag::Var pooled = ag::concat_c({ag::channel_max(x), ag::channel_mean(x)});
    return ag::sigmoid(weight_proj_(pooled));
}

SpatialBranch::FuseOut SpatialBranch::fuse(const ag::Var& f_d, const ag::Var& f_r,
                                           const ag::Var& sigma) const {
    require(f_d->shape() == f_r->shape(),
            "spatial fuse: depth/RGB feature shapes differ: " + f_d->shape().str() + " vs " +
                f_r->shape().str());
    ag::Var k = kernel_generator(sigma);
    ag::Var w = weight_encoder(sigma);
    ag::Var f_r_filtered = ag::dynamic_filter(f_r, k, cfg_.dyn_kernel, cfg_.dyn_groups);
    ag::Var fused = fuse_conv_(ag::concat_c({f_d, ag::mul(f_r, w), f_r_filtered}));
    return {fused, w};
}

// ---------------------------------------------------------------------------
// TemporalBranch

TemporalBranch::FusePath TemporalBranch::make_path(nn::ParamStore& ps, const std::string& name,
                                                   nn::Rng& rng) {
    const int c = cfg_.channels;
    const int K = cfg_.deform_kernel * cfg_.deform_kernel;
    FusePath p;
    p.diff_enc.emplace_back(ps, name + ".enc.0", c, c, 3, 1, rng);
    // zero-init: propagation starts from identity sampling (offsets 0, m 0.5)
    p.diff_enc.emplace_back(ps, name + ".enc.1", c, 3 * K, 3, 1, rng, /*zero_init=*/true);
    p.deform_depth_w = nn::Conv2d(ps, name + ".dcn_d", c, c, cfg_.deform_kernel, 1, rng);
    p.deform_rgb_w = nn::Conv2d(ps, name + ".dcn_r", c, c, cfg_.deform_kernel, 1, rng);
    p.fuse = nn::Conv2d(ps, name + ".fuse", 3 * c, c, 3, 1, rng);
    return p;
}

TemporalBranch::TemporalBranch(nn::ParamStore& ps, const ModelConfig& cfg, nn::Rng& rng)
    : cfg_(cfg) {
    fwd_adj_ = make_path(ps, "temporal.fwd.adj", rng);
    if (cfg.neighbors == 2) fwd_cross_ = make_path(ps, "temporal.fwd.cross", rng);
    if (!cfg.tie_directions) {
        bwd_adj_ = make_path(ps, "temporal.bwd.adj", rng);
        if (cfg.neighbors == 2) bwd_cross_ = make_path(ps, "temporal.bwd.cross", rng);
    } else {
        bwd_adj_ = fwd_adj_;
        bwd_cross_ = fwd_cross_;
    }
    const int c = cfg.channels;
    aggregate_ = nn::Conv2d(ps, "temporal.aggregate", 3 * c, c, 3, 1, rng);
    recon_.emplace_back(ps, "recon.head", c, c, 3, 1, rng);
    for (int i = 0; i < cfg.num_upsample_stages(); ++i)
        recon_.emplace_back(ps, "recon.up" + std::to_string(i), c, 4 * c, 3, 1, rng);
    recon_out_ = nn::Conv2d(ps, "recon.out", c, 1, 3, 1, rng, /*zero_init=*/true);
}

const TemporalBranch::FusePath& TemporalBranch::path(bool cross, bool forward_dir) const {
    if (forward_dir) return cross ? fwd_cross_ : fwd_adj_;
    return cross ? bwd_cross_ : bwd_adj_;
}

TemporalBranch::DiffReps TemporalBranch::temporal_difference_reps(const ag::Var& f_sd) {
    const int T = f_sd->shape().t;
    require(T >= 3, "temporal_difference_reps: need at least 3 frames, got " + std::to_string(T));
    std::vector<ag::Var> phi, phi_hat;
    for (int t = 0; t + 1 < T; ++t)
        phi.push_back(ag::abs(ag::sub(ag::select_frame(f_sd, t), ag::select_frame(f_sd, t + 1))));
    for (int t = 0; t + 2 < T; ++t)
        phi_hat.push_back(
            ag::abs(ag::sub(ag::select_frame(f_sd, t), ag::select_frame(f_sd, t + 2))));
    return {ag::stack_frames(phi), ag::stack_frames(phi_hat)};
}

TemporalBranch::OffsetMod TemporalBranch::encode_with(const FusePath& p, const ag::Var& phi) const {
    const int K = cfg_.deform_kernel * cfg_.deform_kernel;
    ag::Var x = ag::relu(p.diff_enc[0](phi));
    x = p.diff_enc[1](x);
    ag::Var offsets = ag::clamp(ag::slice_c(x, 0, 2 * K), -cfg_.offset_clamp, cfg_.offset_clamp);
    ag::Var modulation = ag::sigmoid(ag::slice_c(x, 2 * K, K));
    return {offsets, modulation};
}

TemporalBranch::OffsetMod TemporalBranch::encode_difference(const ag::Var& phi,
                                                            bool forward_dir) const {
    return encode_with(path(false, forward_dir), phi);
}

ag::Var TemporalBranch::run_path(const FusePath& p, const ag::Var& f_cur, const ag::Var& f_src,
                                 const ag::Var& f_r_src, const ag::Var& w,
                                 const ag::Var& phi) const {
    require(f_cur->shape() == f_src->shape() && f_cur->shape() == f_r_src->shape(),
            "frame_fuse: feature shape mismatch");
    require(phi->shape() == f_cur->shape(), "frame_fuse: difference rep shape mismatch");
    auto [offsets, modulation] = encode_with(p, phi);
    ag::Var f_dc = ag::deform_conv(f_src, p.deform_depth_w.weight, p.deform_depth_w.bias, offsets,
                                   modulation);
    ag::Var f_r_dc = ag::deform_conv(f_r_src, p.deform_rgb_w.weight, p.deform_rgb_w.bias, offsets,
                                     modulation);
    return p.fuse(ag::concat_c({f_cur, f_dc, ag::mul(f_r_dc, w)}));
}

ag::Var TemporalBranch::frame_fuse(const ag::Var& f_cur, const ag::Var& f_src,
                                   const ag::Var& f_r_src, const ag::Var& w, const ag::Var& phi,
                                   bool cross, bool forward_dir) const {
    return run_path(path(cross, forward_dir), f_cur, f_src, f_r_src, w, phi);
}

ag::Var TemporalBranch::combine_fusions(const ag::Var& adjacent, const ag::Var& cross) {
    return ag::add(adjacent, cross);
}

ag::Var TemporalBranch::propagate(const ag::Var& f_sd, const ag::Var& f_r, const ag::Var& w,
                                  const DiffReps& reps) const {
    const int T = f_sd->shape().t;
    require(T >= 3, "propagate: need at least 3 frames");
    const Shape fs{1, f_sd->shape().h, f_sd->shape().w, f_sd->shape().c};

    std::vector<ag::Var> sd(T), rf(T), wf(T);
    for (int t = 0; t < T; ++t) {
        sd[t] = ag::select_frame(f_sd, t);
        rf[t] = ag::select_frame(f_r, t);
        wf[t] = ag::select_frame(w, t);
    }
    ag::Var zero_phi = ag::constant(Tensor(fs));

    // step = +1 for forward, -1 for backward; a missing neighbor self-fuses
    // with a zero difference map, so static clips stay frame-constant.
    auto run_dir = [&](int step) {
        const bool forward_dir = step > 0;
        std::vector<ag::Var> hidden(T);
        for (int i = 0; i < T; ++i) {
            const int t = forward_dir ? i : T - 1 - i;
            const int a = t - step;     // adjacent source
            const int x2 = t - 2 * step; // cross source
            const bool has_a = a >= 0 && a < T;
            const bool has_x = x2 >= 0 && x2 < T;
            ag::Var phi_a = has_a ? ag::select_frame(reps.consecutive, std::min(t, a)) : zero_phi;
            ag::Var adj = run_path(path(false, forward_dir), sd[t], sd[has_a ? a : t],
                                   rf[has_a ? a : t], wf[t], phi_a);
            if (cfg_.neighbors == 2) {
                ag::Var phi_x = has_x ? ag::select_frame(reps.cross, std::min(t, x2)) : zero_phi;
                ag::Var crs = run_path(path(true, forward_dir), sd[t], sd[has_x ? x2 : t],
                                       rf[has_x ? x2 : t], wf[t], phi_x);
                hidden[t] = combine_fusions(adj, crs);
            } else {
                hidden[t] = adj;
            }
        }
        return hidden;
    };

    std::vector<ag::Var> h_fwd = run_dir(+1);
    std::vector<ag::Var> h_bwd = run_dir(-1);

    std::vector<ag::Var> out(T);
    for (int t = 0; t < T; ++t)
        out[t] = aggregate_(ag::concat_c({sd[t], h_fwd[t], h_bwd[t]}));
    return ag::stack_frames(out);
}

ag::Var TemporalBranch::reconstruct(const ag::Var& f_td, const ag::Var& d_lr) const {
    require(d_lr->shape().c == 1, "reconstruct: depth must be 1-channel");
    require(d_lr->shape().h == f_td->shape().h && d_lr->shape().w == f_td->shape().w,
            "reconstruct: feature/depth resolution mismatch");
    ag::Var x = ag::relu(recon_[0](f_td));
    for (std::size_t i = 1; i < recon_.size(); ++i)
        x = ag::relu(ag::pixel_shuffle(recon_[i](x), 2));
    ag::Var residual = ag::scale(recon_out_(x), cfg_.depth_norm);
    ag::Var base = ag::resize_factor(d_lr, (Real)cfg_.scale, kernels::Interp::Bicubic);
    return ag::add(residual, base);
}

// ---------------------------------------------------------------------------
// STDNet

STDNet::STDNet(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    nn::Rng rng(cfg_.seed);
    spatial_ = SpatialBranch(params_, cfg_, rng);
    temporal_ = TemporalBranch(params_, cfg_, rng);
}

STDNet::Outputs STDNet::forward(const Tensor& d_lr, const Tensor& rgb) const {
    return forward(ag::constant(d_lr), ag::constant(rgb));
}

STDNet::Outputs STDNet::forward(const ag::Var& d_lr, const ag::Var& rgb) const {
    require(d_lr->shape().c == 1, "forward: depth must be (T,h,w,1)");
    require(rgb->shape().c == 3, "forward: rgb must be (T,sh,sw,3)");
    require(rgb->shape().t == d_lr->shape().t, "forward: frame count mismatch");
    require(rgb->shape().h == cfg_.scale * d_lr->shape().h &&
                rgb->shape().w == cfg_.scale * d_lr->shape().w,
            "forward: RGB dims " + rgb->shape().str() + " are not scale x LR dims " +
                d_lr->shape().str());

    // Scale to depth_norm units and subtract the clip mean so the encoders see
    // depth offsets rather than absolute range; learned edge responses then
    // transfer across scenes regardless of their absolute depth. The mean is
    // part of the autograd graph, so gradients stay exact.
    ag::Var d_scaled = ag::scale(d_lr, 1.0 / cfg_.depth_norm);
    ag::Var d_mean = ag::scale(ag::sum(d_scaled), 1.0 / Real(d_scaled->value.numel()));
    ag::Var d_norm = ag::sub_broadcast_scalar(d_scaled, d_mean);
    ag::Var f_d = spatial_.encode_depth(d_norm);
    ag::Var sigma = spatial_.spatial_difference_rep(f_d);
    ag::Var f_r = spatial_.encode_rgb(rgb);
    auto [f_sd, w] = spatial_.fuse(f_d, f_r, sigma);

    auto reps = TemporalBranch::temporal_difference_reps(f_sd);
    ag::Var f_td = temporal_.propagate(f_sd, f_r, w, reps);
    ag::Var d_hr = temporal_.reconstruct(f_td, d_lr);

    return {d_hr, sigma, reps.consecutive, reps.cross, w, f_sd, f_td};
}

} // namespace stdnet
