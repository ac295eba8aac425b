#pragma once

#include "stdnet/nn.hpp"

namespace stdnet {

struct ModelConfig {
    int scale = 4;          // upsampling factor, one of {4, 8, 16}
    int channels = 32;      // feature width c
    int encoder_depth = 3;  // conv layers in the depth/RGB encoders
    int dyn_kernel = 3;     // per-pixel filtering kernel size (odd)
    int dyn_groups = 1;     // channel groups sharing a dynamic kernel
    int deform_kernel = 3;  // deformable conv kernel size
    Real offset_clamp = 10.0; // max |offset| in pixels
    int neighbors = 2;      // 1 = adjacent only, 2 = adjacent + cross frame
    Real depth_norm = 100.0;  // cm divisor applied before encoding
    bool tie_directions = false; // share forward/backward propagation weights
    std::uint64_t seed = 0;

    void validate() const;
    int num_upsample_stages() const; // log2(scale)
};

// Spatial difference branch: per-frame sigma computation, kernel generation,
// adaptive weighting and RGB-D fusion. All ops treat the T axis frame-wise,
// so the branch applies no temporal mixing by construction.
class SpatialBranch {
public:
    SpatialBranch() = default;
    SpatialBranch(nn::ParamStore& ps, const ModelConfig& cfg, nn::Rng& rng);

    ag::Var encode_depth(const ag::Var& d_lr_norm) const; // (T,h,w,1) -> (T,h,w,c)
    ag::Var encode_rgb(const ag::Var& rgb) const;         // (T,sh,sw,3) -> (T,h,w,c)
    ag::Var spatial_difference_rep(const ag::Var& f_d) const; // sigma, >= 0
    ag::Var kernel_generator(const ag::Var& sigma) const;     // (T,h,w,g*k^2), softmax-normalized
    ag::Var weight_encoder(const ag::Var& sigma) const;       // (T,h,w,1) in (0,1)

    struct FuseOut {
        ag::Var f_sd;   // (T,h,w,c)
        ag::Var weight; // (T,h,w,1)
    };
    FuseOut fuse(const ag::Var& f_d, const ag::Var& f_r, const ag::Var& sigma) const;

private:
    ModelConfig cfg_;
    std::vector<nn::Conv2d> depth_enc_, rgb_enc_, kgen_, weight_conv_;
    nn::Conv2d weight_proj_, fuse_conv_;
};

// Temporal difference branch: difference representations, deformable
// difference-guided fusion of neighboring frames, bidirectional propagation
// and pixel-shuffle reconstruction.
class TemporalBranch {
public:
    TemporalBranch() = default;
    TemporalBranch(nn::ParamStore& ps, const ModelConfig& cfg, nn::Rng& rng);

    struct DiffReps {
        ag::Var consecutive; // (T-1,h,w,c)
        ag::Var cross;       // (T-2,h,w,c)
    };
    static DiffReps temporal_difference_reps(const ag::Var& f_sd);

    struct OffsetMod {
        ag::Var offsets;    // (t,h,w,2K), clamped to [-R, R]
        ag::Var modulation; // (t,h,w,K) in (0,1)
    };
    OffsetMod encode_difference(const ag::Var& phi, bool forward_dir) const;

    // One fusion stage (Eq. 7 shape): aligns f_src / f_r_src to f_cur using the
    // difference rep phi, weights the RGB path by w, fuses by conv.
    ag::Var frame_fuse(const ag::Var& f_cur, const ag::Var& f_src, const ag::Var& f_r_src,
                       const ag::Var& w, const ag::Var& phi, bool cross, bool forward_dir) const;

    static ag::Var combine_fusions(const ag::Var& adjacent, const ag::Var& cross);

    // Second-order bidirectional propagation over the spatially fused features.
    // Missing neighbors at clip boundaries self-fuse through the same encoder
    // path with a zero difference map.
    ag::Var propagate(const ag::Var& f_sd, const ag::Var& f_r, const ag::Var& w,
                      const DiffReps& reps) const;

    // D_HR = upsample head(F_td) * depth_norm + bicubic(D_LR, s)
    ag::Var reconstruct(const ag::Var& f_td, const ag::Var& d_lr) const;

private:
    struct FusePath {
        std::vector<nn::Conv2d> diff_enc; // difference -> (2K + K) channels
        nn::Conv2d deform_depth_w;        // holds weight/bias for the depth deformable
        nn::Conv2d deform_rgb_w;
        nn::Conv2d fuse;
    };
    FusePath make_path(nn::ParamStore& ps, const std::string& name, nn::Rng& rng);
    const FusePath& path(bool cross, bool forward_dir) const;
    ag::Var run_path(const FusePath& p, const ag::Var& f_cur, const ag::Var& f_src,
                     const ag::Var& f_r_src, const ag::Var& w, const ag::Var& phi) const;
    OffsetMod encode_with(const FusePath& p, const ag::Var& phi) const;

    ModelConfig cfg_;
    FusePath fwd_adj_, fwd_cross_, bwd_adj_, bwd_cross_;
    nn::Conv2d aggregate_;
    std::vector<nn::Conv2d> recon_; // head convs + per-stage convs
    nn::Conv2d recon_out_;          // zero-initialized final projection
};

class STDNet {
public:
    explicit STDNet(const ModelConfig& cfg);

    struct Outputs {
        ag::Var d_hr;   // (T, sh, sw, 1), centimeters
        ag::Var sigma;  // (T, h, w, c)
        ag::Var phi;    // (T-1, h, w, c)
        ag::Var phi_hat;// (T-2, h, w, c)
        ag::Var weight; // (T, h, w, 1)
        ag::Var f_sd;   // (T, h, w, c)
        ag::Var f_td;   // (T, h, w, c)
    };

    // d_lr: (T,h,w,1) depth in cm; rgb: (T, s*h, s*w, 3) in [0,1].
    Outputs forward(const Tensor& d_lr, const Tensor& rgb) const;
    Outputs forward(const ag::Var& d_lr, const ag::Var& rgb) const;

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    const SpatialBranch& spatial() const { return spatial_; }
    const TemporalBranch& temporal() const { return temporal_; }

private:
    ModelConfig cfg_;
    nn::ParamStore params_;
    SpatialBranch spatial_;
    TemporalBranch temporal_;
};

} // namespace stdnet
