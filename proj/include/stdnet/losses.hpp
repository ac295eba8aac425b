#pragma once

#include "stdnet/nn.hpp"

namespace stdnet::losses {

struct LossConfig {
    Real alpha1 = 0.5;
    Real alpha2 = 0.5;
    Real beta = 0.01;
    Real eps = 1e-12;
    bool use_sd = true;
    bool use_td = true;
    // Literal per-pixel sums match the loss definitions; mean mode divides by
    // the valid count for a step-size-stable training objective.
    bool mean_normalize = false;

    void validate() const {
        require(alpha1 >= 0 && alpha2 >= 0 && beta >= 0 && eps >= 0,
                "LossConfig: coefficients must be >= 0");
    }
};

// sum_{q in mask} sqrt((gt_q - pred_q)^2 + eps)
ag::Var charbonnier(const ag::Var& d_hr, const Tensor& d_gt, const Tensor& mask, Real eps,
                    bool mean_normalize = false);

// Uncertainty-style weighting: channel-mean sigma, bilinearly upsampled to HR,
// shifted by its minimum over valid pixels, times the L1 residual.
ag::Var spatial_diff_loss(const ag::Var& sigma, const ag::Var& d_hr, const Tensor& d_gt,
                          const Tensor& mask, bool mean_normalize = false);

// Trainable reconstruction from difference representations to HR difference
// maps: conv, bicubic upsample by s, 1-channel projection (zero-initialized).
class DiffReconstructor {
public:
    DiffReconstructor() = default;
    DiffReconstructor(nn::ParamStore& ps, int channels, int scale, nn::Rng& rng);
    ag::Var operator()(const ag::Var& phi) const;
    int scale() const { return scale_; }

private:
    nn::Conv2d conv0_, conv1_;
    int scale_ = 4;
};

// |R_df(phi) - |gt_t - gt_{t+1}|| + |R_df(phi_hat) - |gt_t - gt_{t+2}||,
// summed over jointly valid pixels.
ag::Var temporal_diff_loss(const DiffReconstructor& rdf, const ag::Var& phi,
                           const ag::Var& phi_hat, const Tensor& d_gt, const Tensor& mask,
                           bool mean_normalize = false);

// L_rec + beta * (alpha1 * L_sd + alpha2 * L_td). Null terms count as zero.
// Throws on non-finite components, naming the offender.
ag::Var total_loss(const ag::Var& l_rec, const ag::Var& l_sd, const ag::Var& l_td,
                   const LossConfig& cfg);

// Absolute GT frame difference at the given stride with the joint validity
// mask; shared by the temporal loss and its tests.
std::pair<Tensor, Tensor> gt_temporal_difference(const Tensor& d_gt, const Tensor& mask,
                                                 int stride);

} // namespace stdnet::losses
