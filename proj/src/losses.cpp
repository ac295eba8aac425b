#include "stdnet/losses.hpp"

#include <cmath>

namespace stdnet::losses {

namespace {

std::size_t count_valid(const Tensor& mask) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.numel(); ++i)
        if (mask[i] > 0.0) ++n;
    return n;
}

ag::Var masked_sum(const ag::Var& per_pixel, const Tensor& mask, bool mean_normalize) {
    ag::Var s = ag::sum(ag::mul_const(per_pixel, mask));
    if (!mean_normalize) return s;
    const std::size_t n = count_valid(mask);
    return n ? ag::scale(s, 1.0 / Real(n)) : s;
}

ag::Var zero_scalar() { return ag::constant(Tensor(1, 1, 1, 1)); }

} // namespace

ag::Var charbonnier(const ag::Var& d_hr, const Tensor& d_gt, const Tensor& mask, Real eps,
                    bool mean_normalize) {
    require(d_hr->shape() == d_gt.shape(), "charbonnier: prediction shape " +
                                               d_hr->shape().str() + " != gt shape " +
                                               d_gt.shape().str());
    require(mask.shape() == d_gt.shape(), "charbonnier: mask shape mismatch");
    if (count_valid(mask) == 0) return zero_scalar();
    ag::Var diff = ag::sub(d_hr, ag::constant(d_gt));
    ag::Var per_pixel = ag::sqrt(ag::add_scalar(ag::mul(diff, diff), eps));
    return masked_sum(per_pixel, mask, mean_normalize);
}

ag::Var spatial_diff_loss(const ag::Var& sigma, const ag::Var& d_hr, const Tensor& d_gt,
                          const Tensor& mask, bool mean_normalize) {
    require(d_hr->shape() == d_gt.shape(), "spatial_diff_loss: prediction/gt shape mismatch");
    require(sigma->shape().t == d_gt.shape().t, "spatial_diff_loss: frame count mismatch");
    if (count_valid(mask) == 0) return zero_scalar();
    ag::Var sig = ag::channel_mean(sigma);
    sig = ag::resize(sig, d_gt.shape().h, d_gt.shape().w, kernels::Interp::Bilinear);
    ag::Var lo = ag::reduce_min_masked(sig, mask);
    ag::Var weight = ag::sub_broadcast_scalar(sig, lo);
    ag::Var l1 = ag::abs(ag::sub(d_hr, ag::constant(d_gt)));
    return masked_sum(ag::mul(weight, l1), mask, mean_normalize);
}

DiffReconstructor::DiffReconstructor(nn::ParamStore& ps, int channels, int scale, nn::Rng& rng)
    : scale_(scale) {
    conv0_ = nn::Conv2d(ps, "rdf.0", channels, channels, 3, 1, rng);
    conv1_ = nn::Conv2d(ps, "rdf.1", channels, 1, 3, 1, rng, /*zero_init=*/true);
}

ag::Var DiffReconstructor::operator()(const ag::Var& phi) const {
    ag::Var x = ag::relu(conv0_(phi));
    x = ag::resize_factor(x, (Real)scale_, kernels::Interp::Bicubic);
    return conv1_(x);
}

std::pair<Tensor, Tensor> gt_temporal_difference(const Tensor& d_gt, const Tensor& mask,
                                                 int stride) {
    const Shape s = d_gt.shape();
    require(s.t > stride, "gt_temporal_difference: clip too short for stride " +
                              std::to_string(stride));
    Tensor diff(s.t - stride, s.h, s.w, 1), joint(s.t - stride, s.h, s.w, 1);
    for (int t = 0; t + stride < s.t; ++t)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                diff.at(t, y, x, 0) =
                    std::abs(d_gt.at(t, y, x, 0) - d_gt.at(t + stride, y, x, 0));
                joint.at(t, y, x, 0) =
                    (mask.at(t, y, x, 0) > 0.0 && mask.at(t + stride, y, x, 0) > 0.0) ? 1.0 : 0.0;
            }
    return {diff, joint};
}

ag::Var temporal_diff_loss(const DiffReconstructor& rdf, const ag::Var& phi,
                           const ag::Var& phi_hat, const Tensor& d_gt, const Tensor& mask,
                           bool mean_normalize) {
    require(d_gt.shape().t >= 3, "temporal_diff_loss: need at least 3 frames");
    auto [gt1, m1] = gt_temporal_difference(d_gt, mask, 1);
    auto [gt2, m2] = gt_temporal_difference(d_gt, mask, 2);
    ag::Var p1 = rdf(phi);
    ag::Var p2 = rdf(phi_hat);
    require(p1->shape() == gt1.shape(), "temporal_diff_loss: R_df output " + p1->shape().str() +
                                            " != gt difference " + gt1.shape().str());
    ag::Var adj = masked_sum(ag::abs(ag::sub(p1, ag::constant(gt1))), m1, mean_normalize);
    ag::Var crs = masked_sum(ag::abs(ag::sub(p2, ag::constant(gt2))), m2, mean_normalize);
    return ag::add(adj, crs);
}

ag::Var total_loss(const ag::Var& l_rec, const ag::Var& l_sd, const ag::Var& l_td,
                   const LossConfig& cfg) {
    cfg.validate();
    auto check = [](const ag::Var& v, const char* name) {
        if (v && !std::isfinite(v->value[0]))
            throw std::runtime_error(std::string("total_loss: non-finite component ") + name);
    };
    check(l_rec, "L_rec");
    check(l_sd, "L_sd");
    check(l_td, "L_td");
    require(l_rec != nullptr, "total_loss: L_rec is required");
    ag::Var diff = zero_scalar();
    if (cfg.use_sd && l_sd) diff = ag::add(diff, ag::scale(l_sd, cfg.alpha1));
    if (cfg.use_td && l_td) diff = ag::add(diff, ag::scale(l_td, cfg.alpha2));
    return ag::add(l_rec, ag::scale(diff, cfg.beta));
}

} // namespace stdnet::losses
