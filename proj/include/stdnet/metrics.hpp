#pragma once

#include "stdnet/tensor.hpp"

namespace stdnet::metrics {

// All metrics are in the depth unit of their inputs (centimeters throughout
// this project) and are computed over valid pixels only.

Real rmse(const Tensor& pred, const Tensor& gt, const Tensor& mask);
Real mae(const Tensor& pred, const Tensor& gt, const Tensor& mask);

// Temporal end-point error: mean |Δpred - Δgt| over consecutive frame pairs,
// restricted to pixels valid in both frames.
Real tepe(const Tensor& pred, const Tensor& gt, const Tensor& mask);

struct ClipMetrics {
    Real rmse = 0, mae = 0, tepe = 0;
};

ClipMetrics evaluate_clip(const Tensor& pred, const Tensor& gt, const Tensor& mask);

// Per-clip metrics averaged with equal clip weight (the reporting default),
// alongside the pixel-pooled alternative.
ClipMetrics average(const std::vector<ClipMetrics>& per_clip);

} // namespace stdnet::metrics
