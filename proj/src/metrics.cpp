#include "stdnet/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace stdnet::metrics {

namespace {

void check_shapes(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    require(pred.shape() == gt.shape(), "metrics: prediction shape " + pred.shape().str() +
                                            " != gt shape " + gt.shape().str());
    require(mask.shape() == gt.shape(), "metrics: mask shape mismatch");
}

} // namespace

Real rmse(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    check_shapes(pred, gt, mask);
    Real acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        if (mask[i] <= 0.0) continue;
        const Real e = pred[i] - gt[i];
        acc += e * e;
        ++n;
    }
    if (n == 0) throw std::runtime_error("rmse: no valid pixels");
    return std::sqrt(acc / Real(n));
}

Real mae(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    check_shapes(pred, gt, mask);
    Real acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        if (mask[i] <= 0.0) continue;
        acc += std::abs(pred[i] - gt[i]);
        ++n;
    }
    if (n == 0) throw std::runtime_error("mae: no valid pixels");
    return acc / Real(n);
}

Real tepe(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    check_shapes(pred, gt, mask);
    require(pred.t() >= 2, "tepe: need at least 2 frames");
    Real acc = 0.0;
    std::size_t n = 0;
    for (int t = 0; t + 1 < pred.t(); ++t)
        for (int y = 0; y < pred.h(); ++y)
            for (int x = 0; x < pred.w(); ++x) {
                if (mask.at(t, y, x, 0) <= 0.0 || mask.at(t + 1, y, x, 0) <= 0.0) continue;
                const Real dp = pred.at(t + 1, y, x, 0) - pred.at(t, y, x, 0);
                const Real dg = gt.at(t + 1, y, x, 0) - gt.at(t, y, x, 0);
                acc += std::abs(dp - dg);
                ++n;
            }
    if (n == 0) throw std::runtime_error("tepe: no jointly valid pixel pairs");
    return acc / Real(n);
}

ClipMetrics evaluate_clip(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    return {rmse(pred, gt, mask), mae(pred, gt, mask), tepe(pred, gt, mask)};
}

ClipMetrics average(const std::vector<ClipMetrics>& per_clip) {
    require(!per_clip.empty(), "metrics::average: empty input");
    ClipMetrics m;
    for (const auto& c : per_clip) {
        m.rmse += c.rmse;
        m.mae += c.mae;
        m.tepe += c.tepe;
    }
    const Real n = Real(per_clip.size());
    return {m.rmse / n, m.mae / n, m.tepe / n};
}

} // namespace stdnet::metrics
