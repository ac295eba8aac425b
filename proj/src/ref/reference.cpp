#include "reference.hpp"

#include <algorithm>
#include <cmath>

namespace stdnet::ref {

Tensor conv2d(const Tensor& x, const Tensor& weight, const std::vector<Real>& bias, int stride,
              int pad) {
    const int kh = weight.h(), kw = weight.w(), ci = weight.c(), co = weight.t();
    const int oh = (x.h() + 2 * pad - kh) / stride + 1;
    const int ow = (x.w() + 2 * pad - kw) / stride + 1;
    Tensor out(x.t(), oh, ow, co);
    for (int t = 0; t < x.t(); ++t)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int o = 0; o < co; ++o) {
                    Real acc = bias[o];
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx)
                            for (int i = 0; i < ci; ++i) {
                                const int iy = oy * stride + ky - pad;
                                const int ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                                acc += weight.at(o, ky, kx, i) * x.at(t, iy, ix, i);
                            }
                    out.at(t, oy, ox, o) = acc;
                }
    return out;
}

namespace {

Real cubic_w(Real d) {
    constexpr Real a = -0.5;
    d = std::abs(d);
    if (d < 1.0) return (a + 2.0) * d * d * d - (a + 3.0) * d * d + 1.0;
    if (d < 2.0) return a * (d * d * d - 5.0 * d * d + 8.0 * d - 4.0);
    return 0.0;
}

// Half-pixel-center resize evaluated directly as a 2-D weighted sum with
// clamp-to-edge and renormalization.
Tensor resize_generic(const Tensor& x, int out_h, int out_w, int support, bool cubic) {
    Tensor out(x.t(), out_h, out_w, x.c());
    const Real sy = Real(x.h()) / out_h, sx = Real(x.w()) / out_w;
    for (int t = 0; t < x.t(); ++t)
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                const Real cy = (oy + 0.5) * sy - 0.5;
                const Real cx = (ox + 0.5) * sx - 0.5;
                const int by = (int)std::floor(cy) - (support / 2 - 1);
                const int bx = (int)std::floor(cx) - (support / 2 - 1);
                for (int ch = 0; ch < x.c(); ++ch) {
                    Real acc = 0.0, wsum = 0.0;
                    for (int a = 0; a < support; ++a)
                        for (int b = 0; b < support; ++b) {
                            const Real wy = cubic ? cubic_w(cy - (by + a)) : 1.0 - std::abs(cy - (by + a));
                            const Real wx = cubic ? cubic_w(cx - (bx + b)) : 1.0 - std::abs(cx - (bx + b));
                            const Real w = wy * wx;
                            const int iy = std::clamp(by + a, 0, x.h() - 1);
                            const int ix = std::clamp(bx + b, 0, x.w() - 1);
                            acc += w * x.at(t, iy, ix, ch);
                            wsum += w;
                        }
                    out.at(t, oy, ox, ch) = acc / wsum;
                }
            }
    return out;
}

} // namespace

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
    return resize_generic(x, out_h, out_w, 2, false);
}

Tensor resize_bicubic(const Tensor& x, int out_h, int out_w) {
    return resize_generic(x, out_h, out_w, 4, true);
}

Tensor pixel_shuffle(const Tensor& x, int r) {
    const int co = x.c() / (r * r);
    Tensor out(x.t(), x.h() * r, x.w() * r, co);
    for (int t = 0; t < x.t(); ++t)
        for (int y = 0; y < out.h(); ++y)
            for (int xx = 0; xx < out.w(); ++xx)
                for (int o = 0; o < co; ++o)
                    out.at(t, y, xx, o) =
                        x.at(t, y / r, xx / r, o * r * r + (y % r) * r + (xx % r));
    return out;
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
    Tensor out(x.t(), x.h() / r, x.w() / r, x.c() * r * r);
    for (int t = 0; t < x.t(); ++t)
        for (int y = 0; y < x.h(); ++y)
            for (int xx = 0; xx < x.w(); ++xx)
                for (int ch = 0; ch < x.c(); ++ch)
                    out.at(t, y / r, xx / r, ch * r * r + (y % r) * r + (xx % r)) =
                        x.at(t, y, xx, ch);
    return out;
}

Tensor dynamic_filter(const Tensor& x, const Tensor& kernels, int ksize, int groups) {
    const int half = ksize / 2, cpg = x.c() / groups;
    Tensor out(x.shape());
    for (int t = 0; t < x.t(); ++t)
        for (int y = 0; y < x.h(); ++y)
            for (int xx = 0; xx < x.w(); ++xx)
                for (int ch = 0; ch < x.c(); ++ch) {
                    const int g = ch / cpg;
                    Real acc = 0.0;
                    for (int ky = 0; ky < ksize; ++ky)
                        for (int kx = 0; kx < ksize; ++kx) {
                            const int iy = y + ky - half, ix = xx + kx - half;
                            if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                            acc += kernels.at(t, y, xx, g * ksize * ksize + ky * ksize + kx) *
                                   x.at(t, iy, ix, ch);
                        }
                    out.at(t, y, xx, ch) = acc;
                }
    return out;
}

Tensor box_filter(const Tensor& x, int ksize) {
    const int half = ksize / 2;
    Tensor out(x.shape());
    const Real w = 1.0 / (ksize * ksize);
    for (int t = 0; t < x.t(); ++t)
        for (int y = 0; y < x.h(); ++y)
            for (int xx = 0; xx < x.w(); ++xx)
                for (int ch = 0; ch < x.c(); ++ch) {
                    Real acc = 0.0;
                    for (int dy = -half; dy <= half; ++dy)
                        for (int dx = -half; dx <= half; ++dx) {
                            const int iy = y + dy, ix = xx + dx;
                            if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                            acc += x.at(t, iy, ix, ch);
                        }
                    out.at(t, y, xx, ch) = acc * w;
                }
    return out;
}

namespace {

Real sample_zero_pad(const Tensor& x, int t, Real sy, Real sx, int ch) {
    const int y0 = (int)std::floor(sy), x0 = (int)std::floor(sx);
    const Real fy = sy - y0, fx = sx - x0;
    Real acc = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const int iy = y0 + a, ix = x0 + b;
            if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
            acc += (a ? fy : 1.0 - fy) * (b ? fx : 1.0 - fx) * x.at(t, iy, ix, ch);
        }
    return acc;
}

} // namespace

Tensor deform_conv(const Tensor& x, const Tensor& weight, const std::vector<Real>& bias,
                   const Tensor& offsets, const Tensor& modulation) {
    const int kd = weight.h(), ci = weight.c(), co = weight.t();
    const int half = kd / 2;
    Tensor out(x.t(), x.h(), x.w(), co);
    for (int t = 0; t < x.t(); ++t)
        for (int y = 0; y < x.h(); ++y)
            for (int xx = 0; xx < x.w(); ++xx)
                for (int o = 0; o < co; ++o) {
                    Real acc = bias[o];
                    for (int ky = 0; ky < kd; ++ky)
                        for (int kx = 0; kx < kd; ++kx) {
                            const int j = ky * kd + kx;
                            const Real sy = y + ky - half + offsets.at(t, y, xx, 2 * j);
                            const Real sx = xx + kx - half + offsets.at(t, y, xx, 2 * j + 1);
                            const Real m = modulation.at(t, y, xx, j);
                            for (int i = 0; i < ci; ++i)
                                acc += weight.at(o, ky, kx, i) * m *
                                       sample_zero_pad(x, t, sy, sx, i);
                        }
                    out.at(t, y, xx, o) = acc;
                }
    return out;
}

} // namespace stdnet::ref
