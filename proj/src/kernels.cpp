#include "stdnet/kernels.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stdnet::kernels {

namespace {
bool g_parallel = true;
}

bool parallel_enabled() { return g_parallel; }
void set_parallel(bool on) { g_parallel = on; }

void init_from_env() {
    if (const char* d = std::getenv("STDNET_DETERMINISTIC"); d && std::string(d) == "1") {
        // Kernels are deterministic regardless; serial mode removes even
        // thread-count variation from timing-sensitive callers.
        g_parallel = false;
    }
#ifdef _OPENMP
    if (const char* t = std::getenv("STDNET_THREADS")) {
        int n = std::atoi(t);
        if (n > 0) omp_set_num_threads(n);
    }
#endif
}

// ---------------------------------------------------------------------------
// conv2d

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const std::vector<Real>& bias,
                      int stride, int pad) {
    const int kh = weight.h(), kw = weight.w(), ci = weight.c(), co = weight.t();
    require(x.c() == ci, "conv2d: input channels " + std::to_string(x.c()) +
                             " != weight channels " + std::to_string(ci));
    require((int)bias.size() == co, "conv2d: bias size mismatch");
    require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
    const int oh = (x.h() + 2 * pad - kh) / stride + 1;
    const int ow = (x.w() + 2 * pad - kw) / stride + 1;
    require(oh >= 1 && ow >= 1, "conv2d: output dims collapse to zero");

    Tensor out(x.t(), oh, ow, co);
#pragma omp parallel for collapse(2) schedule(static) if (g_parallel)
    for (int t = 0; t < x.t(); ++t) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                for (int o = 0; o < co; ++o) {
                    Real acc = bias[o];
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= x.h()) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= x.w()) continue;
                            const Real* xp = x.data() + x.index(t, iy, ix, 0);
                            const Real* wp = weight.data() + weight.index(o, ky, kx, 0);
                            for (int i = 0; i < ci; ++i) acc += wp[i] * xp[i];
                        }
                    }
                    out.at(t, oy, ox, o) = acc;
                }
            }
        }
    }
    return out;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, int stride, int pad,
                     const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w,
                     std::vector<Real>* grad_b) {
    const int kh = weight.h(), kw = weight.w(), ci = weight.c(), co = weight.t();
    const int oh = grad_out.h(), ow = grad_out.w();

    if (grad_x) {
        // Gather form: each input position collects from the output taps that
        // touched it, so threads never share a write target.
#pragma omp parallel for collapse(2) schedule(static) if (g_parallel)
        for (int t = 0; t < x.t(); ++t) {
            for (int y = 0; y < x.h(); ++y) {
                for (int xx = 0; xx < x.w(); ++xx) {
                    Real* gxp = grad_x->data() + grad_x->index(t, y, xx, 0);
                    for (int ky = 0; ky < kh; ++ky) {
                        const int num_y = y + pad - ky;
                        if (num_y < 0 || num_y % stride) continue;
                        const int oy = num_y / stride;
                        if (oy >= oh) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int num_x = xx + pad - kx;
                            if (num_x < 0 || num_x % stride) continue;
                            const int ox = num_x / stride;
                            if (ox >= ow) continue;
                            const Real* gop = grad_out.data() + grad_out.index(t, oy, ox, 0);
                            for (int o = 0; o < co; ++o) {
                                const Real g = gop[o];
                                const Real* wp = weight.data() + weight.index(o, ky, kx, 0);
                                for (int i = 0; i < ci; ++i) gxp[i] += g * wp[i];
                            }
                        }
                    }
                }
            }
        }
    }

    if (grad_w) {
#pragma omp parallel for schedule(static) if (g_parallel)
        for (int o = 0; o < co; ++o) {
            for (int t = 0; t < x.t(); ++t) {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        const Real g = grad_out.at(t, oy, ox, o);
                        if (g == 0.0) continue;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= x.h()) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= x.w()) continue;
                                const Real* xp = x.data() + x.index(t, iy, ix, 0);
                                Real* gwp = grad_w->data() + grad_w->index(o, ky, kx, 0);
                                for (int i = 0; i < ci; ++i) gwp[i] += g * xp[i];
                            }
                        }
                    }
                }
            }
        }
    }

    if (grad_b) {
#pragma omp parallel for schedule(static) if (g_parallel)
        for (int o = 0; o < co; ++o) {
            Real acc = 0.0;
            for (int t = 0; t < x.t(); ++t)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) acc += grad_out.at(t, oy, ox, o);
            (*grad_b)[o] += acc;
        }
    }
}

// ---------------------------------------------------------------------------
// resize

namespace {

struct TapSet {
    int n = 0;
    std::array<int, 4> idx{};
    std::array<Real, 4> w{};
};

Real cubic_weight(Real d) {
    // Keys kernel, a = -0.5 (Catmull-Rom).
    constexpr Real a = -0.5;
    d = std::abs(d);
    if (d < 1.0) return (a + 2.0) * d * d * d - (a + 3.0) * d * d + 1.0;
    if (d < 2.0) return a * d * d * d - 5.0 * a * d * d + 8.0 * a * d - 4.0 * a;
    return 0.0;
}

std::vector<TapSet> make_taps(int in, int out, Interp interp) {
    std::vector<TapSet> taps(out);
    const Real scale = Real(in) / Real(out);
    for (int o = 0; o < out; ++o) {
        const Real src = (o + 0.5) * scale - 0.5;
        int raw_idx[4];
        Real raw_w[4];
        int n;
        if (interp == Interp::Bilinear) {
            const int i0 = (int)std::floor(src);
            const Real f = src - i0;
            raw_idx[0] = i0; raw_w[0] = 1.0 - f;
            raw_idx[1] = i0 + 1; raw_w[1] = f;
            n = 2;
        } else {
            const int base = (int)std::floor(src);
            n = 4;
            for (int j = 0; j < 4; ++j) {
                raw_idx[j] = base - 1 + j;
                raw_w[j] = cubic_weight(src - raw_idx[j]);
            }
        }
        // Clamp to edge, merge duplicate indices, renormalize.
        TapSet& ts = taps[o];
        Real total = 0.0;
        for (int j = 0; j < n; ++j) {
            const int ci = std::clamp(raw_idx[j], 0, in - 1);
            total += raw_w[j];
            bool merged = false;
            for (int k = 0; k < ts.n; ++k)
                if (ts.idx[k] == ci) {
                    ts.w[k] += raw_w[j];
                    merged = true;
                    break;
                }
            if (!merged) {
                ts.idx[ts.n] = ci;
                ts.w[ts.n] = raw_w[j];
                ++ts.n;
            }
        }
        for (int k = 0; k < ts.n; ++k) ts.w[k] /= total;
    }
    return taps;
}

} // namespace

Tensor resize_forward(const Tensor& x, int out_h, int out_w, Interp interp) {
    require(out_h >= 1 && out_w >= 1, "resize: output dims must be >= 1");
    const auto ty = make_taps(x.h(), out_h, interp);
    const auto tx = make_taps(x.w(), out_w, interp);
    Tensor out(x.t(), out_h, out_w, x.c());
    const int c = x.c();
#pragma omp parallel for collapse(2) schedule(static) if (g_parallel)
    for (int t = 0; t < x.t(); ++t) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                Real* op = out.data() + out.index(t, oy, ox, 0);
                for (int a = 0; a < ty[oy].n; ++a) {
                    for (int b = 0; b < tx[ox].n; ++b) {
                        const Real wgt = ty[oy].w[a] * tx[ox].w[b];
                        const Real* xp = x.data() + x.index(t, ty[oy].idx[a], tx[ox].idx[b], 0);
                        for (int i = 0; i < c; ++i) op[i] += wgt * xp[i];
                    }
                }
            }
        }
    }
    return out;
}

void resize_backward(const Shape& in_shape, const Tensor& grad_out, Interp interp,
                     Tensor& grad_x) {
    const auto ty = make_taps(in_shape.h, grad_out.h(), interp);
    const auto tx = make_taps(in_shape.w, grad_out.w(), interp);
    const int c = in_shape.c;
    // Scatter; parallel over (t, channel) planes keeps writes disjoint.
#pragma omp parallel for collapse(2) schedule(static) if (g_parallel)
    for (int t = 0; t < in_shape.t; ++t) {
        for (int i = 0; i < c; ++i) {
            for (int oy = 0; oy < grad_out.h(); ++oy) {
                for (int ox = 0; ox < grad_out.w(); ++ox) {
                    const Real g = grad_out.at(t, oy, ox, i);
                    if (g == 0.0) continue;
                    for (int a = 0; a < ty[oy].n; ++a)
                        for (int b = 0; b < tx[ox].n; ++b)
                            grad_x.at(t, ty[oy].idx[a], tx[ox].idx[b], i) +=
                                ty[oy].w[a] * tx[ox].w[b] * g;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// pixel shuffle

Tensor pixel_shuffle_forward(const Tensor& x, int r) {
    require(r >= 1, "pixel_shuffle: r must be positive");
    require(x.c() % (r * r) == 0, "pixel_shuffle: channels " + std::to_string(x.c()) +
                                      " not divisible by r^2 = " + std::to_string(r * r));
    const int co = x.c() / (r * r);
    Tensor out(x.t(), x.h() * r, x.w() * r, co);
#pragma omp parallel for collapse(2) schedule(static) if (g_parallel)
    for (int t = 0; t < x.t(); ++t) {
        for (int y = 0; y < x.h(); ++y) {
            for (int xx = 0; xx < x.w(); ++xx) {
                for (int o = 0; o < co; ++o)
                    for (int dy = 0; dy < r; ++dy)
                        for (int dx = 0; dx < r; ++dx)
                            out.at(t, y * r + dy, xx * r + dx, o) =
                                x.at(t, y, xx, o * r * r + dy * r + dx);
            }
        }
    }
    return out;
}

Tensor pixel_shuffle_backward(const Tensor& grad_out, int r) {
    const int co = grad_out.c();
    Tensor gx(grad_out.t(), grad_out.h() / r, grad_out.w() / r, co * r * r);
#pragma omp parallel for collapse(2) schedule(static) if (g_parallel)
    for (int t = 0; t < gx.t(); ++t) {
        for (int y = 0; y < gx.h(); ++y) {
            for (int xx = 0; xx < gx.w(); ++xx) {
                for (int o = 0; o < co; ++o)
                    for (int dy = 0; dy < r; ++dy)
                        for (int dx = 0; dx < r; ++dx)
                            gx.at(t, y, xx, o * r * r + dy * r + dx) =
                                grad_out.at(t, y * r + dy, xx * r + dx, o);
            }
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// dynamic filter

Tensor dynamic_filter_forward(const Tensor& x, const Tensor& kernels, int ksize, int groups) {
    require(ksize % 2 == 1, "dynamic_filter: kernel size must be odd");
    require(x.t() == kernels.t() && x.h() == kernels.h() && x.w() == kernels.w(),
            "dynamic_filter: kernel field dims " + kernels.shape().str() +
                " do not match input " + x.shape().str());
    require(kernels.c() == groups * ksize * ksize, "dynamic_filter: kernel channels mismatch");
    require(x.c() % groups == 0, "dynamic_filter: channels not divisible by groups");
    const int half = ksize / 2;
    const int cpg = x.c() / groups;
    Tensor out(x.shape());
#pragma omp parallel for collapse(2) schedule(static) if (g_parallel)
    for (int t = 0; t < x.t(); ++t) {
        for (int y = 0; y < x.h(); ++y) {
            for (int xx = 0; xx < x.w(); ++xx) {
                for (int g = 0; g < groups; ++g) {
                    const Real* kp = kernels.data() + kernels.index(t, y, xx, g * ksize * ksize);
                    for (int j = 0; j < cpg; ++j) {
                        const int ch = g * cpg + j;
                        Real acc = 0.0;
                        for (int ky = 0; ky < ksize; ++ky) {
                            const int iy = y + ky - half;
                            if (iy < 0 || iy >= x.h()) continue;
                            for (int kx = 0; kx < ksize; ++kx) {
                                const int ix = xx + kx - half;
                                if (ix < 0 || ix >= x.w()) continue;
                                acc += kp[ky * ksize + kx] * x.at(t, iy, ix, ch);
                            }
                        }
                        out.at(t, y, xx, ch) = acc;
                    }
                }
            }
        }
    }
    return out;
}

void dynamic_filter_backward(const Tensor& x, const Tensor& kernels, int ksize, int groups,
                             const Tensor& grad_out, Tensor* grad_x, Tensor* grad_k) {
    const int half = ksize / 2;
    const int cpg = x.c() / groups;

    if (grad_k) {
#pragma omp parallel for collapse(2) schedule(static) if (g_parallel)
        for (int t = 0; t < x.t(); ++t) {
            for (int y = 0; y < x.h(); ++y) {
                for (int xx = 0; xx < x.w(); ++xx) {
                    for (int g = 0; g < groups; ++g) {
                        Real* gkp = grad_k->data() + grad_k->index(t, y, xx, g * ksize * ksize);
                        for (int ky = 0; ky < ksize; ++ky) {
                            const int iy = y + ky - half;
                            if (iy < 0 || iy >= x.h()) continue;
                            for (int kx = 0; kx < ksize; ++kx) {
                                const int ix = xx + kx - half;
                                if (ix < 0 || ix >= x.w()) continue;
                                Real acc = 0.0;
                                for (int j = 0; j < cpg; ++j)
                                    acc += grad_out.at(t, y, xx, g * cpg + j) *
                                           x.at(t, iy, ix, g * cpg + j);
                                gkp[ky * ksize + kx] += acc;
                            }
                        }
                    }
                }
            }
        }
    }

    if (grad_x) {
        // Gather: input (y,x) receives from outputs at (y - ky + half, ...).
#pragma omp parallel for collapse(2) schedule(static) if (g_parallel)
        for (int t = 0; t < x.t(); ++t) {
            for (int y = 0; y < x.h(); ++y) {
                for (int xx = 0; xx < x.w(); ++xx) {
                    for (int ky = 0; ky < ksize; ++ky) {
                        const int oy = y - ky + half;
                        if (oy < 0 || oy >= x.h()) continue;
                        for (int kx = 0; kx < ksize; ++kx) {
                            const int ox = xx - kx + half;
                            if (ox < 0 || ox >= x.w()) continue;
                            for (int g = 0; g < groups; ++g) {
                                const Real kw =
                                    kernels.at(t, oy, ox, g * ksize * ksize + ky * ksize + kx);
                                for (int j = 0; j < cpg; ++j)
                                    grad_x->at(t, y, xx, g * cpg + j) +=
                                        kw * grad_out.at(t, oy, ox, g * cpg + j);
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// modulated deformable convolution

namespace {

struct BilinearSample {
    // corner indices (or -1 when outside) and weights
    int iy[2], ix[2];
    Real wy[2], wx[2];
};

inline BilinearSample bilinear_at(Real sy, Real sx, int h, int w) {
    BilinearSample s;
    const int y0 = (int)std::floor(sy);
    const int x0 = (int)std::floor(sx);
    const Real fy = sy - y0, fx = sx - x0;
    s.iy[0] = (y0 >= 0 && y0 < h) ? y0 : -1;
    s.iy[1] = (y0 + 1 >= 0 && y0 + 1 < h) ? y0 + 1 : -1;
    s.ix[0] = (x0 >= 0 && x0 < w) ? x0 : -1;
    s.ix[1] = (x0 + 1 >= 0 && x0 + 1 < w) ? x0 + 1 : -1;
    s.wy[0] = 1.0 - fy;
    s.wy[1] = fy;
    s.wx[0] = 1.0 - fx;
    s.wx[1] = fx;
    return s;
}

} // namespace

Tensor deform_conv_forward(const Tensor& x, const Tensor& weight, const std::vector<Real>& bias,
                           const Tensor& offsets, const Tensor& modulation) {
    const int kd = weight.h(), ci = weight.c(), co = weight.t();
    const int K = kd * kd, half = kd / 2;
    require(weight.w() == kd, "deform_conv: weight must be square");
    require(x.c() == ci, "deform_conv: input channel mismatch");
    require(offsets.t() == x.t() && offsets.h() == x.h() && offsets.w() == x.w() &&
                offsets.c() == 2 * K,
            "deform_conv: offset field dims " + offsets.shape().str() + " inconsistent with " +
                x.shape().str() + " and K=" + std::to_string(K));
    require(modulation.t() == x.t() && modulation.h() == x.h() && modulation.w() == x.w() &&
                modulation.c() == K,
            "deform_conv: modulation dims inconsistent");
    require((int)bias.size() == co, "deform_conv: bias size mismatch");

    Tensor out(x.t(), x.h(), x.w(), co);
#pragma omp parallel for collapse(2) schedule(static) if (g_parallel)
    for (int t = 0; t < x.t(); ++t) {
        for (int y = 0; y < x.h(); ++y) {
            for (int xx = 0; xx < x.w(); ++xx) {
                // sampled, modulated values per (tap, channel)
                std::vector<Real> sampled(K * ci, 0.0);
                for (int j = 0; j < K; ++j) {
                    const Real sy = y + (j / kd - half) + offsets.at(t, y, xx, 2 * j);
                    const Real sx = xx + (j % kd - half) + offsets.at(t, y, xx, 2 * j + 1);
                    const Real m = modulation.at(t, y, xx, j);
                    const auto s = bilinear_at(sy, sx, x.h(), x.w());
                    for (int a = 0; a < 2; ++a) {
                        if (s.iy[a] < 0) continue;
                        for (int b = 0; b < 2; ++b) {
                            if (s.ix[b] < 0) continue;
                            const Real wgt = m * s.wy[a] * s.wx[b];
                            const Real* xp = x.data() + x.index(t, s.iy[a], s.ix[b], 0);
                            for (int i = 0; i < ci; ++i) sampled[j * ci + i] += wgt * xp[i];
                        }
                    }
                }
                Real* op = out.data() + out.index(t, y, xx, 0);
                for (int o = 0; o < co; ++o) {
                    Real acc = bias[o];
                    const Real* wp = weight.data() + weight.index(o, 0, 0, 0);
                    for (int j = 0; j < K; ++j)
                        for (int i = 0; i < ci; ++i) acc += wp[j * ci + i] * sampled[j * ci + i];
                    op[o] = acc;
                }
            }
        }
    }
    return out;
}

void deform_conv_backward(const Tensor& x, const Tensor& weight, const Tensor& offsets,
                          const Tensor& modulation, const Tensor& grad_out, Tensor* grad_x,
                          Tensor* grad_w, std::vector<Real>* grad_b, Tensor* grad_off,
                          Tensor* grad_mod) {
    const int kd = weight.h(), ci = weight.c(), co = weight.t();
    const int K = kd * kd, half = kd / 2;

    if (grad_b) {
        for (int o = 0; o < co; ++o) {
            Real acc = 0.0;
            for (int t = 0; t < x.t(); ++t)
                for (int y = 0; y < x.h(); ++y)
                    for (int xx = 0; xx < x.w(); ++xx) acc += grad_out.at(t, y, xx, o);
            (*grad_b)[o] += acc;
        }
    }

    // grad_x needs a scatter shared across output channels and taps; keep the
    // spatial loop serial per frame for determinism. Weight gradients go into
    // per-frame buffers and are reduced in frame order afterwards.
    std::vector<Tensor> gw_per_frame;
    if (grad_w) gw_per_frame.assign(x.t(), Tensor(weight.shape()));
#pragma omp parallel for schedule(static) if (g_parallel && x.t() > 1)
    for (int t = 0; t < x.t(); ++t) {
        Tensor* gw_local = grad_w ? &gw_per_frame[t] : nullptr;
        for (int y = 0; y < x.h(); ++y) {
            for (int xx = 0; xx < x.w(); ++xx) {
                const Real* gop = grad_out.data() + grad_out.index(t, y, xx, 0);
                for (int j = 0; j < K; ++j) {
                    const Real dy0 = offsets.at(t, y, xx, 2 * j);
                    const Real dx0 = offsets.at(t, y, xx, 2 * j + 1);
                    const Real sy = y + (j / kd - half) + dy0;
                    const Real sx = xx + (j % kd - half) + dx0;
                    const Real m = modulation.at(t, y, xx, j);
                    const auto s = bilinear_at(sy, sx, x.h(), x.w());

                    // g_j[i] = sum_o grad_out[o] * w(o,j,i)
                    std::vector<Real> gj(ci, 0.0);
                    for (int o = 0; o < co; ++o) {
                        const Real g = gop[o];
                        if (g == 0.0) continue;
                        const Real* wp = weight.data() + weight.index(o, 0, 0, 0) + j * ci;
                        for (int i = 0; i < ci; ++i) gj[i] += g * wp[i];
                    }

                    Real sampled_dy = 0.0, sampled_dx = 0.0, sampled_val_dot = 0.0;
                    std::vector<Real> sampled(ci, 0.0);
                    for (int a = 0; a < 2; ++a) {
                        if (s.iy[a] < 0) continue;
                        for (int b = 0; b < 2; ++b) {
                            if (s.ix[b] < 0) continue;
                            const Real* xp = x.data() + x.index(t, s.iy[a], s.ix[b], 0);
                            const Real wgt = s.wy[a] * s.wx[b];
                            const Real dwy = (a == 0 ? -1.0 : 1.0) * s.wx[b];
                            const Real dwx = s.wy[a] * (b == 0 ? -1.0 : 1.0);
                            Real dot = 0.0;
                            for (int i = 0; i < ci; ++i) {
                                sampled[i] += wgt * xp[i];
                                dot += gj[i] * xp[i];
                            }
                            sampled_dy += dwy * dot;
                            sampled_dx += dwx * dot;
                            if (grad_x) {
                                Real* gxp = grad_x->data() + grad_x->index(t, s.iy[a], s.ix[b], 0);
                                for (int i = 0; i < ci; ++i) gxp[i] += m * wgt * gj[i];
                            }
                        }
                    }
                    for (int i = 0; i < ci; ++i) sampled_val_dot += gj[i] * sampled[i];

                    if (grad_off) {
                        grad_off->at(t, y, xx, 2 * j) += m * sampled_dy;
                        grad_off->at(t, y, xx, 2 * j + 1) += m * sampled_dx;
                    }
                    if (grad_mod) grad_mod->at(t, y, xx, j) += sampled_val_dot;
                    if (gw_local) {
                        for (int o = 0; o < co; ++o) {
                            const Real g = gop[o];
                            if (g == 0.0) continue;
                            Real* gwp = gw_local->data() + gw_local->index(o, 0, 0, 0) + j * ci;
                            for (int i = 0; i < ci; ++i) gwp[i] += g * m * sampled[i];
                        }
                    }
                }
            }
        }
    }
    if (grad_w) {
        for (int t = 0; t < x.t(); ++t)
            for (std::size_t i = 0; i < grad_w->numel(); ++i) (*grad_w)[i] += gw_per_frame[t][i];
    }
}

} // namespace stdnet::kernels
