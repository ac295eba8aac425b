#pragma once

#include "stdnet/tensor.hpp"

namespace stdnet::kernels {

// Global switch for the OpenMP paths. All kernels are deterministic either
// way (threads only ever write disjoint output ranges); serial mode exists
// for debugging and for honoring STDNET_DETERMINISTIC=1.
bool parallel_enabled();
void set_parallel(bool on);
void init_from_env(); // reads STDNET_DETERMINISTIC / STDNET_THREADS

enum class Interp { Bilinear, Bicubic };

// Per-frame 2-D convolution. weight is (co, kh, kw, ci), bias has co entries.
// Output spatial dims: (h + 2*pad - kh)/stride + 1.
Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const std::vector<Real>& bias,
                      int stride, int pad);
void conv2d_backward(const Tensor& x, const Tensor& weight, int stride, int pad,
                     const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w,
                     std::vector<Real>* grad_b);

// Separable resize with half-pixel centers and clamp-to-edge taps. Taps are
// renormalized to sum to exactly 1, so constants are preserved bit-tight.
// Bicubic uses the Catmull-Rom kernel (a = -0.5).
Tensor resize_forward(const Tensor& x, int out_h, int out_w, Interp interp);
void resize_backward(const Shape& in_shape, const Tensor& grad_out, Interp interp,
                     Tensor& grad_x);

// Channel-to-space rearrangement: (t,h,w,c) -> (t, h*r, w*r, c/r^2).
// Output channel ci at subpixel (dy,dx) reads input channel ci*r^2 + dy*r + dx.
Tensor pixel_shuffle_forward(const Tensor& x, int r);
Tensor pixel_shuffle_backward(const Tensor& grad_out, int r);

// Per-pixel predicted filtering. kernels is (t,h,w,g*k*k); channels are split
// into g equal groups sharing one k*k kernel each. Zero padding at borders.
Tensor dynamic_filter_forward(const Tensor& x, const Tensor& kernels, int ksize, int groups);
void dynamic_filter_backward(const Tensor& x, const Tensor& kernels, int ksize, int groups,
                             const Tensor& grad_out, Tensor* grad_x, Tensor* grad_k);

// Modulated deformable convolution, stride 1, same-size output. weight is
// (co, kd, kd, ci); offsets (t,h,w,2*K) as (dy,dx) pairs per sample; modulation
// (t,h,w,K); K = kd*kd. Samples bilinearly at grid + kernel tap + offset;
// out-of-bounds reads are zero.
Tensor deform_conv_forward(const Tensor& x, const Tensor& weight, const std::vector<Real>& bias,
                           const Tensor& offsets, const Tensor& modulation);
void deform_conv_backward(const Tensor& x, const Tensor& weight, const Tensor& offsets,
                          const Tensor& modulation, const Tensor& grad_out, Tensor* grad_x,
                          Tensor* grad_w, std::vector<Real>* grad_b, Tensor* grad_off,
                          Tensor* grad_mod);

} // namespace stdnet::kernels
