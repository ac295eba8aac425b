#pragma once

#include "stdnet/tensor.hpp"

// Naive single-threaded implementations of every tensor kernel. These exist
// as oracles: the tests check the OpenMP kernels against them, and the
// benchmark tool reports the speedup. Clarity over speed throughout.
namespace stdnet::ref {

Tensor conv2d(const Tensor& x, const Tensor& weight, const std::vector<Real>& bias, int stride,
              int pad);

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
Tensor resize_bicubic(const Tensor& x, int out_h, int out_w);

Tensor pixel_shuffle(const Tensor& x, int r);
Tensor pixel_unshuffle(const Tensor& x, int r);

Tensor dynamic_filter(const Tensor& x, const Tensor& kernels, int ksize, int groups);
Tensor box_filter(const Tensor& x, int ksize);

Tensor deform_conv(const Tensor& x, const Tensor& weight, const std::vector<Real>& bias,
                   const Tensor& offsets, const Tensor& modulation);

} // namespace stdnet::ref
