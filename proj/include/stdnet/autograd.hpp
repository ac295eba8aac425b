#pragma once

#include "stdnet/kernels.hpp"
#include "stdnet/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

// Reverse-mode autodiff over Tensor. Graphs are built per evaluation; leaves
// (parameters, inputs) can be reused across graphs. backward() visits nodes in
// reverse creation order, which is a valid topological order because ops only
// ever consume already-built nodes.
namespace stdnet::ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad; // allocated by backward(); zeroed per call
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop; // accumulates node.grad into parents

    const Shape& shape() const { return value.shape(); }
};

Var leaf(Tensor v, bool requires_grad);
Var constant(Tensor v);

// Runs reverse-mode accumulation from a scalar (1,1,1,1) root.
void backward(const Var& root);

// elementwise / shape ops
Var add(const Var& a, const Var& b);
Var add_all(const std::vector<Var>& xs);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b); // allows c==1 broadcast on either side
Var mul_const(const Var& a, const Tensor& k); // k may have c==1 (broadcast)
Var scale(const Var& a, Real s);
Var add_scalar(const Var& a, Real s);
Var abs(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var sqrt(const Var& a);
Var clamp(const Var& a, Real lo, Real hi);

Var concat_c(const std::vector<Var>& xs);
Var slice_c(const Var& a, int start, int len);
Var select_frame(const Var& a, int t);
Var stack_frames(const std::vector<Var>& frames);

// reductions
Var sum(const Var& a);                       // -> (1,1,1,1)
Var channel_mean(const Var& a);              // -> (t,h,w,1)
Var channel_max(const Var& a);               // -> (t,h,w,1), grad to argmax
Var reduce_min_masked(const Var& a, const Tensor& mask); // scalar min over mask>0
Var sub_broadcast_scalar(const Var& a, const Var& s);    // a - s, s is (1,1,1,1)

// structured ops backed by the kernels
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var resize(const Var& x, int out_h, int out_w, kernels::Interp interp);
Var resize_factor(const Var& x, Real factor, kernels::Interp interp);
Var pixel_shuffle(const Var& x, int r);
Var dynamic_filter(const Var& x, const Var& kernels_field, int ksize, int groups);
Var deform_conv(const Var& x, const Var& weight, const Var& bias, const Var& offsets,
                const Var& modulation);
Var softmax_groups(const Var& a, int group_size); // softmax over channel blocks

} // namespace stdnet::ag
