#include "stdnet/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace stdnet::ag {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = g_next_id.fetch_add(1);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

void ensure_grad(const Var& v) {
    if (v->grad.shape() == v->value.shape())
        v->grad.fill(0.0);
    else
        v->grad = Tensor(v->value.shape());
}

} // namespace

Var leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->id = g_next_id.fetch_add(1);
    n->requires_grad = requires_grad;
    return n;
}

Var constant(Tensor v) { return leaf(std::move(v), false); }

void backward(const Var& root) {
    require(root->shape() == Shape{1, 1, 1, 1}, "backward: root must be scalar");
    // Collect the reachable subgraph, then run in decreasing id order.
    std::vector<Node*> nodes;
    std::unordered_set<Node*> seen;
    std::vector<Var> stack{root};
    std::vector<Var> keepalive;
    while (!stack.empty()) {
        Var v = stack.back();
        stack.pop_back();
        if (!v->requires_grad || !seen.insert(v.get()).second) continue;
        keepalive.push_back(v);
        nodes.push_back(v.get());
        for (const auto& p : v->parents) stack.push_back(p);
    }
    std::sort(nodes.begin(), nodes.end(), [](Node* a, Node* b) { return a->id > b->id; });
    for (const Var& v : keepalive) ensure_grad(v);
    root->grad.fill(1.0);
    for (Node* n : nodes)
        if (n->backprop) n->backprop(*n);
}

// ---------------------------------------------------------------------------
// elementwise

Var add(const Var& a, const Var& b) {
    require(a->shape() == b->shape(), "add: shape mismatch " + a->shape().str() + " vs " + b->shape().str());
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i) b->grad[i] += n.grad[i];
    });
}

Var add_all(const std::vector<Var>& xs) {
    require(!xs.empty(), "add_all: empty");
    Var acc = xs[0];
    for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
    return acc;
}

Var sub(const Var& a, const Var& b) {
    require(a->shape() == b->shape(), "sub: shape mismatch");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i) b->grad[i] -= n.grad[i];
    });
}

namespace {

// a has full channels, m has either matching channels or c == 1.
void check_bcast(const Shape& a, const Shape& m) {
    require(a.t == m.t && a.h == m.h && a.w == m.w && (a.c == m.c || m.c == 1),
            "mul: incompatible shapes " + a.str() + " vs " + m.str());
}

} // namespace

Var mul(const Var& a0, const Var& b0) {
    // Put the (possibly) broadcast side second.
    const Var& a = (a0->shape().c == 1 && b0->shape().c != 1) ? b0 : a0;
    const Var& b = (a0->shape().c == 1 && b0->shape().c != 1) ? a0 : b0;
    check_bcast(a->shape(), b->shape());
    const bool bc = b->shape().c == 1;
    const int c = a->shape().c;
    Tensor out(a->shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = a->value[i] * b->value[bc ? i / c : i];
    return make_node(std::move(out), {a, b}, [a, b, bc, c](Node& n) {
        if (a->requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i)
                a->grad[i] += n.grad[i] * b->value[bc ? i / c : i];
        if (b->requires_grad) {
            if (bc)
                for (std::size_t i = 0; i < n.grad.numel(); ++i)
                    b->grad[i / c] += n.grad[i] * a->value[i];
            else
                for (std::size_t i = 0; i < n.grad.numel(); ++i)
                    b->grad[i] += n.grad[i] * a->value[i];
        }
    });
}

Var mul_const(const Var& a, const Tensor& k) {
    check_bcast(a->shape(), k.shape());
    const bool bc = k.shape().c == 1;
    const int c = a->shape().c;
    Tensor out(a->shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * k[bc ? i / c : i];
    Tensor kc = k;
    return make_node(std::move(out), {a}, [a, kc = std::move(kc), bc, c](Node& n) {
        for (std::size_t i = 0; i < n.grad.numel(); ++i)
            a->grad[i] += n.grad[i] * kc[bc ? i / c : i];
    });
}

Var scale(const Var& a, Real s) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return make_node(std::move(out), {a}, [a, s](Node& n) {
        for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += s * n.grad[i];
    });
}

Var add_scalar(const Var& a, Real s) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += s;
    return make_node(std::move(out), {a}, [a](Node& n) {
        for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i];
    });
}

Var abs(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::abs(out[i]);
    return make_node(std::move(out), {a}, [a](Node& n) {
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            const Real v = a->value[i];
            a->grad[i] += n.grad[i] * (v > 0.0 ? 1.0 : v < 0.0 ? -1.0 : 0.0);
        }
    });
}

Var relu(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], 0.0);
    return make_node(std::move(out), {a}, [a](Node& n) {
        for (std::size_t i = 0; i < n.grad.numel(); ++i)
            if (a->value[i] > 0.0) a->grad[i] += n.grad[i];
    });
}

Var sigmoid(const Var& a) {
    Tensor out(a->shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a->value[i]));
    Tensor saved = out;
    return make_node(std::move(out), {a}, [a, saved = std::move(saved)](Node& n) {
        for (std::size_t i = 0; i < n.grad.numel(); ++i)
            a->grad[i] += n.grad[i] * saved[i] * (1.0 - saved[i]);
    });
}

Var sqrt(const Var& a) {
    Tensor out(a->shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::sqrt(a->value[i]);
    Tensor saved = out;
    return make_node(std::move(out), {a}, [a, saved = std::move(saved)](Node& n) {
        for (std::size_t i = 0; i < n.grad.numel(); ++i)
            a->grad[i] += n.grad[i] * 0.5 / saved[i];
    });
}

Var clamp(const Var& a, Real lo, Real hi) {
    Tensor out(a->shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(a->value[i], lo, hi);
    return make_node(std::move(out), {a}, [a, lo, hi](Node& n) {
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            const Real v = a->value[i];
            if (v >= lo && v <= hi) a->grad[i] += n.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------
// shape ops

Var concat_c(const std::vector<Var>& xs) {
    require(!xs.empty(), "concat_c: empty");
    Shape s = xs[0]->shape();
    int ctot = 0;
    for (const auto& x : xs) {
        require(x->shape().t == s.t && x->shape().h == s.h && x->shape().w == s.w,
                "concat_c: spatial/frame dims mismatch");
        ctot += x->shape().c;
    }
    Tensor out(s.t, s.h, s.w, ctot);
    const std::size_t pixels = std::size_t(s.t) * s.h * s.w;
    for (std::size_t p = 0; p < pixels; ++p) {
        int off = 0;
        for (const auto& x : xs) {
            const int c = x->shape().c;
            for (int i = 0; i < c; ++i) out[p * ctot + off + i] = x->value[p * c + i];
            off += c;
        }
    }
    std::vector<Var> parents = xs;
    return make_node(std::move(out), std::move(parents), [xs, ctot, pixels](Node& n) {
        for (std::size_t p = 0; p < pixels; ++p) {
            int off = 0;
            for (const auto& x : xs) {
                const int c = x->shape().c;
                if (x->requires_grad)
                    for (int i = 0; i < c; ++i) x->grad[p * c + i] += n.grad[p * ctot + off + i];
                off += c;
            }
        }
    });
}

Var slice_c(const Var& a, int start, int len) {
    const Shape s = a->shape();
    require(start >= 0 && len >= 1 && start + len <= s.c, "slice_c: bad range");
    Tensor out(s.t, s.h, s.w, len);
    const std::size_t pixels = std::size_t(s.t) * s.h * s.w;
    for (std::size_t p = 0; p < pixels; ++p)
        for (int i = 0; i < len; ++i) out[p * len + i] = a->value[p * s.c + start + i];
    return make_node(std::move(out), {a}, [a, start, len, pixels, c = s.c](Node& n) {
        for (std::size_t p = 0; p < pixels; ++p)
            for (int i = 0; i < len; ++i) a->grad[p * c + start + i] += n.grad[p * len + i];
    });
}

Var select_frame(const Var& a, int t) {
    const Shape s = a->shape();
    require(t >= 0 && t < s.t, "select_frame: index out of range");
    Tensor out = a->value.frame(t);
    const std::size_t n_frame = std::size_t(s.h) * s.w * s.c;
    return make_node(std::move(out), {a}, [a, t, n_frame](Node& n) {
        Real* gp = a->grad.data() + t * n_frame;
        for (std::size_t i = 0; i < n_frame; ++i) gp[i] += n.grad[i];
    });
}

Var stack_frames(const std::vector<Var>& frames) {
    require(!frames.empty(), "stack_frames: empty");
    const Shape f = frames[0]->shape();
    require(f.t == 1, "stack_frames: inputs must be single-frame");
    for (const auto& fr : frames) require(fr->shape() == f, "stack_frames: shape mismatch");
    Tensor out(int(frames.size()), f.h, f.w, f.c);
    const std::size_t n_frame = std::size_t(f.h) * f.w * f.c;
    for (std::size_t t = 0; t < frames.size(); ++t)
        std::copy(frames[t]->value.data(), frames[t]->value.data() + n_frame,
                  out.data() + t * n_frame);
    std::vector<Var> parents = frames;
    return make_node(std::move(out), std::move(parents), [frames, n_frame](Node& n) {
        for (std::size_t t = 0; t < frames.size(); ++t) {
            if (!frames[t]->requires_grad) continue;
            const Real* gp = n.grad.data() + t * n_frame;
            for (std::size_t i = 0; i < n_frame; ++i) frames[t]->grad[i] += gp[i];
        }
    });
}

// ---------------------------------------------------------------------------
// reductions

Var sum(const Var& a) {
    Real acc = 0.0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) acc += a->value[i];
    Tensor out(1, 1, 1, 1);
    out[0] = acc;
    return make_node(std::move(out), {a}, [a](Node& n) {
        const Real g = n.grad[0];
        for (std::size_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += g;
    });
}

Var channel_mean(const Var& a) {
    const Shape s = a->shape();
    Tensor out(s.t, s.h, s.w, 1);
    const std::size_t pixels = std::size_t(s.t) * s.h * s.w;
    for (std::size_t p = 0; p < pixels; ++p) {
        Real acc = 0.0;
        for (int i = 0; i < s.c; ++i) acc += a->value[p * s.c + i];
        out[p] = acc / s.c;
    }
    return make_node(std::move(out), {a}, [a, pixels, c = s.c](Node& n) {
        for (std::size_t p = 0; p < pixels; ++p) {
            const Real g = n.grad[p] / c;
            for (int i = 0; i < c; ++i) a->grad[p * c + i] += g;
        }
    });
}

Var channel_max(const Var& a) {
    const Shape s = a->shape();
    Tensor out(s.t, s.h, s.w, 1);
    std::vector<int> arg(out.numel());
    const std::size_t pixels = std::size_t(s.t) * s.h * s.w;
    for (std::size_t p = 0; p < pixels; ++p) {
        int best = 0;
        for (int i = 1; i < s.c; ++i)
            if (a->value[p * s.c + i] > a->value[p * s.c + best]) best = i;
        arg[p] = best;
        out[p] = a->value[p * s.c + best];
    }
    return make_node(std::move(out), {a}, [a, arg = std::move(arg), pixels, c = s.c](Node& n) {
        for (std::size_t p = 0; p < pixels; ++p) a->grad[p * c + arg[p]] += n.grad[p];
    });
}

Var reduce_min_masked(const Var& a, const Tensor& mask) {
    require(a->shape() == mask.shape(), "reduce_min_masked: mask shape mismatch");
    std::size_t arg = 0;
    Real best = 0.0;
    bool found = false;
    for (std::size_t i = 0; i < a->value.numel(); ++i) {
        if (mask[i] <= 0.0) continue;
        if (!found || a->value[i] < best) {
            best = a->value[i];
            arg = i;
            found = true;
        }
    }
    require(found, "reduce_min_masked: empty mask");
    Tensor out(1, 1, 1, 1);
    out[0] = best;
    return make_node(std::move(out), {a}, [a, arg](Node& n) { a->grad[arg] += n.grad[0]; });
}

Var sub_broadcast_scalar(const Var& a, const Var& s) {
    require(s->shape() == Shape{1, 1, 1, 1}, "sub_broadcast_scalar: s must be scalar");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= s->value[0];
    return make_node(std::move(out), {a, s}, [a, s](Node& n) {
        if (a->requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i];
        if (s->requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i) s->grad[0] -= n.grad[i];
    });
}

// ---------------------------------------------------------------------------
// kernel-backed ops

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
    require(bias->shape().c == weight->shape().t, "conv2d: bias/weight channel mismatch");
    std::vector<Real> b(bias->value.data(), bias->value.data() + bias->value.numel());
    Tensor out = kernels::conv2d_forward(x->value, weight->value, b, stride, pad);
    return make_node(std::move(out), {x, weight, bias}, [x, weight, bias, stride, pad](Node& n) {
        Tensor gx, gw;
        std::vector<Real> gb;
        if (x->requires_grad) gx = Tensor(x->shape());
        if (weight->requires_grad) gw = Tensor(weight->shape());
        if (bias->requires_grad) gb.assign(bias->value.numel(), 0.0);
        kernels::conv2d_backward(x->value, weight->value, stride, pad, n.grad,
                                 x->requires_grad ? &gx : nullptr,
                                 weight->requires_grad ? &gw : nullptr,
                                 bias->requires_grad ? &gb : nullptr);
        if (x->requires_grad)
            for (std::size_t i = 0; i < gx.numel(); ++i) x->grad[i] += gx[i];
        if (weight->requires_grad)
            for (std::size_t i = 0; i < gw.numel(); ++i) weight->grad[i] += gw[i];
        if (bias->requires_grad)
            for (std::size_t i = 0; i < gb.size(); ++i) bias->grad[i] += gb[i];
    });
}

Var resize(const Var& x, int out_h, int out_w, kernels::Interp interp) {
    Tensor out = kernels::resize_forward(x->value, out_h, out_w, interp);
    return make_node(std::move(out), {x}, [x, interp](Node& n) {
        Tensor gx(x->shape());
        kernels::resize_backward(x->shape(), n.grad, interp, gx);
        for (std::size_t i = 0; i < gx.numel(); ++i) x->grad[i] += gx[i];
    });
}

Var resize_factor(const Var& x, Real factor, kernels::Interp interp) {
    require(factor > 0.0, "resize: factor must be positive");
    const int oh = (int)std::lround(x->shape().h * factor);
    const int ow = (int)std::lround(x->shape().w * factor);
    require(oh >= 1 && ow >= 1, "resize: output dims must be >= 1");
    return resize(x, oh, ow, interp);
}

Var pixel_shuffle(const Var& x, int r) {
    Tensor out = kernels::pixel_shuffle_forward(x->value, r);
    return make_node(std::move(out), {x}, [x, r](Node& n) {
        Tensor gx = kernels::pixel_shuffle_backward(n.grad, r);
        for (std::size_t i = 0; i < gx.numel(); ++i) x->grad[i] += gx[i];
    });
}

Var dynamic_filter(const Var& x, const Var& kernels_field, int ksize, int groups) {
    Tensor out = kernels::dynamic_filter_forward(x->value, kernels_field->value, ksize, groups);
    return make_node(std::move(out), {x, kernels_field}, [x, kernels_field, ksize, groups](Node& n) {
        Tensor gx, gk;
        if (x->requires_grad) gx = Tensor(x->shape());
        if (kernels_field->requires_grad) gk = Tensor(kernels_field->shape());
        kernels::dynamic_filter_backward(x->value, kernels_field->value, ksize, groups, n.grad,
                                         x->requires_grad ? &gx : nullptr,
                                         kernels_field->requires_grad ? &gk : nullptr);
        if (x->requires_grad)
            for (std::size_t i = 0; i < gx.numel(); ++i) x->grad[i] += gx[i];
        if (kernels_field->requires_grad)
            for (std::size_t i = 0; i < gk.numel(); ++i) kernels_field->grad[i] += gk[i];
    });
}

Var deform_conv(const Var& x, const Var& weight, const Var& bias, const Var& offsets,
                const Var& modulation) {
    std::vector<Real> b(bias->value.data(), bias->value.data() + bias->value.numel());
    Tensor out =
        kernels::deform_conv_forward(x->value, weight->value, b, offsets->value, modulation->value);
    return make_node(std::move(out), {x, weight, bias, offsets, modulation},
                     [x, weight, bias, offsets, modulation](Node& n) {
        Tensor gx, gw, goff, gmod;
        std::vector<Real> gb;
        if (x->requires_grad) gx = Tensor(x->shape());
        if (weight->requires_grad) gw = Tensor(weight->shape());
        if (bias->requires_grad) gb.assign(bias->value.numel(), 0.0);
        if (offsets->requires_grad) goff = Tensor(offsets->shape());
        if (modulation->requires_grad) gmod = Tensor(modulation->shape());
        kernels::deform_conv_backward(x->value, weight->value, offsets->value, modulation->value,
                                      n.grad, x->requires_grad ? &gx : nullptr,
                                      weight->requires_grad ? &gw : nullptr,
                                      bias->requires_grad ? &gb : nullptr,
                                      offsets->requires_grad ? &goff : nullptr,
                                      modulation->requires_grad ? &gmod : nullptr);
        if (x->requires_grad)
            for (std::size_t i = 0; i < gx.numel(); ++i) x->grad[i] += gx[i];
        if (weight->requires_grad)
            for (std::size_t i = 0; i < gw.numel(); ++i) weight->grad[i] += gw[i];
        if (bias->requires_grad)
            for (std::size_t i = 0; i < gb.size(); ++i) bias->grad[i] += gb[i];
        if (offsets->requires_grad)
            for (std::size_t i = 0; i < goff.numel(); ++i) offsets->grad[i] += goff[i];
        if (modulation->requires_grad)
            for (std::size_t i = 0; i < gmod.numel(); ++i) modulation->grad[i] += gmod[i];
    });
}

Var softmax_groups(const Var& a, int group_size) {
    const Shape s = a->shape();
    require(group_size >= 1 && s.c % group_size == 0, "softmax_groups: bad group size");
    Tensor out(s);
    const std::size_t pixels = std::size_t(s.t) * s.h * s.w;
    const int ngroups = s.c / group_size;
    for (std::size_t p = 0; p < pixels; ++p) {
        for (int g = 0; g < ngroups; ++g) {
            const std::size_t base = p * s.c + std::size_t(g) * group_size;
            Real mx = a->value[base];
            for (int i = 1; i < group_size; ++i) mx = std::max(mx, a->value[base + i]);
            Real z = 0.0;
            for (int i = 0; i < group_size; ++i) {
                out[base + i] = std::exp(a->value[base + i] - mx);
                z += out[base + i];
            }
            for (int i = 0; i < group_size; ++i) out[base + i] /= z;
        }
    }
    Tensor saved = out;
    return make_node(std::move(out), {a},
                     [a, saved = std::move(saved), pixels, c = s.c, group_size, ngroups](Node& n) {
        for (std::size_t p = 0; p < pixels; ++p) {
            for (int g = 0; g < ngroups; ++g) {
                const std::size_t base = p * c + std::size_t(g) * group_size;
                Real dot = 0.0;
                for (int i = 0; i < group_size; ++i) dot += n.grad[base + i] * saved[base + i];
                for (int i = 0; i < group_size; ++i)
                    a->grad[base + i] += saved[base + i] * (n.grad[base + i] - dot);
            }
        }
    });
}

} // namespace stdnet::ag
