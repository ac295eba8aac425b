#pragma once

#include "stdnet/autograd.hpp"
#include "stdnet/nn.hpp"

#include <functional>
#include <random>
#include <vector>

namespace stdnet::testutil {

inline Tensor random_tensor(Shape s, std::mt19937_64& rng, Real stddev = 1.0) {
    Tensor t(s);
    std::normal_distribution<Real> dist(0.0, stddev);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

inline Tensor uniform_tensor(Shape s, std::mt19937_64& rng, Real lo, Real hi) {
    Tensor t(s);
    std::uniform_real_distribution<Real> dist(lo, hi);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

inline Real max_abs_diff(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "max_abs_diff: shape mismatch");
    Real m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Central finite-difference check of d(scalar build(inputs))/d(inputs[k]) for
// every k with requires_grad, against the gradients from ag::backward().
// Returns the worst relative error across all coordinates.
inline Real grad_check(const std::function<ag::Var()>& build, const std::vector<ag::Var>& inputs,
                       Real h = 1e-5) {
    ag::Var root = build();
    require(root->value.numel() == 1, "grad_check: build() must return a scalar");
    ag::backward(root);

    std::vector<Tensor> analytic;
    analytic.reserve(inputs.size());
    for (const auto& in : inputs) {
        require(in->requires_grad, "grad_check: input does not require grad");
        require(in->grad.numel() == in->value.numel(), "grad_check: missing gradient");
        analytic.push_back(in->grad);
    }

    Real worst = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor& x = inputs[k]->value;
        for (std::size_t i = 0; i < x.numel(); ++i) {
            const Real orig = x[i];
            x[i] = orig + h;
            const Real fp = build()->value[0];
            x[i] = orig - h;
            const Real fm = build()->value[0];
            x[i] = orig;
            const Real numeric = (fp - fm) / (2 * h);
            const Real a = analytic[k][i];
            const Real rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// A scalar probe that depends on every output coordinate with distinct
// weights, so gradient errors cannot cancel.
inline ag::Var probe(const ag::Var& y) {
    Tensor w(y->shape());
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = 0.25 + 0.5 * std::sin(Real(i) * 0.7);
    return ag::sum(ag::mul(y, ag::constant(w)));
}

} // namespace stdnet::testutil
