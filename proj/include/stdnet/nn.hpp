#pragma once

#include "stdnet/autograd.hpp"

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace stdnet::nn {

using Rng = std::mt19937_64;

// Named parameter registry. Iteration order is creation order, which keeps
// the optimizer and checkpoints deterministic.
class ParamStore {
public:
    ag::Var create(const std::string& name, Tensor init) {
        require(!index_.count(name), "ParamStore: duplicate parameter " + name);
        ag::Var v = ag::leaf(std::move(init), true);
        index_[name] = names_.size();
        names_.push_back(name);
        params_.push_back(v);
        return v;
    }
    ag::Var get(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), "ParamStore: unknown parameter " + name);
        return params_[it->second];
    }
    std::size_t size() const { return params_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    const ag::Var& param(std::size_t i) const { return params_[i]; }
    std::size_t total_scalars() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p->value.numel();
        return n;
    }

private:
    std::vector<std::string> names_;
    std::vector<ag::Var> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline Tensor normal_init(Shape s, Real stddev, Rng& rng) {
    Tensor t(s);
    std::normal_distribution<Real> dist(0.0, stddev);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

// He-style fan-in scaling for conv weights shaped (co, kh, kw, ci).
inline Tensor conv_init(Shape s, Rng& rng) {
    const Real fan_in = Real(s.h) * s.w * s.c;
    return normal_init(s, std::sqrt(2.0 / fan_in), rng);
}

// Per-frame 2-D conv layer with square kernel and same-size padding.
struct Conv2d {
    ag::Var weight, bias;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(ParamStore& ps, const std::string& name, int ci, int co, int k, int stride_, Rng& rng,
           bool zero_init = false)
        : stride(stride_), pad(k / 2) {
        Shape ws{co, k, k, ci};
        weight = ps.create(name + ".w", zero_init ? Tensor(ws) : conv_init(ws, rng));
        bias = ps.create(name + ".b", Tensor(1, 1, 1, co));
    }

    ag::Var operator()(const ag::Var& x) const { return ag::conv2d(x, weight, bias, stride, pad); }
};

struct AdamConfig {
    Real lr = 1e-4;
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real eps = 1e-8;
};

class Adam {
public:
    Adam() = default;
    Adam(const ParamStore& ps, AdamConfig cfg) : cfg_(cfg) {
        m_.resize(ps.size());
        v_.resize(ps.size());
        for (std::size_t i = 0; i < ps.size(); ++i) {
            m_[i].assign(ps.param(i)->value.numel(), 0.0);
            v_[i].assign(ps.param(i)->value.numel(), 0.0);
        }
    }

    // Applies one update from the gradients accumulated by ag::backward().
    void step(const ParamStore& ps) {
        ++t_;
        const Real bc1 = 1.0 - std::pow(cfg_.beta1, (Real)t_);
        const Real bc2 = 1.0 - std::pow(cfg_.beta2, (Real)t_);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const ag::Var& p = ps.param(i);
            if (p->grad.numel() != p->value.numel()) continue; // unused in this graph
            for (std::size_t j = 0; j < p->value.numel(); ++j) {
                const Real g = p->grad[j];
                m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
                v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
                const Real mhat = m_[i][j] / bc1;
                const Real vhat = v_[i][j] / bc2;
                p->value[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    std::int64_t steps_taken() const { return t_; }
    AdamConfig& config() { return cfg_; }
    const AdamConfig& config() const { return cfg_; }

    // state access for checkpointing
    std::vector<std::vector<Real>>& moment1() { return m_; }
    std::vector<std::vector<Real>>& moment2() { return v_; }
    void set_steps(std::int64_t t) { t_ = t; }

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<std::vector<Real>> m_, v_;
};

} // namespace stdnet::nn
