// Benchmarks the OpenMP kernels against the naive serial reference
// implementations and reports timings plus the max absolute deviation.

#include "stdnet/kernels.hpp"
#include "../src/ref/reference.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

using namespace stdnet;

namespace {

Tensor random_tensor(const Shape& s, std::mt19937_64& rng) {
    Tensor t(s);
    std::normal_distribution<Real> dist(0.0, 1.0);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

Real max_abs_diff(const Tensor& a, const Tensor& b) {
    Real m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double time_ms(const std::function<Tensor()>& fn, int reps, Tensor& out) {
    out = fn(); // warm-up, also the result used for the deviation check
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, const std::function<Tensor()>& fast,
            const std::function<Tensor()>& slow, int reps) {
    Tensor a, b;
    kernels::set_parallel(true);
    double fast_ms = time_ms(fast, reps, a);
    kernels::set_parallel(false);
    double slow_ms = time_ms(slow, reps, b);
    kernels::set_parallel(true);
    std::printf("%-18s ref %8.2f ms  omp %8.2f ms  speedup %5.2fx  maxdiff %.3g\n", name,
                slow_ms, fast_ms, slow_ms / fast_ms, max_abs_diff(a, b));
}

} // namespace

int main() {
    kernels::init_from_env();
    std::mt19937_64 rng(7);

    const int T = 4, H = 96, W = 96, C = 32;
    Tensor x = random_tensor({T, H, W, C}, rng);
    Tensor w = random_tensor({C, 3, 3, C}, rng);
    std::vector<Real> bias(C, 0.1);

    report(
        "conv2d 3x3", [&] { return kernels::conv2d_forward(x, w, bias, 1, 1); },
        [&] { return ref::conv2d(x, w, bias, 1, 1); }, 5);

    report(
        "resize bicubic x4",
        [&] { return kernels::resize_forward(x, H * 4, W * 4, kernels::Interp::Bicubic); },
        [&] { return ref::resize_bicubic(x, H * 4, W * 4); }, 5);

    report(
        "resize bilinear x4",
        [&] { return kernels::resize_forward(x, H * 4, W * 4, kernels::Interp::Bilinear); },
        [&] { return ref::resize_bilinear(x, H * 4, W * 4); }, 5);

    Tensor shuf_in = random_tensor({T, H, W, 16}, rng);
    report(
        "pixel_shuffle x2", [&] { return kernels::pixel_shuffle_forward(shuf_in, 2); },
        [&] { return ref::pixel_shuffle(shuf_in, 2); }, 20);

    const int k = 3, K = k * k;
    Tensor dyn_k = random_tensor({T, H, W, K}, rng);
    report(
        "dynamic_filter 3x3", [&] { return kernels::dynamic_filter_forward(x, dyn_k, k, 1); },
        [&] { return ref::dynamic_filter(x, dyn_k, k, 1); }, 5);

    Tensor off = random_tensor({T, H, W, 2 * K}, rng);
    Tensor mod = random_tensor({T, H, W, K}, rng);
    for (std::size_t i = 0; i < mod.numel(); ++i) mod[i] = 0.5 + 0.4 * std::tanh(mod[i]);
    report(
        "deform_conv 3x3",
        [&] { return kernels::deform_conv_forward(x, w, bias, off, mod); },
        [&] { return ref::deform_conv(x, w, bias, off, mod); }, 3);

    return 0;
}
