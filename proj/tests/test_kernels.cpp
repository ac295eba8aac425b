#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "../src/ref/reference.hpp"
#include "helpers.hpp"
#include "stdnet/kernels.hpp"

#include <random>

using namespace stdnet;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {
// Catmull-Rom kernel (a = -0.5), the documented bicubic choice.
Real cubic(Real x) {
    const Real a = -0.5;
    x = std::abs(x);
    if (x < 1) return ((a + 2) * x - (a + 3)) * x * x + 1;
    if (x < 2) return (((x - 5) * x + 8) * x - 4) * a;
    return 0;
}
} // namespace

TEST_CASE("OpenMP kernels match the serial reference implementations") {
    std::mt19937_64 rng(11);
    const Tensor x = random_tensor({3, 13, 17, 6}, rng);

    SUBCASE("conv2d, stride 1 and 2") {
        const Tensor w = random_tensor({5, 3, 3, 6}, rng);
        std::vector<Real> b(5);
        for (auto& v : b) v = std::normal_distribution<Real>()(rng);
        for (int stride : {1, 2}) {
            kernels::set_parallel(true);
            Tensor fast = kernels::conv2d_forward(x, w, b, stride, 1);
            CHECK(max_abs_diff(fast, ref::conv2d(x, w, b, stride, 1)) < 1e-12);
        }
    }

    SUBCASE("resize, both interpolants, up and down") {
        for (auto [oh, ow] : {std::pair{26, 34}, std::pair{7, 9}, std::pair{13, 17}}) {
            kernels::set_parallel(true);
            CHECK(max_abs_diff(kernels::resize_forward(x, oh, ow, kernels::Interp::Bilinear),
                               ref::resize_bilinear(x, oh, ow)) < 1e-12);
            CHECK(max_abs_diff(kernels::resize_forward(x, oh, ow, kernels::Interp::Bicubic),
                               ref::resize_bicubic(x, oh, ow)) < 1e-12);
        }
    }

    SUBCASE("pixel shuffle") {
        const Tensor y = random_tensor({2, 5, 7, 8}, rng);
        CHECK(max_abs_diff(kernels::pixel_shuffle_forward(y, 2), ref::pixel_shuffle(y, 2)) == 0);
    }

    SUBCASE("dynamic filter, 1 and 2 groups") {
        for (int g : {1, 2}) {
            const Tensor k = random_tensor({3, 13, 17, g * 9}, rng);
            CHECK(max_abs_diff(kernels::dynamic_filter_forward(x, k, 3, g),
                               ref::dynamic_filter(x, k, 3, g)) < 1e-12);
        }
    }

    SUBCASE("deformable convolution") {
        const Tensor w = random_tensor({4, 3, 3, 6}, rng);
        std::vector<Real> b(4, 0.3);
        const Tensor off = random_tensor({3, 13, 17, 18}, rng);
        Tensor mod = random_tensor({3, 13, 17, 9}, rng);
        for (std::size_t i = 0; i < mod.numel(); ++i) mod[i] = 1 / (1 + std::exp(-mod[i]));
        CHECK(max_abs_diff(kernels::deform_conv_forward(x, w, b, off, mod),
                           ref::deform_conv(x, w, b, off, mod)) < 1e-12);
    }

    SUBCASE("serial mode produces bit-identical results") {
        const Tensor w = random_tensor({5, 3, 3, 6}, rng);
        std::vector<Real> b(5, 0.1);
        kernels::set_parallel(true);
        Tensor par = kernels::conv2d_forward(x, w, b, 1, 1);
        kernels::set_parallel(false);
        Tensor ser = kernels::conv2d_forward(x, w, b, 1, 1);
        kernels::set_parallel(true);
        CHECK(max_abs_diff(par, ser) == 0);
    }
}

TEST_CASE("resize preserves constants exactly") {
    Tensor x(1, 8, 8, 1, 3.25);
    for (auto interp : {kernels::Interp::Bilinear, kernels::Interp::Bicubic}) {
        Tensor down = kernels::resize_forward(x, 4, 4, interp);
        for (std::size_t i = 0; i < down.numel(); ++i) CHECK(down[i] == 3.25);
        Tensor up = kernels::resize_forward(down, 8, 8, interp);
        for (std::size_t i = 0; i < up.numel(); ++i) CHECK(up[i] == 3.25);
    }
}

TEST_CASE("bilinear 2x2 upsample of [[1,3],[1,3]] is a ramp with corners 1 and 3") {
    Tensor x(1, 2, 2, 1);
    x.at(0, 0, 0, 0) = 1;
    x.at(0, 0, 1, 0) = 3;
    x.at(0, 1, 0, 0) = 1;
    x.at(0, 1, 1, 0) = 3;
    Tensor y = kernels::resize_forward(x, 4, 4, kernels::Interp::Bilinear);
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(1.0));
    CHECK(y.at(0, 3, 0, 0) == doctest::Approx(1.0));
    CHECK(y.at(0, 0, 3, 0) == doctest::Approx(3.0));
    CHECK(y.at(0, 3, 3, 0) == doctest::Approx(3.0));
    // monotone along x, constant along y
    for (int yy = 0; yy < 4; ++yy)
        for (int xx = 0; xx + 1 < 4; ++xx) {
            CHECK(y.at(0, yy, xx, 0) <= y.at(0, yy, xx + 1, 0));
            CHECK(y.at(0, yy, xx, 0) == doctest::Approx(y.at(0, 0, xx, 0)));
        }
}

TEST_CASE("bicubic impulse response equals the sampled Catmull-Rom footprint") {
    // factor-2 upsampling with half-pixel centers: output x maps to input
    // coordinate (x + 0.5)/2 - 0.5, i.e. phases 0.25 / 0.75 from the impulse.
    const int n = 16;
    Tensor x(1, 1, n, 1);
    x.at(0, 0, 8, 0) = 1.0;
    Tensor y = kernels::resize_forward(x, 1, 2 * n, kernels::Interp::Bicubic);
    for (int ox = 2; ox < 2 * n - 2; ++ox) {
        const Real src = (ox + 0.5) / 2.0 - 0.5;
        const Real expected = cubic(src - 8.0); // interior: no clamping, weights sum to 1
        CHECK(y.at(0, 0, ox, 0) == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("pixel shuffle places channels (a,b,c,d) as [[a,b],[c,d]]") {
    Tensor x(1, 1, 1, 4);
    x[0] = 1;
    x[1] = 2;
    x[2] = 3;
    x[3] = 4;
    Tensor y = kernels::pixel_shuffle_forward(x, 2);
    CHECK(y.shape() == Shape{1, 2, 2, 1});
    CHECK(y.at(0, 0, 0, 0) == 1);
    CHECK(y.at(0, 0, 1, 0) == 2);
    CHECK(y.at(0, 1, 0, 0) == 3);
    CHECK(y.at(0, 1, 1, 0) == 4);
}

TEST_CASE("pixel shuffle is a bijection (unshuffle inverts it, multiset preserved)") {
    std::mt19937_64 rng(5);
    Tensor x = random_tensor({2, 3, 4, 8}, rng);
    Tensor y = kernels::pixel_shuffle_forward(x, 2);
    CHECK(max_abs_diff(ref::pixel_unshuffle(y, 2), x) == 0);

    std::vector<Real> a(x.data(), x.data() + x.numel());
    std::vector<Real> b(y.data(), y.data() + y.numel());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
}

TEST_CASE("pixel shuffle rejects channel counts not divisible by r^2") {
    Tensor x(1, 2, 2, 3);
    CHECK_THROWS_AS((void)kernels::pixel_shuffle_forward(x, 2), std::invalid_argument);
}

TEST_CASE("dynamic filter identities") {
    std::mt19937_64 rng(17);
    Tensor x = random_tensor({2, 6, 7, 4}, rng);

    SUBCASE("center-delta kernels reproduce the input") {
        Tensor k(2, 6, 7, 9);
        for (int t = 0; t < 2; ++t)
            for (int y = 0; y < 6; ++y)
                for (int xx = 0; xx < 7; ++xx) k.at(t, y, xx, 4) = 1.0; // center of the 3x3 window
        CHECK(max_abs_diff(kernels::dynamic_filter_forward(x, k, 3, 1), x) == 0);
    }

    SUBCASE("uniform kernels equal the box-filter oracle") {
        Tensor k(2, 6, 7, 9, 1.0 / 9.0);
        CHECK(max_abs_diff(kernels::dynamic_filter_forward(x, k, 3, 1), ref::box_filter(x, 3)) <
              1e-12);
    }

    SUBCASE("mismatched field dims are rejected") {
        Tensor k(2, 5, 7, 9);
        CHECK_THROWS_AS((void)kernels::dynamic_filter_forward(x, k, 3, 1), std::invalid_argument);
    }
}

TEST_CASE("deformable convolution identities") {
    std::mt19937_64 rng(23);
    Tensor x = random_tensor({2, 8, 9, 3}, rng);

    SUBCASE("zero offsets and unit modulation reduce to plain convolution") {
        Tensor w = random_tensor({4, 3, 3, 3}, rng);
        std::vector<Real> b(4, -0.2);
        Tensor off(2, 8, 9, 18);
        Tensor mod(2, 8, 9, 9, 1.0);
        Tensor got = kernels::deform_conv_forward(x, w, b, off, mod);
        Tensor want = kernels::conv2d_forward(x, w, b, 1, 1);
        CHECK(max_abs_diff(got, want) < 1e-6);
    }

    SUBCASE("dx=+1 with identity 1x1 weight shifts left with zero fill") {
        Tensor w(1, 1, 1, 3);
        w.at(0, 0, 0, 1) = 1.0; // pick channel 1 of x
        std::vector<Real> b(1, 0.0);
        Tensor off(2, 8, 9, 2);
        for (int t = 0; t < 2; ++t)
            for (int y = 0; y < 8; ++y)
                for (int xx = 0; xx < 9; ++xx) off.at(t, y, xx, 1) = 1.0; // (dy, dx) = (0, 1)
        Tensor mod(2, 8, 9, 1, 1.0);
        Tensor got = kernels::deform_conv_forward(x, w, b, off, mod);
        for (int t = 0; t < 2; ++t)
            for (int y = 0; y < 8; ++y)
                for (int xx = 0; xx < 9; ++xx) {
                    const Real want = (xx + 1 < 9) ? x.at(t, y, xx + 1, 1) : 0.0;
                    CHECK(got.at(t, y, xx, 0) == doctest::Approx(want).epsilon(1e-12));
                }
    }

    SUBCASE("half-pixel offset on a linear ramp shifts the ramp by 0.5") {
        Tensor ramp(1, 6, 10, 1);
        for (int y = 0; y < 6; ++y)
            for (int xx = 0; xx < 10; ++xx) ramp.at(0, y, xx, 0) = 2.0 * xx + 1.0;
        Tensor w(1, 1, 1, 1);
        w[0] = 1.0;
        std::vector<Real> b(1, 0.0);
        Tensor off(1, 6, 10, 2);
        for (int y = 0; y < 6; ++y)
            for (int xx = 0; xx < 10; ++xx) off.at(0, y, xx, 1) = 0.5;
        Tensor mod(1, 6, 10, 1, 1.0);
        Tensor got = kernels::deform_conv_forward(ramp, w, b, off, mod);
        for (int y = 0; y < 6; ++y)
            for (int xx = 0; xx + 1 < 10; ++xx) // interior columns: pure bilinear on affine data
                CHECK(got.at(0, y, xx, 0) == doctest::Approx(2.0 * (xx + 0.5) + 1.0).epsilon(1e-12));
    }
}

TEST_CASE("conv matches the naive sliding-window oracle") {
    std::mt19937_64 rng(31);
    Tensor x = random_tensor({2, 9, 11, 5}, rng);
    Tensor w = random_tensor({7, 3, 3, 5}, rng);
    std::vector<Real> b(7);
    for (auto& v : b) v = std::normal_distribution<Real>()(rng);
    CHECK(max_abs_diff(kernels::conv2d_forward(x, w, b, 1, 1), ref::conv2d(x, w, b, 1, 1)) < 1e-5);
}

TEST_CASE("identity-initialized 1x1 conv reproduces its input") {
    std::mt19937_64 rng(37);
    Tensor x = random_tensor({2, 5, 6, 3}, rng);
    Tensor w(3, 1, 1, 3);
    for (int c = 0; c < 3; ++c) w.at(c, 0, 0, c) = 1.0;
    std::vector<Real> b(3, 0.0);
    CHECK(max_abs_diff(kernels::conv2d_forward(x, w, b, 1, 0), x) == 0);
}

TEST_CASE("zero-initialized conv outputs zero") {
    std::mt19937_64 rng(41);
    Tensor x = random_tensor({2, 5, 6, 3}, rng);
    Tensor w(4, 3, 3, 3);
    std::vector<Real> b(4, 0.0);
    Tensor y = kernels::conv2d_forward(x, w, b, 1, 1);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0);
}
