#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "stdnet/autograd.hpp"

#include <random>

using namespace stdnet;
using testutil::grad_check;
using testutil::probe;
using testutil::random_tensor;
using testutil::uniform_tensor;

namespace {
constexpr Real kTol = 1e-3; // per-op relative-error budget for central differences
}

TEST_CASE("gradients: elementwise and reduction ops") {
    std::mt19937_64 rng(101);
    const Shape s{1, 6, 6, 2};

    SUBCASE("add/sub/mul/scale/add_scalar") {
        auto a = ag::leaf(random_tensor(s, rng), true);
        auto b = ag::leaf(random_tensor(s, rng), true);
        CHECK(grad_check(
                  [&] {
                      auto y = ag::add(ag::mul(a, b), ag::scale(ag::sub(a, b), 0.7));
                      return probe(ag::add_scalar(y, 1.5));
                  },
                  {a, b}) < kTol);
    }

    SUBCASE("mul with c==1 broadcast") {
        auto a = ag::leaf(random_tensor(s, rng), true);
        auto m = ag::leaf(random_tensor({1, 6, 6, 1}, rng), true);
        CHECK(grad_check([&] { return probe(ag::mul(a, m)); }, {a, m}) < kTol);
        CHECK(grad_check([&] { return probe(ag::mul(m, a)); }, {a, m}) < kTol);
    }

    SUBCASE("abs away from zero") {
        Tensor t = random_tensor(s, rng);
        for (std::size_t i = 0; i < t.numel(); ++i)
            t[i] += (t[i] >= 0 ? 0.5 : -0.5); // keep |t| > h
        auto a = ag::leaf(t, true);
        CHECK(grad_check([&] { return probe(ag::abs(a)); }, {a}) < kTol);
    }

    SUBCASE("relu away from zero") {
        Tensor t = random_tensor(s, rng);
        for (std::size_t i = 0; i < t.numel(); ++i)
            if (std::abs(t[i]) < 0.1) t[i] = 0.3;
        auto a = ag::leaf(t, true);
        CHECK(grad_check([&] { return probe(ag::relu(a)); }, {a}) < kTol);
    }

    SUBCASE("sigmoid") {
        auto a = ag::leaf(random_tensor(s, rng), true);
        CHECK(grad_check([&] { return probe(ag::sigmoid(a)); }, {a}) < kTol);
    }

    SUBCASE("sqrt of positive values") {
        auto a = ag::leaf(uniform_tensor(s, rng, 0.5, 2.0), true);
        CHECK(grad_check([&] { return probe(ag::sqrt(a)); }, {a}) < kTol);
    }

    SUBCASE("clamp, interior points only") {
        Tensor t = uniform_tensor(s, rng, -2.0, 2.0);
        for (std::size_t i = 0; i < t.numel(); ++i)
            if (std::abs(std::abs(t[i]) - 1.0) < 0.05) t[i] = 0.5; // keep away from the edges
        auto a = ag::leaf(t, true);
        CHECK(grad_check([&] { return probe(ag::clamp(a, -1.0, 1.0)); }, {a}) < kTol);
    }

    SUBCASE("sum / channel_mean / channel_max") {
        auto a = ag::leaf(random_tensor(s, rng), true);
        CHECK(grad_check([&] { return ag::sum(a); }, {a}) < kTol);
        CHECK(grad_check([&] { return probe(ag::channel_mean(a)); }, {a}) < kTol);
        CHECK(grad_check([&] { return probe(ag::channel_max(a)); }, {a}) < kTol);
    }

    SUBCASE("reduce_min_masked and sub_broadcast_scalar") {
        auto a = ag::leaf(random_tensor(s, rng), true);
        Tensor mask(s.t, s.h, s.w, 1);
        std::bernoulli_distribution hit(0.7);
        bool any = false;
        for (std::size_t i = 0; i < mask.numel(); ++i) any |= (mask[i] = hit(rng) ? 1.0 : 0.0) > 0;
        REQUIRE(any);
        CHECK(grad_check(
                  [&] {
                      auto mn = ag::reduce_min_masked(ag::channel_mean(a), mask);
                      return probe(ag::sub_broadcast_scalar(a, mn));
                  },
                  {a}) < kTol);
    }

    SUBCASE("concat_c / slice_c / select_frame / stack_frames") {
        auto a = ag::leaf(random_tensor({2, 4, 4, 2}, rng), true);
        auto b = ag::leaf(random_tensor({2, 4, 4, 3}, rng), true);
        CHECK(grad_check(
                  [&] {
                      auto cat = ag::concat_c({a, b});
                      auto sl = ag::slice_c(cat, 1, 3);
                      auto f0 = ag::select_frame(sl, 0);
                      auto f1 = ag::select_frame(sl, 1);
                      return probe(ag::stack_frames({f1, f0}));
                  },
                  {a, b}) < kTol);
    }

    SUBCASE("softmax_groups") {
        auto a = ag::leaf(random_tensor({1, 4, 4, 6}, rng), true);
        CHECK(grad_check([&] { return probe(ag::softmax_groups(a, 3)); }, {a}) < kTol);
    }
}

TEST_CASE("gradients: structured kernels") {
    std::mt19937_64 rng(202);
    const Shape s{1, 6, 6, 2};

    SUBCASE("conv2d in x, weight, bias; stride 1 and 2") {
        auto x = ag::leaf(random_tensor(s, rng), true);
        auto w = ag::leaf(random_tensor({3, 3, 3, 2}, rng, 0.5), true);
        auto b = ag::leaf(random_tensor({1, 1, 1, 3}, rng, 0.1), true);
        for (int stride : {1, 2})
            CHECK(grad_check([&] { return probe(ag::conv2d(x, w, b, stride, 1)); }, {x, w, b}) <
                  kTol);
    }

    SUBCASE("bilinear resize, up and down") {
        auto x = ag::leaf(random_tensor(s, rng), true);
        CHECK(grad_check([&] { return probe(ag::resize(x, 12, 12, kernels::Interp::Bilinear)); },
                         {x}) < kTol);
        CHECK(grad_check([&] { return probe(ag::resize(x, 3, 3, kernels::Interp::Bilinear)); },
                         {x}) < kTol);
    }

    SUBCASE("bicubic resize, up and down") {
        auto x = ag::leaf(random_tensor(s, rng), true);
        CHECK(grad_check([&] { return probe(ag::resize(x, 12, 12, kernels::Interp::Bicubic)); },
                         {x}) < kTol);
        CHECK(grad_check([&] { return probe(ag::resize(x, 3, 3, kernels::Interp::Bicubic)); },
                         {x}) < kTol);
    }

    SUBCASE("pixel shuffle") {
        auto x = ag::leaf(random_tensor({1, 3, 3, 8}, rng), true);
        CHECK(grad_check([&] { return probe(ag::pixel_shuffle(x, 2)); }, {x}) < kTol);
    }

    SUBCASE("dynamic filter in x and kernels") {
        auto x = ag::leaf(random_tensor(s, rng), true);
        auto k = ag::leaf(random_tensor({1, 6, 6, 9}, rng, 0.5), true);
        CHECK(grad_check([&] { return probe(ag::dynamic_filter(x, k, 3, 1)); }, {x, k}) < kTol);
    }

    SUBCASE("deformable convolution in x, weight, bias, offsets, modulation") {
        auto x = ag::leaf(random_tensor(s, rng), true);
        auto w = ag::leaf(random_tensor({2, 3, 3, 2}, rng, 0.5), true);
        auto b = ag::leaf(random_tensor({1, 1, 1, 2}, rng, 0.1), true);
        // Fractional offsets keep the bilinear weights smooth (integer offsets
        // sit on the kink of the interpolation hat function).
        Tensor offt = uniform_tensor({1, 6, 6, 18}, rng, -1.3, 1.3);
        for (std::size_t i = 0; i < offt.numel(); ++i)
            if (std::abs(offt[i] - std::round(offt[i])) < 0.05) offt[i] += 0.2;
        auto off = ag::leaf(offt, true);
        auto mod = ag::leaf(uniform_tensor({1, 6, 6, 9}, rng, 0.2, 0.9), true);
        CHECK(grad_check([&] { return probe(ag::deform_conv(x, w, b, off, mod)); },
                         {x, w, b, off, mod}) < kTol);
    }
}

TEST_CASE("resize_factor semantics") {
    std::mt19937_64 rng(303);

    SUBCASE("round-trip of a constant is exact") {
        auto x = ag::constant(Tensor(1, 8, 8, 1, 2.5));
        auto d = ag::resize_factor(x, 0.5, kernels::Interp::Bilinear);
        CHECK(d->shape() == Shape{1, 4, 4, 1});
        auto u = ag::resize_factor(d, 2.0, kernels::Interp::Bilinear);
        for (std::size_t i = 0; i < u->value.numel(); ++i) CHECK(u->value[i] == 2.5);
    }

    SUBCASE("bicubic down-up of a linear ramp recovers the interior < 1e-6") {
        Tensor ramp(1, 32, 32, 1);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) ramp.at(0, y, x, 0) = 0.3 * x + 0.1 * y + 2.0;
        auto v = ag::constant(ramp);
        auto d = ag::resize_factor(v, 0.25, kernels::Interp::Bicubic);
        auto u = ag::resize_factor(d, 4.0, kernels::Interp::Bicubic);
        REQUIRE(u->shape() == ramp.shape());
        Real worst = 0;
        for (int y = 8; y < 24; ++y)
            for (int x = 8; x < 24; ++x)
                worst = std::max(worst, std::abs(u->value.at(0, y, x, 0) - ramp.at(0, y, x, 0)) /
                                            std::abs(ramp.at(0, y, x, 0)));
        CHECK(worst < 1e-6);
    }

    SUBCASE("non-positive factor is rejected") {
        auto x = ag::constant(Tensor(1, 8, 8, 1, 1.0));
        CHECK_THROWS_AS((void)ag::resize_factor(x, 0.0, kernels::Interp::Bilinear),
                        std::invalid_argument);
        CHECK_THROWS_AS((void)ag::resize_factor(x, -2.0, kernels::Interp::Bicubic),
                        std::invalid_argument);
    }
}

TEST_CASE("operations leave values finite") {
    std::mt19937_64 rng(404);
    auto x = ag::leaf(random_tensor({2, 6, 6, 4}, rng), true);
    auto w = ag::leaf(random_tensor({4, 3, 3, 4}, rng, 0.3), true);
    auto b = ag::leaf(Tensor(1, 1, 1, 4), true);
    auto y = ag::conv2d(ag::sigmoid(x), w, b, 1, 1);
    y = ag::resize(y, 12, 12, kernels::Interp::Bicubic);
    y = ag::pixel_shuffle(y, 2);
    CHECK(y->value.all_finite());
    ag::backward(ag::sum(y));
    CHECK(x->grad.all_finite());
    CHECK(w->grad.all_finite());
}
