#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "stdnet/model.hpp"

#include <random>

using namespace stdnet;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {
ModelConfig small_cfg() {
    ModelConfig cfg;
    cfg.scale = 4;
    cfg.channels = 6;
    cfg.encoder_depth = 2;
    cfg.seed = 3;
    return cfg;
}

// A static clip: every frame identical.
std::pair<Tensor, Tensor> static_clip(int T, int h, int w, int s, std::mt19937_64& rng) {
    Tensor d(T, h, w, 1);
    Tensor rgb(T, h * s, w * s, 3);
    Tensor d0 = testutil::uniform_tensor({1, h, w, 1}, rng, 50.0, 300.0);
    Tensor r0 = testutil::uniform_tensor({1, h * s, w * s, 3}, rng, 0.0, 1.0);
    for (int t = 0; t < T; ++t) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) d.at(t, y, x, 0) = d0.at(0, y, x, 0);
        for (int y = 0; y < h * s; ++y)
            for (int x = 0; x < w * s; ++x)
                for (int c = 0; c < 3; ++c) rgb.at(t, y, x, c) = r0.at(0, y, x, c);
    }
    return {d, rgb};
}

Tensor reverse_time(const Tensor& x) {
    Tensor out(x.shape());
    const int T = x.t();
    const std::size_t n = x.numel() / T;
    for (int t = 0; t < T; ++t)
        std::copy(x.data() + std::size_t(T - 1 - t) * n, x.data() + std::size_t(T - t) * n,
                  out.data() + std::size_t(t) * n);
    return out;
}
} // namespace

TEST_CASE("temporal difference representations") {
    std::mt19937_64 rng(61);

    SUBCASE("shapes: consecutive (T-1), cross (T-2)") {
        auto f = ag::constant(random_tensor({5, 4, 4, 6}, rng));
        auto reps = TemporalBranch::temporal_difference_reps(f);
        CHECK(reps.consecutive->shape() == Shape{4, 4, 4, 6});
        CHECK(reps.cross->shape() == Shape{3, 4, 4, 6});
    }

    SUBCASE("(A, B, A): phi entries equal, phi_hat exactly zero") {
        Tensor a = random_tensor({1, 4, 4, 6}, rng);
        Tensor b = random_tensor({1, 4, 4, 6}, rng);
        Tensor f(3, 4, 4, 6);
        for (std::size_t i = 0; i < a.numel(); ++i) {
            f[i] = a[i];
            f[a.numel() + i] = b[i];
            f[2 * a.numel() + i] = a[i];
        }
        auto reps = TemporalBranch::temporal_difference_reps(ag::constant(f));
        CHECK(max_abs_diff(reps.consecutive->value.frame(0), reps.consecutive->value.frame(1)) ==
              0);
        for (std::size_t i = 0; i < reps.cross->value.numel(); ++i)
            CHECK(reps.cross->value[i] == 0.0);
    }

    SUBCASE("static features give phi = phi_hat = 0 exactly") {
        Tensor a = random_tensor({1, 4, 4, 6}, rng);
        Tensor f(4, 4, 4, 6);
        for (int t = 0; t < 4; ++t)
            std::copy(a.data(), a.data() + a.numel(), f.data() + t * a.numel());
        auto reps = TemporalBranch::temporal_difference_reps(ag::constant(f));
        for (std::size_t i = 0; i < reps.consecutive->value.numel(); ++i)
            CHECK(reps.consecutive->value[i] == 0.0);
        for (std::size_t i = 0; i < reps.cross->value.numel(); ++i)
            CHECK(reps.cross->value[i] == 0.0);
    }

    SUBCASE("fewer than 3 frames is rejected") {
        auto f = ag::constant(random_tensor({2, 4, 4, 6}, rng));
        CHECK_THROWS_AS((void)TemporalBranch::temporal_difference_reps(f), std::invalid_argument);
    }
}

TEST_CASE("difference encoder bounds") {
    ModelConfig cfg = small_cfg();
    nn::ParamStore ps;
    nn::Rng prng(cfg.seed);
    TemporalBranch branch(ps, cfg, prng);
    std::mt19937_64 rng(71);

    SUBCASE("zero-initialized head: offsets exactly 0, modulation exactly 0.5") {
        auto phi = ag::abs(ag::constant(random_tensor({1, 5, 5, 6}, rng)));
        auto om = branch.encode_difference(phi, true);
        for (std::size_t i = 0; i < om.offsets->value.numel(); ++i)
            CHECK(om.offsets->value[i] == 0.0);
        for (std::size_t i = 0; i < om.modulation->value.numel(); ++i)
            CHECK(om.modulation->value[i] == 0.5);
    }

    SUBCASE("after perturbing the head, offsets stay in [-R, R], modulation in [0, 1]") {
        Tensor& w = ps.get("temporal.fwd.adj.enc.1.w")->value;
        std::normal_distribution<Real> dist(0.0, 5.0);
        for (std::size_t i = 0; i < w.numel(); ++i) w[i] = dist(rng);
        auto phi = ag::abs(ag::constant(random_tensor({1, 5, 5, 6}, rng, 3.0)));
        auto om = branch.encode_difference(phi, true);
        bool clamped = false;
        for (std::size_t i = 0; i < om.offsets->value.numel(); ++i) {
            CHECK(om.offsets->value[i] >= -cfg.offset_clamp);
            CHECK(om.offsets->value[i] <= cfg.offset_clamp);
            clamped |= std::abs(om.offsets->value[i]) == cfg.offset_clamp;
        }
        CHECK(clamped); // the big perturbation actually exercised the clamp
        for (std::size_t i = 0; i < om.modulation->value.numel(); ++i) {
            CHECK(om.modulation->value[i] >= 0.0);
            CHECK(om.modulation->value[i] <= 1.0);
        }
    }
}

TEST_CASE("static clips stay static through the whole network") {
    ModelConfig cfg = small_cfg();
    STDNet net(cfg);
    std::mt19937_64 rng(81);

    // Make the residual head nontrivial so the property is not satisfied
    // trivially by a zero residual.
    Tensor& ow = net.params().get("recon.out.w")->value;
    std::normal_distribution<Real> dist(0.0, 0.05);
    for (std::size_t i = 0; i < ow.numel(); ++i) ow[i] = dist(rng);

    auto [d, rgb] = static_clip(4, 6, 6, cfg.scale, rng);
    auto out = net.forward(d, rgb);

    for (std::size_t i = 0; i < out.phi->value.numel(); ++i) CHECK(out.phi->value[i] == 0.0);
    for (std::size_t i = 0; i < out.phi_hat->value.numel(); ++i)
        CHECK(out.phi_hat->value[i] == 0.0);
    for (int t = 1; t < 4; ++t) {
        CHECK(max_abs_diff(out.f_td->value.frame(t), out.f_td->value.frame(0)) < 1e-12);
        CHECK(max_abs_diff(out.d_hr->value.frame(t), out.d_hr->value.frame(0)) < 1e-5);
    }
}

TEST_CASE("tied directions: time reversal of the input reverses the output") {
    ModelConfig cfg = small_cfg();
    cfg.tie_directions = true;
    STDNet net(cfg);
    std::mt19937_64 rng(91);

    // Symmetrize the aggregation conv across its forward/backward input slots
    // and randomize the residual head so the check is nontrivial.
    const int c = cfg.channels;
    Tensor& aw = net.params().get("temporal.aggregate.w")->value; // (co, kh, kw, 3c)
    for (int co = 0; co < aw.t(); ++co)
        for (int ky = 0; ky < aw.h(); ++ky)
            for (int kx = 0; kx < aw.w(); ++kx)
                for (int j = 0; j < c; ++j)
                    aw.at(co, ky, kx, 2 * c + j) = aw.at(co, ky, kx, c + j);
    Tensor& ow = net.params().get("recon.out.w")->value;
    std::normal_distribution<Real> dist(0.0, 0.05);
    for (std::size_t i = 0; i < ow.numel(); ++i) ow[i] = dist(rng);

    Tensor d = testutil::uniform_tensor({4, 6, 6, 1}, rng, 50.0, 300.0);
    Tensor rgb = testutil::uniform_tensor({4, 24, 24, 3}, rng, 0.0, 1.0);

    auto out_f = net.forward(d, rgb);
    auto out_r = net.forward(reverse_time(d), reverse_time(rgb));
    CHECK(max_abs_diff(out_r.d_hr->value, reverse_time(out_f.d_hr->value)) < 1e-10);
    CHECK(max_abs_diff(out_r.f_td->value, reverse_time(out_f.f_td->value)) < 1e-10);
}

TEST_CASE("reconstruction") {
    ModelConfig cfg = small_cfg();
    std::mt19937_64 rng(101);

    SUBCASE("zero-initialized head makes D_HR exactly the bicubic upsample") {
        STDNet net(cfg);
        Tensor d = testutil::uniform_tensor({3, 4, 4, 1}, rng, 50.0, 300.0);
        Tensor rgb = testutil::uniform_tensor({3, 16, 16, 3}, rng, 0.0, 1.0);
        auto out = net.forward(d, rgb);
        Tensor want = kernels::resize_forward(d, 16, 16, kernels::Interp::Bicubic);
        CHECK(max_abs_diff(out.d_hr->value, want) == 0);
    }

    SUBCASE("output dims are s x LR dims, one frame per input frame") {
        for (int s : {4, 8}) {
            ModelConfig c2 = small_cfg();
            c2.scale = s;
            STDNet net(c2);
            Tensor d = testutil::uniform_tensor({3, 4, 5, 1}, rng, 50.0, 300.0);
            Tensor rgb = testutil::uniform_tensor({3, 4 * s, 5 * s, 3}, rng, 0.0, 1.0);
            auto out = net.forward(d, rgb);
            CHECK(out.d_hr->shape() == Shape{3, 4 * s, 5 * s, 1});
        }
    }

    SUBCASE("mismatched RGB resolution is rejected") {
        STDNet net(cfg);
        Tensor d = testutil::uniform_tensor({3, 4, 4, 1}, rng, 50.0, 300.0);
        Tensor rgb = testutil::uniform_tensor({3, 12, 16, 3}, rng, 0.0, 1.0);
        CHECK_THROWS_AS((void)net.forward(d, rgb), std::invalid_argument);
    }

    SUBCASE("unsupported scale is rejected") {
        ModelConfig bad = small_cfg();
        bad.scale = 3;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
}

TEST_CASE("neighbor ablation changes the architecture") {
    ModelConfig one = small_cfg();
    one.neighbors = 1;
    ModelConfig two = small_cfg();
    two.neighbors = 2;
    STDNet net1(one), net2(two);
    CHECK(net2.params().total_scalars() > net1.params().total_scalars());

    std::mt19937_64 rng(111);
    Tensor d = testutil::uniform_tensor({3, 4, 4, 1}, rng, 50.0, 300.0);
    Tensor rgb = testutil::uniform_tensor({3, 16, 16, 3}, rng, 0.0, 1.0);
    CHECK(net1.forward(d, rgb).d_hr->value.all_finite());
}

TEST_CASE("T=3 minimal clip works end to end") {
    ModelConfig cfg = small_cfg();
    STDNet net(cfg);
    std::mt19937_64 rng(121);
    Tensor d = testutil::uniform_tensor({3, 4, 4, 1}, rng, 50.0, 300.0);
    Tensor rgb = testutil::uniform_tensor({3, 16, 16, 3}, rng, 0.0, 1.0);
    auto out = net.forward(d, rgb);
    CHECK(out.phi->shape().t == 2);
    CHECK(out.phi_hat->shape().t == 1);
    CHECK(out.d_hr->value.all_finite());
}

TEST_CASE("propagation + reconstruction gradient check on a tiny branch") {
    ModelConfig cfg;
    cfg.scale = 4;
    cfg.channels = 2;
    cfg.encoder_depth = 1;
    cfg.seed = 9;
    nn::ParamStore ps;
    nn::Rng prng(cfg.seed);
    TemporalBranch branch(ps, cfg, prng);
    std::mt19937_64 rng(131);

    // Put the deformable offsets at ~0.3 px (off the integer kinks of bilinear
    // sampling) for all four paths, so finite differences are smooth.
    for (const char* dir : {"fwd", "bwd"})
        for (const char* kind : {"adj", "cross"}) {
            Tensor& b =
                ps.get(std::string("temporal.") + dir + "." + kind + ".enc.1.b")->value;
            const int K = cfg.deform_kernel * cfg.deform_kernel;
            for (int i = 0; i < 2 * K; ++i) b[i] = 0.3;
        }

    // Frames separated by an elementwise gap > 0.1 keep |.| away from its kink.
    Tensor base = testutil::uniform_tensor({1, 4, 4, 2}, rng, -0.5, 0.5);
    Tensor gap = testutil::uniform_tensor({1, 4, 4, 2}, rng, 0.2, 0.4);
    Tensor fsd(3, 4, 4, 2);
    for (int t = 0; t < 3; ++t)
        for (std::size_t i = 0; i < base.numel(); ++i)
            fsd[t * base.numel() + i] = base[i] + t * gap[i];

    auto f_sd = ag::leaf(fsd, true);
    auto f_r = ag::leaf(testutil::uniform_tensor({3, 4, 4, 2}, rng, -0.5, 0.5), true);
    auto w = ag::leaf(testutil::uniform_tensor({3, 4, 4, 1}, rng, 0.2, 0.8), true);
    auto d_lr = ag::leaf(testutil::uniform_tensor({3, 4, 4, 1}, rng, 0.5, 1.5), true);

    auto build = [&] {
        auto reps = TemporalBranch::temporal_difference_reps(f_sd);
        auto f_td = branch.propagate(f_sd, f_r, w, reps);
        return testutil::probe(branch.reconstruct(f_td, d_lr));
    };
    CHECK(testutil::grad_check(build, {f_sd, f_r, w, d_lr}) < 1e-3);
}
