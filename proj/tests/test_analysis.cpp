#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "stdnet/analysis.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using namespace stdnet;
namespace fs = std::filesystem;

namespace {
data::DepthVideo plane(int t, int h, int w, Real cm) {
    data::DepthVideo d;
    d.depth = Tensor(t, h, w, 1, cm);
    d.mask = Tensor(t, h, w, 1, 1.0);
    return d;
}
} // namespace

TEST_CASE("spatial long-tail histogram") {
    SUBCASE("a constant plane puts all mass in bin 0") {
        auto gt = plane(2, 16, 16, 200.0);
        auto lr = data::synthesize_lr(gt, 4);
        auto out = analysis::spatial_longtail_hist(gt, lr, 4, 32);
        CHECK(out.hist.total() == gt.depth.numel());
        CHECK(out.hist.counts[0] == gt.depth.numel());
        CHECK(analysis::longtail_mass(out.hist, 0.1) == 0.0);
    }

    SUBCASE("counts sum to the valid-pixel population") {
        std::mt19937_64 rng(3);
        data::SceneSpec spec = data::random_scene_spec(3, 32, 32, rng);
        auto clip = data::make_synthetic_clip(spec);
        auto lr = data::synthesize_lr(clip.gt, 4);
        auto out = analysis::spatial_longtail_hist(clip.gt, lr, 4, 32);
        std::uint64_t valid = 0;
        for (std::size_t i = 0; i < clip.gt.mask.numel(); ++i) valid += clip.gt.mask[i] > 0;
        CHECK(out.hist.total() == valid);
        CHECK(out.diff_map.shape() == clip.gt.depth.shape());
    }

    SUBCASE("edge scenes concentrate tail mass near the depth edge") {
        auto gt = plane(2, 32, 32, 100.0);
        for (int t = 0; t < 2; ++t)
            for (int y = 0; y < 32; ++y)
                for (int x = 18; x < 32; ++x) gt.depth.at(t, y, x, 0) = 400.0;
        auto lr = data::synthesize_lr(gt, 4);
        auto out = analysis::spatial_longtail_hist(gt, lr, 4, 64);
        const Real tail = analysis::longtail_mass(out.hist, 0.1);
        CHECK(tail > 0.0);
        CHECK(tail < 0.5);
        // every |diff| >= 0.1*maxdepth pixel lies within 2s of the edge column
        Real maxd = 0;
        for (std::size_t i = 0; i < gt.depth.numel(); ++i) maxd = std::max(maxd, gt.depth[i]);
        for (int t = 0; t < 2; ++t)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x)
                    if (out.diff_map.at(t, y, x, 0) >= 0.1) CHECK(std::abs(x - 18) <= 8);
    }
}

TEST_CASE("temporal long-tail histogram") {
    SUBCASE("static video: all mass at zero for both strides") {
        auto gt = plane(4, 16, 16, 150.0);
        for (int stride : {1, 2}) {
            auto h = analysis::temporal_longtail_hist(gt.depth.shape().t >= 2 ? gt : gt, stride, 16);
            CHECK(h.counts[0] == h.total());
        }
    }

    SUBCASE("uniform differences land in the right bin") {
        // depth alternates 100 / 200 between frames; max depth 200 ->
        // normalized diff 0.5 everywhere.
        auto gt = plane(3, 8, 8, 100.0);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) gt.depth.at(1, y, x, 0) = 200.0;
        auto h1 = analysis::temporal_longtail_hist(gt, 1, 10);
        CHECK(analysis::longtail_mass(h1, 0.5) == 1.0);
        CHECK(analysis::longtail_mass(h1, 0.6) == 0.0);
        // stride 2 compares frames 0 and 2 (both 100): all mass at zero
        auto h2 = analysis::temporal_longtail_hist(gt, 2, 10);
        CHECK(h2.counts[0] == h2.total());
    }

    SUBCASE("stride longer than the clip is rejected") {
        auto gt = plane(2, 8, 8, 100.0);
        CHECK_THROWS((void)analysis::temporal_longtail_hist(gt, 2, 10));
    }
}

TEST_CASE("longtail_mass is in [0,1] and non-increasing in the threshold") {
    std::mt19937_64 rng(7);
    data::SceneSpec spec = data::random_scene_spec(4, 32, 32, rng);
    auto clip = data::make_synthetic_clip(spec);
    auto h = analysis::temporal_longtail_hist(clip.gt, 1, 32);
    Real prev = 1.1;
    for (Real thr : {0.0, 0.05, 0.1, 0.3, 0.7, 1.0}) {
        const Real m = analysis::longtail_mass(h, thr);
        CHECK(m >= 0.0);
        CHECK(m <= 1.0);
        CHECK(m <= prev);
        prev = m;
    }
    CHECK(analysis::longtail_mass(h, 0.0) == doctest::Approx(1.0));
}

TEST_CASE("x-t slice") {
    // A bright dot moving one pixel per frame draws a diagonal in the slice.
    Tensor d(5, 8, 8, 1, 0.0);
    for (int t = 0; t < 5; ++t) d.at(t, 3, 2 + t, 0) = 9.0;
    Tensor slice = analysis::xt_slice(d, 3);
    CHECK(slice.shape() == Shape{1, 5, 8, 1});
    for (int t = 0; t < 5; ++t)
        for (int x = 0; x < 8; ++x)
            CHECK(slice.at(0, t, x, 0) == (x == 2 + t ? 9.0 : 0.0));
}

TEST_CASE("CSV and PNG writers produce readable artifacts") {
    const fs::path dir = fs::temp_directory_path() / "stdnet_test_analysis";
    fs::create_directories(dir);
    analysis::Histogram h;
    h.counts = {5, 3, 0, 2};
    h.lo = 0.0;
    h.hi = 1.0;
    analysis::write_histogram_csv(dir / "h.csv", h);
    std::ifstream in(dir / "h.csv");
    REQUIRE(in.good());
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 5); // header + 4 bins

    Tensor map(1, 4, 4, 1, 0.5);
    analysis::write_map_png(dir / "m.png", map, 1.0);
    CHECK(fs::exists(dir / "m.png"));
    CHECK(fs::file_size(dir / "m.png") > 0);
}
