#pragma once

#include "stdnet/data.hpp"

#include <filesystem>

namespace stdnet::analysis {

struct Histogram {
    std::vector<std::uint64_t> counts;
    Real lo = 0.0, hi = 1.0;

    std::uint64_t total() const {
        std::uint64_t n = 0;
        for (auto c : counts) n += c;
        return n;
    }
    Real bin_width() const { return (hi - lo) / counts.size(); }
};

enum class DiffScale {
    NormalizedByMaxDepth, // divide |diff| by the clip's max valid depth -> [0,1]
    AbsoluteCm,           // raw centimeters, range [0, hi]
};

struct SpatialLongtail {
    Histogram hist;
    Tensor diff_map; // (T, sh, sw, 1) absolute difference (scaled per `scale`)
};

// |D_GT - bicubic_up(D_LR, s)| distribution over valid pixels.
SpatialLongtail spatial_longtail_hist(const data::DepthVideo& gt, const data::DepthVideo& lr,
                                      int s, int bins,
                                      DiffScale scale = DiffScale::NormalizedByMaxDepth,
                                      Real abs_hi_cm = 100.0);

// |D^t - D^{t+stride}| distribution over jointly valid pixel pairs.
Histogram temporal_longtail_hist(const data::DepthVideo& d, int stride, int bins,
                                 DiffScale scale = DiffScale::NormalizedByMaxDepth,
                                 Real abs_hi_cm = 100.0);

// Fraction of histogram mass in bins at or above `threshold`.
Real longtail_mass(const Histogram& hist, Real threshold);

// Row `row` of every frame stacked into a (1, T, W, 1) image.
Tensor xt_slice(const Tensor& depth, int row);

void write_histogram_csv(const std::filesystem::path& path, const Histogram& hist);
// Grayscale PNG scaled so that `hi` maps to white.
void write_map_png(const std::filesystem::path& path, const Tensor& map2d, Real hi);

} // namespace stdnet::analysis
