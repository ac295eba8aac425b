#include "stdnet/analysis.hpp"
#include "stdnet/kernels.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace stdnet::analysis {

namespace {

Real max_valid_depth(const Tensor& depth, const Tensor& mask) {
    Real mx = 0.0;
    for (std::size_t i = 0; i < depth.numel(); ++i)
        if (mask[i] > 0.0) mx = std::max(mx, depth[i]);
    return mx;
}

void accumulate(Histogram& h, Real v) {
    const Real w = h.bin_width();
    int bin = (int)std::floor((v - h.lo) / w);
    bin = std::clamp(bin, 0, (int)h.counts.size() - 1);
    ++h.counts[bin];
}

} // namespace

SpatialLongtail spatial_longtail_hist(const data::DepthVideo& gt, const data::DepthVideo& lr,
                                      int s, int bins, DiffScale scale, Real abs_hi_cm) {
    require(bins >= 1, "spatial_longtail_hist: bins must be >= 1");
    require(lr.depth.h() * s == gt.depth.h() && lr.depth.w() * s == gt.depth.w(),
            "spatial_longtail_hist: dims inconsistent with s=" + std::to_string(s));
    Tensor up = kernels::resize_forward(lr.depth, gt.depth.h(), gt.depth.w(),
                                        kernels::Interp::Bicubic);
    const Real norm = scale == DiffScale::NormalizedByMaxDepth
                          ? std::max(max_valid_depth(gt.depth, gt.mask), Real(1e-12))
                          : 1.0;
    SpatialLongtail out;
    out.hist.lo = 0.0;
    out.hist.hi = scale == DiffScale::NormalizedByMaxDepth ? 1.0 : abs_hi_cm;
    out.hist.counts.assign(bins, 0);
    out.diff_map = Tensor(gt.depth.shape());
    for (std::size_t i = 0; i < gt.depth.numel(); ++i) {
        const Real d = std::abs(gt.depth[i] - up[i]) / norm;
        out.diff_map[i] = d;
        if (gt.mask[i] > 0.0) accumulate(out.hist, d);
    }
    return out;
}

Histogram temporal_longtail_hist(const data::DepthVideo& d, int stride, int bins, DiffScale scale,
                                 Real abs_hi_cm) {
    require(stride == 1 || stride == 2, "temporal_longtail_hist: stride must be 1 or 2");
    if (d.depth.t() <= stride)
        throw std::runtime_error("temporal_longtail_hist: clip of " +
                                 std::to_string(d.depth.t()) + " frames too short for stride " +
                                 std::to_string(stride));
    const Real norm = scale == DiffScale::NormalizedByMaxDepth
                          ? std::max(max_valid_depth(d.depth, d.mask), Real(1e-12))
                          : 1.0;
    Histogram h;
    h.lo = 0.0;
    h.hi = scale == DiffScale::NormalizedByMaxDepth ? 1.0 : abs_hi_cm;
    h.counts.assign(bins, 0);
    for (int t = 0; t + stride < d.depth.t(); ++t)
        for (int y = 0; y < d.depth.h(); ++y)
            for (int x = 0; x < d.depth.w(); ++x) {
                if (d.mask.at(t, y, x, 0) <= 0.0 || d.mask.at(t + stride, y, x, 0) <= 0.0)
                    continue;
                accumulate(h, std::abs(d.depth.at(t, y, x, 0) -
                                       d.depth.at(t + stride, y, x, 0)) /
                                  norm);
            }
    return h;
}

Real longtail_mass(const Histogram& hist, Real threshold) {
    const std::uint64_t total = hist.total();
    if (total == 0) return 0.0;
    const Real w = hist.bin_width();
    std::uint64_t tail = 0;
    for (std::size_t i = 0; i < hist.counts.size(); ++i)
        if (hist.lo + i * w >= threshold) tail += hist.counts[i];
    return Real(tail) / Real(total);
}

Tensor xt_slice(const Tensor& depth, int row) {
    require(row >= 0 && row < depth.h(), "xt_slice: row " + std::to_string(row) +
                                             " out of range [0," + std::to_string(depth.h()) +
                                             ")");
    Tensor out(1, depth.t(), depth.w(), 1);
    for (int t = 0; t < depth.t(); ++t)
        for (int x = 0; x < depth.w(); ++x) out.at(0, t, x, 0) = depth.at(t, row, x, 0);
    return out;
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram& hist) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_histogram_csv: cannot open " + path.string());
    out << "bin_lo,bin_hi,count\n";
    const Real w = hist.bin_width();
    for (std::size_t i = 0; i < hist.counts.size(); ++i)
        out << hist.lo + i * w << "," << hist.lo + (i + 1) * w << "," << hist.counts[i] << "\n";
}

void write_map_png(const std::filesystem::path& path, const Tensor& map2d, Real hi) {
    require(map2d.t() == 1 && map2d.c() == 1, "write_map_png: expected a (1,h,w,1) map");
    cv::Mat img(map2d.h(), map2d.w(), CV_8UC1);
    const Real s = hi > 0 ? 255.0 / hi : 0.0;
    for (int y = 0; y < map2d.h(); ++y)
        for (int x = 0; x < map2d.w(); ++x)
            img.at<std::uint8_t>(y, x) =
                (std::uint8_t)std::lround(std::clamp(map2d.at(0, y, x, 0) * s, 0.0, 255.0));
    if (!cv::imwrite(path.string(), img))
        throw std::runtime_error("write_map_png: failed to write " + path.string());
}

} // namespace stdnet::analysis
