#pragma once

#include <cstddef>
#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace stdnet {

using Real = double;

// Frame-major 4-D array: index order (frame, row, col, channel).
struct Shape {
    int t = 0, h = 0, w = 0, c = 0;

    std::size_t numel() const {
        return std::size_t(t) * h * w * c;
    }
    bool operator==(const Shape&) const = default;
    std::string str() const {
        return "(" + std::to_string(t) + "," + std::to_string(h) + "," +
               std::to_string(w) + "," + std::to_string(c) + ")";
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape s, Real fill = 0.0) : shape_(s), data_(s.numel(), fill) {
        if (s.t < 1 || s.h < 1 || s.w < 1 || s.c < 1)
            throw std::invalid_argument("Tensor: all dims must be >= 1, got " + s.str());
    }
    Tensor(int t, int h, int w, int c, Real fill = 0.0) : Tensor(Shape{t, h, w, c}, fill) {}

    const Shape& shape() const { return shape_; }
    int t() const { return shape_.t; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    int c() const { return shape_.c; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    Real* data() { return data_.data(); }
    const Real* data() const { return data_.data(); }

    Real& operator[](std::size_t i) { return data_[i]; }
    Real operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(int ti, int y, int x, int ci) const {
        return ((std::size_t(ti) * shape_.h + y) * shape_.w + x) * shape_.c + ci;
    }
    Real& at(int ti, int y, int x, int ci) { return data_[index(ti, y, x, ci)]; }
    Real at(int ti, int y, int x, int ci) const { return data_[index(ti, y, x, ci)]; }

    void fill(Real v) { data_.assign(data_.size(), v); }

    bool all_finite() const {
        for (Real v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // Copy of frame ti as a (1,h,w,c) tensor.
    Tensor frame(int ti) const {
        Tensor out(1, shape_.h, shape_.w, shape_.c);
        const std::size_t n = std::size_t(shape_.h) * shape_.w * shape_.c;
        const Real* src = data_.data() + std::size_t(ti) * n;
        std::copy(src, src + n, out.data());
        return out;
    }

private:
    Shape shape_;
    std::vector<Real> data_;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

} // namespace stdnet
