#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mvms/core/error.hpp"

namespace mvms {

/// Dense row-major 2D array of doubles. Images are rows x cols (m1 x m2),
/// sinograms are views x detectors.
class Array2D {
public:
    Array2D() = default;
    Array2D(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Array2D(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        detail::require_shape(data_.size() == rows_ * cols_, "Array2D: data size does not match shape");
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    bool same_shape(const Array2D& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Array2D& operator+=(const Array2D& o) {
        check_same(o, "Array2D +=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Array2D& operator-=(const Array2D& o) {
        check_same(o, "Array2D -=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Array2D& operator*=(double a) {
        for (auto& v : data_) v *= a;
        return *this;
    }

    friend Array2D operator+(Array2D a, const Array2D& b) { return a += b; }
    friend Array2D operator-(Array2D a, const Array2D& b) { return a -= b; }
    friend Array2D operator*(double s, Array2D a) { return a *= s; }
    friend Array2D operator*(Array2D a, double s) { return a *= s; }

    bool operator==(const Array2D&) const = default;

    void check_same(const Array2D& o, const char* op) const {
        if (!same_shape(o))
            throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                             " vs " + std::to_string(o.rows_) + "x" + std::to_string(o.cols_));
    }

private:

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Attenuation image on a geometry grid (m1 rows x m2 columns).
using Image = Array2D;

inline double dot(const Array2D& a, const Array2D& b) {
    detail::require_shape(a.same_shape(b), "dot: shape mismatch");
    return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

inline double norm2(const Array2D& a) { return std::sqrt(dot(a, a)); }

inline double max_abs_diff(const Array2D& a, const Array2D& b) {
    detail::require_shape(a.same_shape(b), "max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline bool all_finite(const Array2D& a) {
    return std::all_of(a.values().begin(), a.values().end(), [](double v) { return std::isfinite(v); });
}

inline Array2D flip_horizontal(const Array2D& a) {
    Array2D out(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, a.cols() - 1 - c);
    return out;
}

inline Array2D flip_vertical(const Array2D& a) {
    Array2D out(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(a.rows() - 1 - r, c);
    return out;
}

} // namespace mvms
