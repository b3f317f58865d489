#pragma once

// Independent reference helpers shared by the test suites: explicit matrices
// built from unit vectors, central finite differences, random fills.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mvms/core/array2d.hpp"
#include "mvms/diff/tensor.hpp"

namespace oracle {

using mvms::Array2D;
using mvms::diff::Shape;
using mvms::diff::Tensor;

inline Array2D random_array(std::size_t rows, std::size_t cols, unsigned seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Array2D a(rows, cols);
    for (auto& v : a.values()) v = u(rng);
    return a;
}

inline Tensor random_tensor(const Shape& shape, unsigned seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(shape);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

/// Column j of the result is f(e_j) flattened; the input is rows x cols.
inline Array2D matrix_of(const std::function<Array2D(const Array2D&)>& f, std::size_t rows, std::size_t cols) {
    const std::size_t n = rows * cols;
    Array2D e(rows, cols);
    Array2D first = f(e);
    Array2D m(first.rows() * first.cols(), n);
    for (std::size_t j = 0; j < n; ++j) {
        e.values().assign(n, 0.0);
        e[j] = 1.0;
        const Array2D col = f(e);
        for (std::size_t i = 0; i < col.values().size(); ++i) m(i, j) = col[i];
    }
    return m;
}

/// y = M vec(x), reshaped to rows x cols.
inline Array2D apply(const Array2D& m, const Array2D& x, std::size_t rows, std::size_t cols) {
    Array2D y(rows, cols);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

inline Array2D transpose(const Array2D& m) {
    Array2D t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

inline Array2D matmul(const Array2D& a, const Array2D& b) {
    Array2D c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double v = a(i, k);
            if (v == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += v * b(k, j);
        }
    return c;
}

inline Array2D identity(std::size_t n) {
    Array2D m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

/// Central-difference gradient of f at x with step h.
inline Tensor numeric_gradient(const std::function<double(const Tensor&)>& f, Tensor x, double h = 1e-5) {
    Tensor g = Tensor::zeros_like(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||, floor).
inline double rel_err(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-12) {
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

} // namespace oracle
