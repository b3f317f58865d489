#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mvms/bench/metrics.hpp"
#include "mvms/tomo/fbp.hpp"
#include "mvms/tomo/projector.hpp"

namespace mvms::bench {

/// Isotropic total variation with forward differences (Neumann boundary).
inline double total_variation(const Array2D& x) {
    const std::size_t m = x.rows(), n = x.cols();
    double tv = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double dv = i + 1 < m ? x(i, j) - x(i + 1, j) : 0.0;
            const double dh = j + 1 < n ? x(i, j) - x(i, j + 1) : 0.0;
            tv += std::sqrt(dv * dv + dh * dh);
        }
    return tv;
}

namespace detail {

/// Dual field: p is (m-1) x n vertical, q is m x (n-1) horizontal.
struct Dual {
    Array2D p, q;
};

/// L(p, q): negative divergence.
inline Array2D div_op(const Dual& d, std::size_t m, std::size_t n) {
    Array2D out(m, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double v = 0.0;
            if (i + 1 < m) v += d.p(i, j);
            if (i > 0) v -= d.p(i - 1, j);
            if (j + 1 < n) v += d.q(i, j);
            if (j > 0) v -= d.q(i, j - 1);
            out(i, j) = v;
        }
    return out;
}

/// L^T x: forward differences.
inline Dual grad_op(const Array2D& x) {
    const std::size_t m = x.rows(), n = x.cols();
    Dual d{Array2D(m > 0 ? m - 1 : 0, n), Array2D(m, n > 0 ? n - 1 : 0)};
    for (std::size_t i = 0; i + 1 < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d.p(i, j) = x(i, j) - x(i + 1, j);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j + 1 < n; ++j) d.q(i, j) = x(i, j) - x(i, j + 1);
    return d;
}

/// Pointwise projection onto the unit ball.
inline void project_unit(Dual& d, std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double a = i + 1 < m ? d.p(i, j) : 0.0;
            const double b = j + 1 < n ? d.q(i, j) : 0.0;
            const double s = std::max(1.0, std::sqrt(a * a + b * b));
            if (i + 1 < m) d.p(i, j) = a / s;
            if (j + 1 < n) d.q(i, j) = b / s;
        }
}

inline void clamp_nonneg(Array2D& x) {
    for (double& v : x.values()) v = std::max(v, 0.0);
}

} // namespace detail

/// argmin_{x >= 0} 1/2 ||x - b||^2 + mu TV(x) by accelerated dual projection.
inline Array2D tv_prox(const Array2D& b, double mu, std::size_t iters = 20) {
    const std::size_t m = b.rows(), n = b.cols();
    if (mu <= 0.0) {
        Array2D x = b;
        detail::clamp_nonneg(x);
        return x;
    }
    detail::Dual pq{Array2D(m - 1, n), Array2D(m, n - 1)};
    detail::Dual rs = pq;
    double t = 1.0;
    const auto primal = [&](const detail::Dual& d) {
        Array2D x = b - mu * detail::div_op(d, m, n);
        detail::clamp_nonneg(x);
        return x;
    };
    for (std::size_t k = 0; k < iters; ++k) {
        const detail::Dual prev = pq;
        const detail::Dual g = detail::grad_op(primal(rs));
        pq.p = rs.p + (1.0 / (8.0 * mu)) * g.p;
        pq.q = rs.q + (1.0 / (8.0 * mu)) * g.q;
        detail::project_unit(pq, m, n);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const double w = (t - 1.0) / t_next;
        rs.p = pq.p + w * (pq.p - prev.p);
        rs.q = pq.q + w * (pq.q - prev.q);
        t = t_next;
    }
    return primal(pq);
}

/// ||P||^2 by power iteration on P^T P.
inline double operator_norm_sq(const tomo::ScanGeometry& g, const tomo::ViewSubset& s, std::size_t iters = 30) {
    Array2D x(g.m1, g.m2);
    x.fill(1.0);
    double lambda = 0.0;
    for (std::size_t k = 0; k < iters; ++k) {
        const double nx = norm2(x);
        if (nx == 0.0) return 0.0;
        x *= 1.0 / nx;
        Array2D y = tomo::backproject_adjoint(tomo::project(x, g, s), g, s);
        lambda = dot(x, y);
        x = std::move(y);
    }
    return lambda;
}

struct FistaOptions {
    std::size_t max_iter = 100;
    std::size_t inner_iter = 20;
};

struct FistaResult {
    Array2D image;
    std::vector<double> objective; // F(x_k) after each outer iteration
    double lipschitz = 0.0;
};

inline double fista_objective(const Array2D& x, const Array2D& y, const tomo::ScanGeometry& g, const tomo::ViewSubset& s,
                              double lambda) {
    const Array2D r = tomo::project(x, g, s) - y;
    return 0.5 * dot(r, r) + lambda * total_variation(x);
}

/// Monotone FISTA on 1/2 ||P_s x - y||^2 + lambda TV(x) subject to x >= 0,
/// started from the clamped FBP image.
inline FistaResult fista_tv(const Array2D& y, const tomo::ScanGeometry& g, const tomo::ViewSubset& s, double lambda,
                            const FistaOptions& opt = {}) {
    if (!(lambda > 0.0)) throw ArgumentError("fista_tv: lambda must be > 0");
    if (opt.max_iter < 1) throw ArgumentError("fista_tv: max_iter must be >= 1");
    tomo::detail::check_sinogram(g, s, y, "fista_tv");
    FistaResult out;
    out.lipschitz = 1.01 * operator_norm_sq(g, s);
    const double L = out.lipschitz;
    Array2D x = tomo::FilteredBackprojection(g, s).apply(y);
    detail::clamp_nonneg(x);
    double fx = fista_objective(x, y, g, s, lambda);
    Array2D z_pt = x;
    double t = 1.0;
    for (std::size_t k = 0; k < opt.max_iter; ++k) {
        const Array2D grad = tomo::backproject_adjoint(tomo::project(z_pt, g, s) - y, g, s);
        const Array2D z = tv_prox(z_pt - (1.0 / L) * grad, lambda / L, opt.inner_iter);
        const double fz = fista_objective(z, y, g, s, lambda);
        const Array2D x_prev = x;
        if (fz <= fx) {
            x = z;
            fx = fz;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        z_pt = x + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_prev);
        t = t_next;
        out.objective.push_back(fx);
    }
    out.image = std::move(x);
    return out;
}

/// Candidate lambdas as multiples of ||P_s||^2, so the prox weight lambda / L
/// spans image-domain scales.
inline std::vector<double> lambda_grid(double lipschitz) {
    std::vector<double> out;
    for (double r : {3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1}) out.push_back(r * lipschitz);
    return out;
}

/// Grid search for lambda by mean PSNR on validation images.
inline double tune_lambda(const std::vector<Array2D>& val, const tomo::ScanGeometry& g, const tomo::ViewSubset& s,
                          const std::vector<double>& candidates, const FistaOptions& opt = {}) {
    if (val.empty() || candidates.empty()) throw ArgumentError("tune_lambda: needs validation images and candidates");
    double best = candidates.front(), best_psnr = -std::numeric_limits<double>::infinity();
    for (double lam : candidates) {
        double total = 0.0;
        for (const Array2D& x : val) total += psnr(fista_tv(tomo::project(x, g, s), g, s, lam, opt).image, x);
        if (total > best_psnr) {
            best_psnr = total;
            best = lam;
        }
    }
    return best;
}

} // namespace mvms::bench
