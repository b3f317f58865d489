#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "mvms/core/array2d.hpp"
#include "mvms/tomo/geometry.hpp"
#include "mvms/tomo/projector.hpp"

namespace mvms::tomo {

namespace detail {

/// Process-wide cache of 1D real FFT plans keyed by length. Planning is not
/// thread safe in FFTW, execution with the new-array interface is.
class FftPlans {
public:
    struct Pair {
        fftw_plan forward;
        fftw_plan inverse;
    };

    static Pair get(std::size_t n) {
        static FftPlans cache;
        std::lock_guard lock(cache.mutex_);
        auto it = cache.plans_.find(n);
        if (it != cache.plans_.end()) return it->second;
        std::vector<double> real(n);
        std::vector<std::complex<double>> spec(n / 2 + 1);
        const int len = static_cast<int>(n);
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        Pair p{fftw_plan_dft_r2c_1d(len, real.data(), reinterpret_cast<fftw_complex*>(spec.data()), flags),
               fftw_plan_dft_c2r_1d(len, reinterpret_cast<fftw_complex*>(spec.data()), real.data(), flags)};
        cache.plans_.emplace(n, p);
        return p;
    }

private:
    FftPlans() = default;
    ~FftPlans() {
        for (auto& [n, p] : plans_) {
            fftw_destroy_plan(p.forward);
            fftw_destroy_plan(p.inverse);
        }
    }
    std::mutex mutex_;
    std::map<std::size_t, Pair> plans_;
};

inline std::size_t next_pow2(std::size_t v) {
    std::size_t p = 1;
    while (p < v) p <<= 1;
    return p;
}

} // namespace detail

/// Band-limited Ram-Lak kernel sample h(n * tau).
inline double ram_lak_tap(long n, double tau) {
    if (n == 0) return 1.0 / (4.0 * tau * tau);
    if (n % 2 == 0) return 0.0;
    const double d = std::numbers::pi * static_cast<double>(n) * tau;
    return -1.0 / (d * d);
}

/// Ram-Lak ramp filter on rows of length n: zero-pad to the next power of two
/// >= 2n, multiply by the (real, even) spectrum of the Ram-Lak kernel, invert,
/// truncate. Equivalent to linear convolution tau * sum_j h[k-j] p[j], so the
/// n x n filter matrix is symmetric.
class RampFilter {
public:
    RampFilter() = default;
    RampFilter(std::size_t n, double tau) : n_(n), padded_(detail::next_pow2(std::max<std::size_t>(2 * n, 2))) {
        std::vector<double> kernel(padded_);
        for (std::size_t k = 0; k < padded_; ++k) {
            const long shift = k <= padded_ / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(padded_);
            kernel[k] = ram_lak_tap(shift, tau);
        }
        std::vector<std::complex<double>> spec(padded_ / 2 + 1);
        const auto plans = detail::FftPlans::get(padded_);
        fftw_execute_dft_r2c(plans.forward, kernel.data(), reinterpret_cast<fftw_complex*>(spec.data()));
        // tau from the convolution sum, 1/N from the unnormalised inverse.
        const double scale = tau / static_cast<double>(padded_);
        response_.resize(spec.size());
        for (std::size_t m = 0; m < spec.size(); ++m) response_[m] = spec[m].real() * scale;
    }

    std::size_t length() const noexcept { return n_; }
    std::size_t padded_length() const noexcept { return padded_; }
    std::span<const double> response() const noexcept { return response_; }

    void apply(std::span<const double> in, std::span<double> out) const {
        std::vector<double> buf(padded_, 0.0);
        std::copy(in.begin(), in.end(), buf.begin());
        std::vector<std::complex<double>> spec(padded_ / 2 + 1);
        const auto plans = detail::FftPlans::get(padded_);
        fftw_execute_dft_r2c(plans.forward, buf.data(), reinterpret_cast<fftw_complex*>(spec.data()));
        for (std::size_t m = 0; m < spec.size(); ++m) spec[m] *= response_[m];
        fftw_execute_dft_c2r(plans.inverse, reinterpret_cast<fftw_complex*>(spec.data()), buf.data());
        std::copy(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(n_), out.begin());
    }

    Array2D apply_rows(const Array2D& y) const {
        Array2D out(y.rows(), y.cols());
        for (std::size_t r = 0; r < y.rows(); ++r) apply(y.row(r), out.row(r));
        return out;
    }

private:
    std::size_t n_ = 0;
    std::size_t padded_ = 0;
    std::vector<double> response_;
};

/// Ram-Lak filtered backprojection on a view subset (the sparse-view or
/// full-view reconstruction operator), with its exact transpose.
///
/// Parallel: ramp filter, pixel-driven backprojection, scale pi/q1.
/// Fan (flat detector): rebin detector coordinates to the isocentre,
/// pre-weight by D/sqrt(D^2+s^2), ramp filter, backproject with 1/U^2, scale
/// (2 pi/q1) * 1/2.
class FilteredBackprojection {
public:
    FilteredBackprojection(ScanGeometry g, ViewSubset subset) : geom_(std::move(g)), subset_(std::move(subset)) {
        validate_subset(geom_, subset_);
        const double q1 = static_cast<double>(subset_.q1());
        preweight_.assign(geom_.n_det, 1.0);
        if (geom_.beam == Beam::parallel) {
            spacing_ = geom_.det_spacing;
            scale_ = std::numbers::pi / q1;
        } else {
            spacing_ = geom_.det_spacing * geom_.src_dist / (geom_.src_dist + geom_.det_dist);
            scale_ = 0.5 * 2.0 * std::numbers::pi / q1;
            const double d = geom_.src_dist;
            for (std::size_t k = 0; k < geom_.n_det; ++k) {
                const double s = (static_cast<double>(k) - 0.5 * static_cast<double>(geom_.n_det - 1)) * spacing_;
                preweight_[k] = d / std::sqrt(d * d + s * s);
            }
        }
        ramp_ = RampFilter(geom_.n_det, spacing_);
    }

    const ScanGeometry& geometry() const noexcept { return geom_; }
    const ViewSubset& subset() const noexcept { return subset_; }

    Image apply(const Array2D& y) const {
        detail::check_sinogram(geom_, subset_, y, "fbp");
        Array2D weighted = y;
        weight_rows(weighted);
        const Array2D q = ramp_.apply_rows(weighted);
        Image x(geom_.m1, geom_.m2);
        for (std::size_t v = 0; v < subset_.q1(); ++v) {
            const auto row = q.row(v);
            visit_pixels(v, [&](std::size_t pix, std::size_t k, double w) { x[pix] += w * row[k]; });
        }
        x *= scale_;
        return x;
    }

    Array2D apply_transpose(const Image& x) const {
        detail::check_image(geom_, x, "fbp transpose");
        Array2D q(subset_.q1(), geom_.n_det);
        for (std::size_t v = 0; v < subset_.q1(); ++v) {
            auto row = q.row(v);
            visit_pixels(v, [&](std::size_t pix, std::size_t k, double w) { row[k] += w * x[pix]; });
        }
        q *= scale_;
        Array2D y = ramp_.apply_rows(q);
        weight_rows(y);
        return y;
    }

private:
    void weight_rows(Array2D& y) const {
        if (geom_.beam == Beam::parallel) return;
        for (std::size_t v = 0; v < y.rows(); ++v) {
            auto row = y.row(v);
            for (std::size_t k = 0; k < row.size(); ++k) row[k] *= preweight_[k];
        }
    }

    /// For view v, calls visit(pixel, detector_cell, weight) for the two
    /// detector cells bracketing each pixel's projection.
    template <class Visit>
    void visit_pixels(std::size_t v, Visit&& visit) const {
        const double angle = geom_.view_angles[subset_.indices[v]];
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double ps = geom_.pixel_size;
        const double half_rows = 0.5 * static_cast<double>(geom_.m1 - 1);
        const double half_cols = 0.5 * static_cast<double>(geom_.m2 - 1);
        const double centre = 0.5 * static_cast<double>(geom_.n_det - 1);
        const double last = static_cast<double>(geom_.n_det - 1);
        const bool fan = geom_.beam == Beam::fan;
        const double d = geom_.src_dist;
        for (std::size_t r = 0; r < geom_.m1; ++r) {
            const double y = (half_rows - static_cast<double>(r)) * ps;
            for (std::size_t col = 0; col < geom_.m2; ++col) {
                const double x = (static_cast<double>(col) - half_cols) * ps;
                double t = x * c + y * s;
                double w = 1.0;
                if (fan) {
                    const double u = (d - t) / d;
                    t = (-x * s + y * c) / u;
                    w = 1.0 / (u * u);
                }
                const double f = t / spacing_ + centre;
                if (f < 0.0 || f > last) continue;
                const double fl = std::floor(f);
                const auto k0 = static_cast<std::size_t>(fl);
                const double a = f - fl;
                const std::size_t pix = r * geom_.m2 + col;
                visit(pix, k0, w * (1.0 - a));
                if (a > 0.0) visit(pix, k0 + 1, w * a);
            }
        }
    }

    ScanGeometry geom_;
    ViewSubset subset_;
    RampFilter ramp_;
    std::vector<double> preweight_;
    double spacing_ = 1.0;
    double scale_ = 1.0;
};

inline Image fbp(const Sinogram& y, const ScanGeometry& g) {
    return FilteredBackprojection(g, y.subset).apply(y.values);
}

} // namespace mvms::tomo
