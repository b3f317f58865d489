#pragma once

#include <cmath>
#include <vector>

#include "mvms/core/array2d.hpp"
#include "mvms/tomo/geometry.hpp"

namespace mvms::tomo {

/// Linear interpolation along the view axis from a sparse subset to every
/// full view. Detector positions are untouched. The angle axis is periodic:
/// fan data wraps at 2 pi, parallel data wraps at pi with the detector axis
/// reversed, since p(theta + pi, t) = p(theta, -t).
class ViewUpsampler {
public:
    ViewUpsampler(const ScanGeometry& g, const ViewSubset& subset)
        : n_views_(g.n_views()), n_det_(g.n_det), q1_(subset.q1()) {
        if (subset.indices.empty()) throw GeometryError("upsample_views: subset is empty");
        validate_subset(g, subset);
        const double period = g.angular_range();
        const bool parallel = g.beam == Beam::parallel;
        taps_.resize(n_views_);
        std::vector<std::size_t> slot(n_views_, q1_);
        for (std::size_t k = 0; k < q1_; ++k) slot[subset.indices[k]] = k;

        for (std::size_t f = 0; f < n_views_; ++f) {
            Tap& t = taps_[f];
            if (slot[f] < q1_) {
                t.lo = t.hi = slot[f];
                t.exact = true;
                continue;
            }
            const double theta = g.view_angles[f];
            // Last subset view at or before theta, cyclically.
            std::size_t lo = q1_ - 1;
            double lo_angle = g.view_angles[subset.indices[q1_ - 1]] - period;
            bool lo_wrapped = true;
            for (std::size_t k = 0; k < q1_; ++k) {
                const double a = g.view_angles[subset.indices[k]];
                if (a <= theta) {
                    lo = k;
                    lo_angle = a;
                    lo_wrapped = false;
                }
            }
            std::size_t hi = lo_wrapped ? 0 : lo + 1;
            double hi_angle = 0.0;
            bool hi_wrapped = false;
            if (hi >= q1_) {
                hi = 0;
                hi_angle = g.view_angles[subset.indices[0]] + period;
                hi_wrapped = true;
            } else {
                hi_angle = g.view_angles[subset.indices[hi]];
            }
            const double w = (theta - lo_angle) / (hi_angle - lo_angle);
            t.lo = lo;
            t.hi = hi;
            t.w_lo = 1.0 - w;
            t.w_hi = w;
            // Exactly one end is wrapped across the period boundary when wrapping
            // happens; for parallel data that end sees the detector reversed.
            t.reverse_lo = parallel && lo_wrapped;
            t.reverse_hi = parallel && hi_wrapped;
            t.exact = false;
        }
    }

    Array2D apply(const Array2D& sparse) const {
        if (sparse.rows() != q1_ || sparse.cols() != n_det_) throw ShapeError("upsample_views: sparse sinogram shape");
        Array2D full(n_views_, n_det_);
        for (std::size_t f = 0; f < n_views_; ++f) {
            const Tap& t = taps_[f];
            auto out = full.row(f);
            const auto a = sparse.row(t.lo);
            if (t.exact) {
                std::copy(a.begin(), a.end(), out.begin());
                continue;
            }
            const auto b = sparse.row(t.hi);
            for (std::size_t d = 0; d < n_det_; ++d) {
                const std::size_t da = t.reverse_lo ? n_det_ - 1 - d : d;
                const std::size_t db = t.reverse_hi ? n_det_ - 1 - d : d;
                out[d] = t.w_lo * a[da] + t.w_hi * b[db];
            }
        }
        return full;
    }

    Array2D apply_transpose(const Array2D& full) const {
        if (full.rows() != n_views_ || full.cols() != n_det_) throw ShapeError("upsample_views transpose: shape");
        Array2D sparse(q1_, n_det_);
        for (std::size_t f = 0; f < n_views_; ++f) {
            const Tap& t = taps_[f];
            const auto in = full.row(f);
            auto a = sparse.row(t.lo);
            if (t.exact) {
                for (std::size_t d = 0; d < n_det_; ++d) a[d] += in[d];
                continue;
            }
            auto b = sparse.row(t.hi);
            for (std::size_t d = 0; d < n_det_; ++d) {
                const std::size_t da = t.reverse_lo ? n_det_ - 1 - d : d;
                const std::size_t db = t.reverse_hi ? n_det_ - 1 - d : d;
                a[da] += t.w_lo * in[d];
                b[db] += t.w_hi * in[d];
            }
        }
        return sparse;
    }

private:
    struct Tap {
        std::size_t lo = 0;
        std::size_t hi = 0;
        double w_lo = 1.0;
        double w_hi = 0.0;
        bool reverse_lo = false;
        bool reverse_hi = false;
        bool exact = false;
    };

    std::size_t n_views_;
    std::size_t n_det_;
    std::size_t q1_;
    std::vector<Tap> taps_;
};

inline Array2D upsample_views(const Array2D& sparse, const ViewSubset& subset, const ScanGeometry& g) {
    return ViewUpsampler(g, subset).apply(sparse);
}

} // namespace mvms::tomo
