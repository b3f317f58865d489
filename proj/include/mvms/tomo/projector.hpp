#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "mvms/core/array2d.hpp"
#include "mvms/tomo/geometry.hpp"

namespace mvms::tomo {

/// Projection data on a view subset: values is q1 x n_det.
struct Sinogram {
    Array2D values;
    ViewSubset subset;

    std::size_t q1() const noexcept { return values.rows(); }
    std::size_t n_det() const noexcept { return values.cols(); }
};

struct Ray {
    double px, py; // point on the ray
    double dx, dy; // unit direction
};

/// Ray for detector cell `det` at view angle `angle`.
inline Ray make_ray(const ScanGeometry& g, double angle, std::size_t det) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double u = (static_cast<double>(det) - 0.5 * static_cast<double>(g.n_det - 1)) * g.det_spacing;
    if (g.beam == Beam::parallel) return {u * c, u * s, -s, c};
    const double sx = g.src_dist * c;
    const double sy = g.src_dist * s;
    const double tx = -g.det_dist * c - u * s;
    const double ty = -g.det_dist * s + u * c;
    const double len = std::hypot(tx - sx, ty - sy);
    return {sx, sy, (tx - sx) / len, (ty - sy) / len};
}

namespace detail {

/// Joseph-style traversal: one sample per column (or row, whichever axis the
/// ray is closer to), linear interpolation across the other axis. Inside the
/// outer half pixel the nearest boundary pixel is used at full weight, and
/// nothing is sampled beyond the grid edge. Calls visit(pixel_index, weight).
template <class Visit>
void trace_joseph(const ScanGeometry& g, const Ray& ray, Visit&& visit) {
    const double ps = g.pixel_size;
    const double half_rows = 0.5 * static_cast<double>(g.m1 - 1);
    const double half_cols = 0.5 * static_cast<double>(g.m2 - 1);
    const auto interp = [](double f, std::size_t n, auto&& emit) {
        const double last = static_cast<double>(n - 1);
        if (f < -0.5 || f > last + 0.5) return;
        if (f <= 0.0) {
            emit(std::size_t{0}, 1.0);
        } else if (f >= last) {
            emit(n - 1, 1.0);
        } else {
            const double fl = std::floor(f);
            const auto i0 = static_cast<std::size_t>(fl);
            const double a = f - fl;
            emit(i0, 1.0 - a);
            if (a > 0.0) emit(i0 + 1, a);
        }
    };
    if (std::abs(ray.dx) >= std::abs(ray.dy)) {
        const double step = ps / std::abs(ray.dx);
        const double slope = ray.dy / ray.dx;
        for (std::size_t c = 0; c < g.m2; ++c) {
            const double x = (static_cast<double>(c) - half_cols) * ps;
            const double y = ray.py + (x - ray.px) * slope;
            const double fr = half_rows - y / ps;
            interp(fr, g.m1, [&](std::size_t r, double w) { visit(r * g.m2 + c, w * step); });
        }
    } else {
        const double step = ps / std::abs(ray.dy);
        const double slope = ray.dx / ray.dy;
        for (std::size_t r = 0; r < g.m1; ++r) {
            const double y = (half_rows - static_cast<double>(r)) * ps;
            const double x = ray.px + (y - ray.py) * slope;
            const double fc = half_cols + x / ps;
            interp(fc, g.m2, [&](std::size_t c, double w) { visit(r * g.m2 + c, w * step); });
        }
    }
}

inline void check_image(const ScanGeometry& g, const Image& x, const char* who) {
    if (x.rows() != g.m1 || x.cols() != g.m2)
        throw ShapeError(std::string(who) + ": image is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                         ", geometry grid is " + std::to_string(g.m1) + "x" + std::to_string(g.m2));
}

inline void check_sinogram(const ScanGeometry& g, const ViewSubset& s, const Array2D& y, const char* who) {
    validate_subset(g, s);
    if (y.rows() != s.q1() || y.cols() != g.n_det)
        throw ShapeError(std::string(who) + ": sinogram is " + std::to_string(y.rows()) + "x" +
                         std::to_string(y.cols()) + ", expected " + std::to_string(s.q1()) + "x" +
                         std::to_string(g.n_det));
}

} // namespace detail

/// Ray-driven line integrals P x on the views of `subset`.
inline Array2D project(const Image& x, const ScanGeometry& g, const ViewSubset& subset) {
    detail::check_image(g, x, "forward_project");
    validate_subset(g, subset);
    Array2D y(subset.q1(), g.n_det);
    const double* px = x.data();
    for (std::size_t v = 0; v < subset.q1(); ++v) {
        const double angle = g.view_angles[subset.indices[v]];
        for (std::size_t d = 0; d < g.n_det; ++d) {
            double acc = 0.0;
            detail::trace_joseph(g, make_ray(g, angle, d), [&](std::size_t i, double w) { acc += w * px[i]; });
            y(v, d) = acc;
        }
    }
    return y;
}

inline Sinogram forward_project(const Image& x, const ScanGeometry& g, const ViewSubset& subset) {
    return {project(x, g, subset), subset};
}

/// Exact transpose of project(): scatters every ray value with its weights.
inline Image backproject_adjoint(const Array2D& y, const ScanGeometry& g, const ViewSubset& subset) {
    detail::check_sinogram(g, subset, y, "back_project");
    Image x(g.m1, g.m2);
    double* px = x.data();
    for (std::size_t v = 0; v < subset.q1(); ++v) {
        const double angle = g.view_angles[subset.indices[v]];
        for (std::size_t d = 0; d < g.n_det; ++d) {
            const double val = y(v, d);
            if (val == 0.0) continue;
            detail::trace_joseph(g, make_ray(g, angle, d), [&](std::size_t i, double w) { px[i] += w * val; });
        }
    }
    return x;
}

inline Image back_project(const Sinogram& y, const ScanGeometry& g) { return backproject_adjoint(y.values, g, y.subset); }

/// Explicit (q1*n_det) x (m1*m2) system matrix; column j is the projection
/// of the j-th unit-pixel image. Intended for tests on small grids.
inline Array2D dense_matrix_oracle(const ScanGeometry& g, const ViewSubset& subset) {
    if (g.pixels() > 4096) throw ArgumentError("dense_matrix_oracle: grid larger than 4096 pixels");
    validate_subset(g, subset);
    const std::size_t rows = subset.q1() * g.n_det;
    Array2D a(rows, g.pixels());
    Image unit(g.m1, g.m2);
    for (std::size_t j = 0; j < g.pixels(); ++j) {
        unit[j] = 1.0;
        const Array2D col = project(unit, g, subset);
        for (std::size_t i = 0; i < rows; ++i) a(i, j) = col[i];
        unit[j] = 0.0;
    }
    return a;
}

/// Keeps the rows of a full-view sinogram that belong to `subset`.
inline Array2D select_views(const Array2D& full, const ViewSubset& subset) {
    Array2D out(subset.q1(), full.cols());
    for (std::size_t v = 0; v < subset.q1(); ++v) {
        if (subset.indices[v] >= full.rows()) throw GeometryError("select_views: index out of range");
        const auto src = full.row(subset.indices[v]);
        std::copy(src.begin(), src.end(), out.row(v).begin());
    }
    return out;
}

/// Transpose of select_views(): zero rows for views outside the subset.
inline Array2D scatter_views(const Array2D& sparse, const ViewSubset& subset, std::size_t n_views) {
    Array2D out(n_views, sparse.cols());
    for (std::size_t v = 0; v < subset.q1(); ++v) {
        const auto src = sparse.row(v);
        std::copy(src.begin(), src.end(), out.row(subset.indices[v]).begin());
    }
    return out;
}

} // namespace mvms::tomo
