#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mvms/core/array2d.hpp"
#include "mvms/core/error.hpp"

namespace mvms::bench {

enum class PhantomKind { shepp_logan, random_ellipses, disk };

inline PhantomKind parse_phantom_kind(const std::string& s) {
    if (s == "shepp_logan" || s == "shepp-logan") return PhantomKind::shepp_logan;
    if (s == "random_ellipses" || s == "ellipses") return PhantomKind::random_ellipses;
    if (s == "disk") return PhantomKind::disk;
    throw ArgumentError("unknown phantom kind '" + s + "' (expected shepp_logan, random_ellipses, disk)");
}

/// Ellipse in normalised coordinates ([-1, 1] across the grid, y up).
struct Ellipse {
    double value;
    double a, b;   // semi-axes
    double x0, y0; // centre
    double phi;    // rotation, degrees
};

/// Modified Shepp-Logan table (higher contrast variant, values in [0, 1]).
inline const std::array<Ellipse, 10>& shepp_logan_ellipses() {
    static const std::array<Ellipse, 10> t{{
        {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
        {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
        {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
        {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
        {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
        {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
        {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
        {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
    }};
    return t;
}

/// Sums the ellipses at pixel centres and clamps to [0, 1].
inline Array2D rasterize(const std::vector<Ellipse>& es, std::size_t m1, std::size_t m2) {
    if (m1 == 0 || m2 == 0) throw ArgumentError("phantom: grid must be non-empty");
    Array2D img(m1, m2);
    const double h1 = 0.5 * static_cast<double>(m1 - 1), h2 = 0.5 * static_cast<double>(m2 - 1);
    for (const Ellipse& e : es) {
        const double rad = e.phi * std::numbers::pi / 180.0;
        const double c = std::cos(rad), s = std::sin(rad);
        for (std::size_t r = 0; r < m1; ++r) {
            const double y = (h1 - static_cast<double>(r)) / (0.5 * static_cast<double>(m1));
            for (std::size_t col = 0; col < m2; ++col) {
                const double x = (static_cast<double>(col) - h2) / (0.5 * static_cast<double>(m2));
                const double dx = x - e.x0, dy = y - e.y0;
                const double u = dx * c + dy * s, v = -dx * s + dy * c;
                if ((u * u) / (e.a * e.a) + (v * v) / (e.b * e.b) <= 1.0) img(r, col) += e.value;
            }
        }
    }
    for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
    return img;
}

struct PhantomSpec {
    PhantomKind kind = PhantomKind::shepp_logan;
    std::size_t m1 = 256;
    std::size_t m2 = 256;
    std::uint64_t seed = 0;
    double disk_radius = 0.5; // normalised
    std::size_t min_ellipses = 3;
    std::size_t max_ellipses = 8;
};

/// A body ellipse plus k interior ellipses of mixed sign.
inline std::vector<Ellipse> random_ellipse_set(const PhantomSpec& s) {
    if (s.min_ellipses > s.max_ellipses) throw ArgumentError("phantom: min_ellipses > max_ellipses");
    std::mt19937_64 rng(s.seed);
    const auto U = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    std::vector<Ellipse> es;
    es.push_back({U(0.35, 0.6), U(0.6, 0.85), U(0.6, 0.85), U(-0.05, 0.05), U(-0.05, 0.05), U(0.0, 180.0)});
    const std::size_t k = s.min_ellipses + static_cast<std::size_t>(rng() % (s.max_ellipses - s.min_ellipses + 1));
    for (std::size_t i = 0; i < k; ++i) {
        const double rho = 0.45 * std::sqrt(U(0.0, 1.0)), th = U(0.0, 2.0 * std::numbers::pi);
        es.push_back({U(-0.3, 0.45), U(0.04, 0.3), U(0.04, 0.3), rho * std::cos(th), rho * std::sin(th), U(0.0, 180.0)});
    }
    return es;
}

inline Array2D make_phantom(const PhantomSpec& s) {
    if (s.m1 == 0 || s.m2 == 0) throw ArgumentError("phantom: grid must be non-empty");
    switch (s.kind) {
    case PhantomKind::shepp_logan: {
        const auto& t = shepp_logan_ellipses();
        return rasterize({t.begin(), t.end()}, s.m1, s.m2);
    }
    case PhantomKind::random_ellipses: return rasterize(random_ellipse_set(s), s.m1, s.m2);
    case PhantomKind::disk: {
        if (!(s.disk_radius >= 0.0)) throw ArgumentError("phantom: disk radius must be >= 0");
        Array2D img(s.m1, s.m2);
        const double h1 = 0.5 * static_cast<double>(s.m1 - 1), h2 = 0.5 * static_cast<double>(s.m2 - 1);
        for (std::size_t r = 0; r < s.m1; ++r)
            for (std::size_t c = 0; c < s.m2; ++c) {
                const double y = (h1 - static_cast<double>(r)) / (0.5 * static_cast<double>(s.m1));
                const double x = (static_cast<double>(c) - h2) / (0.5 * static_cast<double>(s.m2));
                if (x * x + y * y < s.disk_radius * s.disk_radius) img(r, c) = 1.0;
            }
        return img;
    }
    }
    throw ArgumentError("phantom: unknown kind");
}

} // namespace mvms::bench
