#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mvms/core/error.hpp"

namespace mvms::tomo {

enum class Beam { parallel, fan };

inline std::string to_string(Beam b) { return b == Beam::parallel ? "parallel" : "fan"; }

/// User-facing geometry description, validated by make_geometry().
struct GeometryConfig {
    Beam beam = Beam::parallel;
    std::size_t n_views = 0;
    std::size_t n_det = 0;
    double det_spacing_mm = 1.0;
    double src_dist_mm = 0.0; // fan only
    double det_dist_mm = 0.0; // fan only
    std::size_t grid_m1 = 0;  // rows
    std::size_t grid_m2 = 0;  // columns
    double pixel_size_mm = 1.0;

    bool operator==(const GeometryConfig&) const = default;
};

/// Full acquisition: beam, all view angles, flat detector, image grid.
///
/// Coordinates: x to the right, y up, origin at the rotation centre.
/// Pixel (r, c) sits at x = (c - (m2-1)/2) * ps, y = ((m1-1)/2 - r) * ps.
/// Parallel view theta integrates along (-sin, cos) at detector offset t on
/// the (cos, sin) axis. Fan view beta puts the source at src*(cos, sin) and
/// the detector centre at -det*(cos, sin), with detector axis (-sin, cos).
struct ScanGeometry {
    Beam beam = Beam::parallel;
    std::vector<double> view_angles; // radians, all full views
    std::size_t n_det = 0;
    double det_spacing = 1.0;
    double src_dist = 0.0;
    double det_dist = 0.0;
    std::size_t m1 = 0;
    std::size_t m2 = 0;
    double pixel_size = 1.0;

    std::size_t n_views() const noexcept { return view_angles.size(); }
    std::size_t pixels() const noexcept { return m1 * m2; }
    /// Angular period of the scan: pi for parallel, 2 pi for fan.
    double angular_range() const noexcept {
        return beam == Beam::parallel ? std::numbers::pi : 2.0 * std::numbers::pi;
    }
    /// Radius of the circle circumscribing the image grid.
    double support_radius() const noexcept {
        return 0.5 * pixel_size * std::hypot(static_cast<double>(m1), static_cast<double>(m2));
    }
    GeometryConfig config() const {
        return {beam, n_views(), n_det, det_spacing, src_dist, det_dist, m1, m2, pixel_size};
    }

    bool operator==(const ScanGeometry&) const = default;
};

/// Sorted selection of full-view indices used by a sparse acquisition.
struct ViewSubset {
    std::vector<std::size_t> indices;

    std::size_t q1() const noexcept { return indices.size(); }
    bool operator==(const ViewSubset&) const = default;
};

namespace detail {

inline void validate(const ScanGeometry& g) {
    if (g.n_views() == 0) throw GeometryError("geometry: n_views must be >= 1");
    if (g.n_det == 0) throw GeometryError("geometry: n_det must be >= 1");
    if (g.m1 == 0 || g.m2 == 0) throw GeometryError("geometry: grid dimensions must be >= 1");
    if (!(g.det_spacing > 0.0)) throw GeometryError("geometry: det_spacing must be > 0");
    if (!(g.pixel_size > 0.0)) throw GeometryError("geometry: pixel_size must be > 0");
    const double radius = g.support_radius();
    const double half_span = 0.5 * static_cast<double>(g.n_det) * g.det_spacing;
    if (g.beam == Beam::parallel) {
        if (half_span < radius)
            throw GeometryError("geometry: detector span " + std::to_string(2 * half_span) +
                                " mm does not cover image support diameter " + std::to_string(2 * radius) + " mm");
        return;
    }
    if (!(g.src_dist > 0.0) || !(g.det_dist > 0.0))
        throw GeometryError("geometry: fan beam requires src_dist > 0 and det_dist > 0");
    if (g.src_dist <= radius) throw GeometryError("geometry: source lies inside the image support circle");
    // Distance from the rotation centre to the outermost ray of the fan.
    const double sdd = g.src_dist + g.det_dist;
    const double reach = g.src_dist * half_span / std::hypot(sdd, half_span);
    if (reach < radius)
        throw GeometryError("geometry: fan covers radius " + std::to_string(reach) +
                            " mm, image support needs " + std::to_string(radius) + " mm");
}

} // namespace detail

/// Builds uniformly spaced view angles (parallel over [0, pi), fan over
/// [0, 2 pi)) and validates detector coverage.
inline ScanGeometry make_geometry(const GeometryConfig& cfg) {
    ScanGeometry g;
    g.beam = cfg.beam;
    g.n_det = cfg.n_det;
    g.det_spacing = cfg.det_spacing_mm;
    g.src_dist = cfg.beam == Beam::fan ? cfg.src_dist_mm : 0.0;
    g.det_dist = cfg.beam == Beam::fan ? cfg.det_dist_mm : 0.0;
    g.m1 = cfg.grid_m1;
    g.m2 = cfg.grid_m2;
    g.pixel_size = cfg.pixel_size_mm;
    g.view_angles.resize(cfg.n_views);
    const double range = g.angular_range();
    for (std::size_t k = 0; k < cfg.n_views; ++k)
        g.view_angles[k] = range * static_cast<double>(k) / static_cast<double>(cfg.n_views);
    detail::validate(g);
    return g;
}

/// Named acquisition presets. "fan-1024": 1024 views over 360 degrees,
/// 1024 flat-detector cells 2 mm apart, source and detector 500 mm from
/// the centre, 512x512 grid. "parallel-720": 720 views, 729 detectors, 512x512.
inline GeometryConfig preset_config(const std::string& name) {
    GeometryConfig c;
    if (name == "fan-1024") {
        c.beam = Beam::fan;
        c.n_views = 1024;
        c.n_det = 1024;
        c.det_spacing_mm = 2.0;
        c.src_dist_mm = 500.0;
        c.det_dist_mm = 500.0;
        c.grid_m1 = c.grid_m2 = 512;
        c.pixel_size_mm = 500.0 / 512.0;
        return c;
    }
    if (name == "parallel-720") {
        c.beam = Beam::parallel;
        c.n_views = 720;
        c.n_det = 729;
        c.det_spacing_mm = 1.0;
        c.grid_m1 = c.grid_m2 = 512;
        c.pixel_size_mm = 1.0;
        return c;
    }
    throw GeometryError("unknown geometry preset '" + name + "'");
}

inline ScanGeometry preset(const std::string& name) { return make_geometry(preset_config(name)); }

/// Shrinks a configuration by an integer factor: grid and detector count are
/// divided (rounded up), pixel and detector spacing multiplied, so the field
/// of view and the number of views stay the same.
inline GeometryConfig scaled_config(GeometryConfig c, std::size_t factor) {
    if (factor == 0) throw ArgumentError("scaled_config: factor must be >= 1");
    const auto div_up = [factor](std::size_t v) { return (v + factor - 1) / factor; };
    c.grid_m1 = div_up(c.grid_m1);
    c.grid_m2 = div_up(c.grid_m2);
    c.n_det = div_up(c.n_det);
    c.pixel_size_mm *= static_cast<double>(factor);
    c.det_spacing_mm *= static_cast<double>(factor);
    return c;
}

/// Parses the line-oriented key=value geometry format. Blank lines and
/// '#' comments are ignored. A "preset=<name>" line seeds the defaults.
inline GeometryConfig parse_geometry_config(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("geometry config line " + std::to_string(lineno) + ": expected key=value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    GeometryConfig c;
    if (auto it = kv.find("preset"); it != kv.end()) {
        c = preset_config(it->second);
        kv.erase(it);
    }
    const auto as_size = [](const std::string& key, const std::string& v) -> std::size_t {
        try {
            std::size_t pos = 0;
            const long long x = std::stoll(v, &pos);
            if (pos != v.size() || x < 0) throw std::invalid_argument(v);
            return static_cast<std::size_t>(x);
        } catch (const std::exception&) {
            throw FormatError("geometry config: '" + key + "' expects a non-negative integer, got '" + v + "'");
        }
    };
    const auto as_double = [](const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            const double x = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw FormatError("geometry config: '" + key + "' expects a number, got '" + v + "'");
        }
    };
    for (const auto& [key, value] : kv) {
        if (key == "beam") {
            if (value == "parallel") c.beam = Beam::parallel;
            else if (value == "fan") c.beam = Beam::fan;
            else throw FormatError("geometry config: beam must be 'parallel' or 'fan'");
        } else if (key == "n_views") c.n_views = as_size(key, value);
        else if (key == "n_det") c.n_det = as_size(key, value);
        else if (key == "det_spacing_mm") c.det_spacing_mm = as_double(key, value);
        else if (key == "src_dist_mm") c.src_dist_mm = as_double(key, value);
        else if (key == "det_dist_mm") c.det_dist_mm = as_double(key, value);
        else if (key == "grid_m1") c.grid_m1 = as_size(key, value);
        else if (key == "grid_m2") c.grid_m2 = as_size(key, value);
        else if (key == "pixel_size_mm") c.pixel_size_mm = as_double(key, value);
        else throw FormatError("geometry config: unknown key '" + key + "'");
    }
    return c;
}

inline GeometryConfig parse_geometry_config(const std::string& text) {
    std::istringstream in(text);
    return parse_geometry_config(in);
}

inline std::string format_geometry_config(const GeometryConfig& c) {
    std::ostringstream out;
    out.precision(17);
    out << "beam=" << to_string(c.beam) << "\n"
        << "n_views=" << c.n_views << "\n"
        << "n_det=" << c.n_det << "\n"
        << "det_spacing_mm=" << c.det_spacing_mm << "\n";
    if (c.beam == Beam::fan) out << "src_dist_mm=" << c.src_dist_mm << "\n" << "det_dist_mm=" << c.det_dist_mm << "\n";
    out << "grid_m1=" << c.grid_m1 << "\n"
        << "grid_m2=" << c.grid_m2 << "\n"
        << "pixel_size_mm=" << c.pixel_size_mm << "\n";
    return out.str();
}

/// Resolves "name" or "name@k" (preset scaled by k) or a path to a config file.
inline ScanGeometry load_geometry(const std::string& spec) {
    const auto at = spec.find('@');
    const std::string base = spec.substr(0, at);
    if (base == "fan-1024" || base == "parallel-720") {
        GeometryConfig c = preset_config(base);
        if (at != std::string::npos) {
            std::size_t factor = 0;
            try {
                factor = static_cast<std::size_t>(std::stoul(spec.substr(at + 1)));
            } catch (const std::exception&) {
                throw GeometryError("bad preset scale in '" + spec + "'");
            }
            c = scaled_config(c, factor);
        }
        return make_geometry(c);
    }
    std::ifstream in(spec);
    if (!in) throw GeometryError("geometry '" + spec + "' is neither a preset nor a readable config file");
    return make_geometry(parse_geometry_config(in));
}

/// Every full view, in order.
inline ViewSubset full_subset(const ScanGeometry& g) {
    ViewSubset s;
    s.indices.resize(g.n_views());
    for (std::size_t k = 0; k < g.n_views(); ++k) s.indices[k] = k;
    return s;
}

/// Evenly decimated views: indices[k] = floor(k * n_views / q1).
inline ViewSubset sparse_subset(const ScanGeometry& g, std::size_t q1) {
    const std::size_t n = g.n_views();
    if (q1 < 1 || q1 > n)
        throw GeometryError("sparse_subset: q1=" + std::to_string(q1) + " outside [1, " + std::to_string(n) + "]");
    ViewSubset s;
    s.indices.resize(q1);
    for (std::size_t k = 0; k < q1; ++k) s.indices[k] = k * n / q1;
    return s;
}

inline void validate_subset(const ScanGeometry& g, const ViewSubset& s) {
    if (s.indices.empty()) throw GeometryError("view subset is empty");
    for (std::size_t k = 0; k < s.indices.size(); ++k) {
        if (s.indices[k] >= g.n_views()) throw GeometryError("view subset index out of range");
        if (k > 0 && s.indices[k] <= s.indices[k - 1])
            throw GeometryError("view subset indices must be strictly increasing");
    }
}

/// Scales the fan source and detector distances by independent factors drawn
/// uniformly from [1 - rel, 1 + rel]. Deterministic for a given seed.
inline ScanGeometry perturb_geometry(const ScanGeometry& g, double rel, std::uint64_t seed) {
    if (g.beam != Beam::fan) throw GeometryError("perturb_geometry: parallel geometry has no distances to perturb");
    if (!(std::abs(rel) <= 0.05)) throw ArgumentError("perturb_geometry: |rel| must be <= 0.05");
    std::mt19937_64 rng(seed);
    const auto factor = [&] {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53; // [0, 1)
        return 1.0 - rel + 2.0 * rel * u;
    };
    ScanGeometry out = g;
    if (rel == 0.0) return out;
    out.src_dist = g.src_dist * factor();
    out.det_dist = g.det_dist * factor();
    detail::validate(out);
    return out;
}

} // namespace mvms::tomo
