#pragma once

#include <cmath>
#include <limits>

#include "mvms/core/array2d.hpp"
#include "mvms/train/loss.hpp"

namespace mvms::bench {

/// Affine map to Hounsfield units: slope (x - mu_water) / mu_water.
struct HuMapping {
    double mu_water = 0.2;
    double slope = 1000.0;

    double operator()(double x) const { return slope * (x - mu_water) / mu_water; }
};

struct MetricsRecord {
    double psnr = 0.0;
    double ssim = 0.0;
    double rmse_hu = 0.0;
};

inline double mse(const Array2D& x, const Array2D& ref) {
    x.check_same(ref, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - ref[i]) * (x[i] - ref[i]);
    return s / static_cast<double>(x.size());
}

/// 10 log10(range^2 / MSE); +infinity for identical inputs.
inline double psnr(const Array2D& x, const Array2D& ref, double range = 1.0) {
    if (!(range > 0.0)) throw ArgumentError("psnr: range must be > 0");
    const double e = mse(x, ref);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(range * range / e);
}

inline double rmse_hu(const Array2D& x, const Array2D& ref, const HuMapping& hu = {}) {
    x.check_same(ref, "rmse_hu");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = hu(x[i]) - hu(ref[i]);
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(x.size()));
}

inline double ssim(const Array2D& x, const Array2D& ref, double range = 1.0) {
    train::LossConfig cfg;
    cfg.range = range;
    return train::ssim_value(x, ref, cfg);
}

inline MetricsRecord evaluate(const Array2D& x, const Array2D& ref, double range = 1.0, const HuMapping& hu = {}) {
    return {psnr(x, ref, range), ssim(x, ref, range), rmse_hu(x, ref, hu)};
}

} // namespace mvms::bench
