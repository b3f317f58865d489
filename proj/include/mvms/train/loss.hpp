#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "mvms/diff/ops.hpp"
#include "mvms/refine/refine.hpp"

namespace mvms::train {

using diff::Shape;
using diff::Tensor;
using diff::Var;

/// Loss weight gamma and SSIM parameters (Gaussian window, K1, K2, range L).
struct LossConfig {
    double gamma = 1.0;
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double range = 1.0;
};

inline void validate(const LossConfig& c) {
    if (!(c.gamma >= 0.0) || !std::isfinite(c.gamma)) throw ArgumentError("loss: gamma must be finite and >= 0");
    if (!(c.range > 0.0)) throw ArgumentError("ssim: dynamic range L must be > 0");
    if (c.window < 1 || c.window % 2 == 0) throw ArgumentError("ssim: window size must be odd");
    if (!(c.sigma > 0.0)) throw ArgumentError("ssim: sigma must be > 0");
}

namespace detail {

/// Row-stochastic 1D filter matrix for n samples: the Gaussian window
/// truncated to in-range taps and renormalised.
inline std::vector<double> window_matrix(std::size_t n, std::size_t size, double sigma) {
    const long half = static_cast<long>(size / 2);
    std::vector<double> a(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (long k = -half; k <= half; ++k) {
            const long j = static_cast<long>(i) + k;
            if (j < 0 || j >= static_cast<long>(n)) continue;
            const double w = std::exp(-static_cast<double>(k * k) / (2.0 * sigma * sigma));
            a[i * n + static_cast<std::size_t>(j)] = w;
            total += w;
        }
        for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= total;
    }
    return a;
}

/// Separable filtering of every channel: rows with `ah`, columns with `aw`,
/// or with their transposes.
inline Tensor separable(const Tensor& x, const std::vector<double>& ah, const std::vector<double>& aw, bool transpose) {
    const std::size_t C = x.channels(), H = x.height(), W = x.width();
    Tensor tmp(x.shape()), out(x.shape());
    const auto coef = [transpose](const std::vector<double>& a, std::size_t n, std::size_t i, std::size_t j) {
        return transpose ? a[j * n + i] : a[i * n + j];
    };
    for (std::size_t c = 0; c < C; ++c) {
        const double* in = x.data() + c * H * W;
        double* t = tmp.data() + c * H * W;
        double* o = out.data() + c * H * W;
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t i = 0; i < W; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < W; ++j) s += coef(aw, W, i, j) * in[r * W + j];
                t[r * W + i] = s;
            }
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t col = 0; col < W; ++col) {
                double s = 0.0;
                for (std::size_t j = 0; j < H; ++j) s += coef(ah, H, i, j) * t[j * W + col];
                o[i * W + col] = s;
            }
    }
    return out;
}

} // namespace detail

/// Gaussian local-mean operator for feature maps of the given shape.
inline diff::LinearMapPtr gaussian_window(const Shape& shape, const LossConfig& cfg) {
    if (shape.size() != 3) throw ShapeError("gaussian_window: expected C x H x W, got " + diff::shape_string(shape));
    auto ah = std::make_shared<std::vector<double>>(detail::window_matrix(shape[1], cfg.window, cfg.sigma));
    auto aw = std::make_shared<std::vector<double>>(detail::window_matrix(shape[2], cfg.window, cfg.sigma));
    return std::make_shared<diff::LinearMap>(diff::LinearMap{
        "gauss", shape, shape, [ah, aw](const Tensor& x) { return detail::separable(x, *ah, *aw, false); },
        [ah, aw](const Tensor& g) { return detail::separable(g, *ah, *aw, true); }});
}

namespace detail {

inline void check_pair(const Var& x, const Var& y, const char* who) {
    if (x.shape() != y.shape())
        throw ShapeError(std::string(who) + ": shapes " + diff::shape_string(x.shape()) + " and " + diff::shape_string(y.shape()) +
                         " differ");
}

} // namespace detail

/// Mean absolute error; subgradient 0 at ties.
inline Var l1_loss(const Var& x, const Var& target) {
    detail::check_pair(x, target, "l1_loss");
    return diff::mean(diff::abs(diff::sub(x, target)));
}

/// Mean local SSIM over Gaussian windows.
inline Var ssim(const Var& x, const Var& y, const LossConfig& cfg = {}) {
    detail::check_pair(x, y, "ssim");
    validate(cfg);
    if (x.value().rank() != 3) throw ShapeError("ssim: expected C x H x W images");
    const auto G = gaussian_window(x.shape(), cfg);
    const double c1 = (cfg.k1 * cfg.range) * (cfg.k1 * cfg.range);
    const double c2 = (cfg.k2 * cfg.range) * (cfg.k2 * cfg.range);
    using namespace diff;
    const Var mx = linear_op(x, G), my = linear_op(y, G);
    const Var mxx = mul(mx, mx), myy = mul(my, my), mxy = mul(mx, my);
    const Var sxx = sub(linear_op(mul(x, x), G), mxx);
    const Var syy = sub(linear_op(mul(y, y), G), myy);
    const Var sxy = sub(linear_op(mul(x, y), G), mxy);
    const Var num = mul(add_scalar(scale(mxy, 2.0), c1), add_scalar(scale(sxy, 2.0), c2));
    const Var den = mul(add_scalar(add(mxx, myy), c1), add_scalar(add(sxx, syy), c2));
    return mean(div(num, den));
}

struct LossTerms {
    Var total;
    Var l1;
    Var ssim_term; // 1 - SSIM, or an invalid Var when gamma = 0
};

inline LossTerms loss_terms(const Var& x, const Var& target, const LossConfig& cfg = {}) {
    validate(cfg);
    const Var l1 = l1_loss(x, target);
    if (cfg.gamma == 0.0) return {l1, l1, Var{}};
    const Var st = diff::add_scalar(diff::scale(ssim(x, target, cfg), -1.0), 1.0);
    return {diff::add(l1, diff::scale(st, cfg.gamma)), l1, st};
}

/// l1 + gamma (1 - SSIM).
inline Var total_loss(const Var& x, const Var& target, const LossConfig& cfg = {}) { return loss_terms(x, target, cfg).total; }

/// Ground-truth-free loss comparing P_s^T P_s x with P_s^T y_s.
inline LossTerms unsupervised_terms(const Var& x_out, const refine::StageContext& ctx, const LossConfig& cfg = {}) {
    if (x_out.shape() != ctx.image_shape())
        throw ShapeError("unsupervised_loss: image " + diff::shape_string(x_out.shape()) + " does not match the geometry grid " +
                         diff::shape_string(ctx.image_shape()));
    const auto& ops = ctx.ops();
    const Var a = diff::linear_op(diff::linear_op(x_out, ops.project_sparse), ops.fbp_sparse);
    return loss_terms(a, x_out.tape().constant(ctx.x0()), cfg);
}

inline Var unsupervised_loss(const Var& x_out, const refine::StageContext& ctx, const LossConfig& cfg = {}) {
    return unsupervised_terms(x_out, ctx, cfg).total;
}

/// SSIM of two images without a persistent tape.
inline double ssim_value(const Array2D& a, const Array2D& b, const LossConfig& cfg = {}) {
    diff::Tape t;
    return ssim(t.constant(Tensor::from_image(a)), t.constant(Tensor::from_image(b)), cfg).value().item();
}

} // namespace mvms::train
