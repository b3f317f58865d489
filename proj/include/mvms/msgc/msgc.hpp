#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mvms/diff/ops.hpp"

namespace mvms::msgc {

using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;

/// Width p, depth n, input channels c_in, LeakyReLU slope.
struct MsgcConfig {
    std::size_t p = 32;
    std::size_t n = 5;
    std::size_t c_in = 8;
    double slope = 0.01;

    bool operator==(const MsgcConfig&) const = default;
};

inline void validate(const MsgcConfig& c) {
    if (c.p < 1) throw ArgumentError("msgc: width p must be >= 1");
    if (c.n < 1) throw ArgumentError("msgc: depth n must be >= 1");
    if (c.c_in < 1 || c.c_in > 8) throw ArgumentError("msgc: c_in must be in 1..8");
    if (!(c.slope >= 0.0 && c.slope < 1.0)) throw ArgumentError("msgc: leaky slope must be in [0, 1)");
}

template <class T>
struct Conv {
    T weight;
    T bias;
};

/// One multigrid level i (1-based in the recursion): pre-smoother G_i,
/// post-smoother G~_i, restriction S_i, prolongation S~_i.
template <class T>
struct Level {
    std::array<Conv<T>, 2> smooth;
    std::array<Conv<T>, 2> merge;
    Conv<T> restrict;
    Conv<T> prolong;
};

/// Parameter set of the correction module: head C_m, levels 1..n, the
/// coarsest block G_{n+1}, tail C_a. T is Tensor (storage) or Var (bound to a tape).
template <class T>
struct MsgcWeights {
    Conv<T> head;
    std::vector<Level<T>> levels;
    std::array<Conv<T>, 2> bottom;
    Conv<T> tail;
};

/// Visits every tensor in a fixed order with a stable dotted name.
template <class T, class F>
void for_each_param(MsgcWeights<T>& w, F&& f) {
    const auto conv = [&](const std::string& name, Conv<T>& c) {
        f(name + ".weight", c.weight);
        f(name + ".bias", c.bias);
    };
    conv("head", w.head);
    for (std::size_t i = 0; i < w.levels.size(); ++i) {
        Level<T>& l = w.levels[i];
        const std::string base = "levels." + std::to_string(i + 1);
        conv(base + ".smooth.0", l.smooth[0]);
        conv(base + ".smooth.1", l.smooth[1]);
        conv(base + ".merge.0", l.merge[0]);
        conv(base + ".merge.1", l.merge[1]);
        conv(base + ".restrict", l.restrict);
        conv(base + ".prolong", l.prolong);
    }
    conv("bottom.0", w.bottom[0]);
    conv("bottom.1", w.bottom[1]);
    conv("tail", w.tail);
}

template <class T, class F>
void for_each_param(const MsgcWeights<T>& w, F&& f) {
    for_each_param(const_cast<MsgcWeights<T>&>(w), [&](const std::string& name, T& t) { f(name, static_cast<const T&>(t)); });
}

template <class U, class T, class F>
MsgcWeights<U> transform(const MsgcWeights<T>& w, F&& f) {
    const auto conv = [&](const Conv<T>& c) { return Conv<U>{f(c.weight), f(c.bias)}; };
    MsgcWeights<U> out;
    out.head = conv(w.head);
    for (const Level<T>& l : w.levels)
        out.levels.push_back(Level<U>{{conv(l.smooth[0]), conv(l.smooth[1])}, {conv(l.merge[0]), conv(l.merge[1])},
                                      conv(l.restrict), conv(l.prolong)});
    out.bottom = {conv(w.bottom[0]), conv(w.bottom[1])};
    out.tail = conv(w.tail);
    return out;
}

/// Shape-only skeleton (all zeros).
inline MsgcWeights<Tensor> zero_weights(const MsgcConfig& c) {
    validate(c);
    const std::size_t p = c.p;
    const auto conv = [](std::size_t out, std::size_t in, std::size_t k) { return Conv<Tensor>{Tensor({out, in, k, k}), Tensor({out})}; };
    MsgcWeights<Tensor> w;
    w.head = conv(p, c.c_in, 3);
    for (std::size_t i = 0; i < c.n; ++i) {
        Level<Tensor> l;
        l.smooth = {conv(p, p, 3), conv(p, p, 3)};
        l.merge = {conv(p, 2 * p, 3), conv(p, p, 3)};
        l.restrict = conv(p, p, 2);
        // Transposed layout (C_in, C_out, 2, 2).
        l.prolong = conv(p, p, 2);
        w.levels.push_back(std::move(l));
    }
    w.bottom = {conv(p, p, 3), conv(p, p, 3)};
    w.tail = conv(1, p, 3);
    return w;
}

/// Closed-form parameter count.
inline std::size_t param_count(std::size_t p, std::size_t n, std::size_t c_in) {
    return n * (53 * p * p + 6 * p) + (18 * p * p + 2 * p) + (9 * c_in * p + p) + (9 * p + 1);
}

inline std::size_t param_count(const MsgcWeights<Tensor>& w) {
    std::size_t total = 0;
    for_each_param(w, [&](const std::string&, const Tensor& t) { total += t.size(); });
    return total;
}

struct MsgcParams {
    MsgcConfig config;
    MsgcWeights<Tensor> weights;

    std::size_t count() const { return param_count(weights); }
    bool operator==(const MsgcParams& o) const {
        if (!(config == o.config)) return false;
        std::vector<const Tensor*> a, b;
        for_each_param(weights, [&](const std::string&, const Tensor& t) { a.push_back(&t); });
        for_each_param(o.weights, [&](const std::string&, const Tensor& t) { b.push_back(&t); });
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (!(*a[i] == *b[i])) return false;
        return true;
    }
};

/// Kaiming (He) fan-in normal initialisation with the LeakyReLU gain
/// sqrt(2 / (1 + slope^2)); fan_in = dim(1) * kh * kw. Biases are zero.
inline MsgcParams init_params(const MsgcConfig& c, std::uint64_t seed) {
    MsgcParams out{c, zero_weights(c)};
    std::mt19937_64 rng(seed);
    const double gain = std::sqrt(2.0 / (1.0 + c.slope * c.slope));
    for_each_param(out.weights, [&](const std::string&, Tensor& t) {
        if (t.rank() != 4) return;
        const double fan_in = static_cast<double>(t.dim(1) * t.dim(2) * t.dim(3));
        std::normal_distribution<double> normal(0.0, gain / std::sqrt(fan_in));
        for (auto& v : t.values()) v = normal(rng);
    });
    return out;
}

inline MsgcWeights<Var> bind(Tape& tape, const MsgcWeights<Tensor>& w, bool requires_grad = true) {
    return transform<Var>(w, [&](const Tensor& t) { return tape.leaf(t, requires_grad); });
}

namespace detail {

inline Var conv_act(const Var& x, const Conv<Var>& c, double slope) {
    return diff::leaky_relu(diff::conv3x3(x, c.weight, c.bias), slope);
}

inline Var smoother(const Var& x, const std::array<Conv<Var>, 2>& cs, double slope) {
    return conv_act(conv_act(x, cs[0], slope), cs[1], slope);
}

} // namespace detail

/// Recursive multi-scale correction block N_i for i in [0, n]. For i < n:
/// g = G_{i+1}(z); c = S_{i+1}(g); c = c + N_{i+1}(c); u = S~_{i+1}(c);
/// N_i(z) = G~_{i+1}(concat(g, u)). N_n = G_{n+1}. Odd sizes are replicate
/// padded before restriction and cropped after prolongation.
inline Var apply_block_N(std::size_t i, const Var& z, const MsgcWeights<Var>& w, double slope) {
    const std::size_t n = w.levels.size();
    if (i > n) throw ArgumentError("apply_block_N: level " + std::to_string(i) + " exceeds depth " + std::to_string(n));
    const std::size_t p = w.bottom[0].weight.value().dim(0);
    if (z.value().rank() != 3 || z.value().channels() != p)
        throw ShapeError("apply_block_N: expected " + std::to_string(p) + " channels, got " + diff::shape_string(z.shape()));
    if (i == n) return detail::smoother(z, w.bottom, slope);
    const Level<Var>& l = w.levels[i];
    const std::size_t h = z.value().height(), wd = z.value().width();
    const Var g = detail::smoother(z, l.smooth, slope);
    Var c = diff::conv2x2_down(diff::pad_to_even(g), l.restrict.weight, l.restrict.bias);
    c = diff::add(c, apply_block_N(i + 1, c, w, slope));
    const Var u = diff::crop(diff::tconv2x2_up(c, l.prolong.weight, l.prolong.bias), h, wd);
    return detail::smoother(diff::concat_channels({g, u}), l.merge, slope);
}

/// x = C_a((I + N_0)(C_m(r))) for a c_in x H x W stack r.
inline Var apply_D(const Var& r, const MsgcWeights<Var>& w, double slope) {
    const std::size_t c_in = w.head.weight.value().dim(1);
    if (r.value().rank() != 3 || r.value().channels() != c_in)
        throw ShapeError("apply_D: stack has shape " + diff::shape_string(r.shape()) + ", expected " + std::to_string(c_in) +
                         " channels");
    const Var m = detail::conv_act(r, w.head, slope);
    return detail::conv_act(diff::add(m, apply_block_N(0, m, w, slope)), w.tail, slope);
}

/// Inference without recording gradients.
inline Tensor apply_D_values(const Tensor& r, const MsgcParams& params) {
    Tape t;
    const MsgcWeights<Var> w = bind(t, params.weights, false);
    return apply_D(t.constant(r), w, params.config.slope).value();
}

} // namespace mvms::msgc
