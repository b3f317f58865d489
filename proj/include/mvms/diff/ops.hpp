#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mvms/diff/tape.hpp"
#include "mvms/diff/tensor.hpp"

namespace mvms::diff {

namespace detail {

inline void check_same(const Var& a, const Var& b, const char* who) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(who) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

inline void check_feature(const Tensor& t, const char* who) {
    if (t.rank() != 3) throw ShapeError(std::string(who) + ": expected a CxHxW tensor, got " + shape_string(t.shape()));
}

inline void accumulate(Tape& t, const Var& v, const Tensor& g) {
    if (t.requires_grad(v.id())) t.grad_accumulator(v.id()).add_(g);
}

template <class F>
void accumulate_with(Tape& t, const Var& v, F&& f) {
    if (t.requires_grad(v.id())) f(t.grad_accumulator(v.id()));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Var add(const Var& a, const Var& b) {
    detail::check_same(a, b, "add");
    Tensor out = a.value();
    out.add_(b.value());
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        detail::accumulate(t, a, g);
        detail::accumulate(t, b, g);
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::check_same(a, b, "sub");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        detail::accumulate(t, a, g);
        detail::accumulate_with(t, b, [&](Tensor& gb) {
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        });
    });
}

inline Var mul(const Var& a, const Var& b) {
    detail::check_same(a, b, "mul");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& av = t.value(a.id());
        const Tensor& bv = t.value(b.id());
        detail::accumulate_with(t, a, [&](Tensor& ga) {
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        });
        detail::accumulate_with(t, b, [&](Tensor& gb) {
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        });
    });
}

inline Var div(const Var& a, const Var& b) {
    detail::check_same(a, b, "div");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& q = t.value(self);
        const Tensor& bv = t.value(b.id());
        detail::accumulate_with(t, a, [&](Tensor& ga) {
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
        });
        detail::accumulate_with(t, b, [&](Tensor& gb) {
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * q[i] / bv[i];
        });
    });
}

inline Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (auto& v : out.values()) v *= s;
    return a.tape().record(std::move(out), {a}, [a, s](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        detail::accumulate_with(t, a, [&](Tensor& ga) {
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
        });
    });
}

inline Var add_scalar(const Var& a, double s) {
    Tensor out = a.value();
    for (auto& v : out.values()) v += s;
    return a.tape().record(std::move(out), {a}, [a](Tape& t, std::size_t self) { detail::accumulate(t, a, t.grad(self)); });
}

/// |a| with subgradient 0 at 0.
inline Var abs(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.values()) v = std::abs(v);
    return a.tape().record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& av = t.value(a.id());
        detail::accumulate_with(t, a, [&](Tensor& ga) {
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += av[i] > 0.0 ? g[i] : (av[i] < 0.0 ? -g[i] : 0.0);
        });
    });
}

inline Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    return a.tape().record(Tensor::scalar(s), {a}, [a](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        detail::accumulate_with(t, a, [&](Tensor& ga) {
            for (auto& v : ga.values()) v += g;
        });
    });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// max(x, slope * x); the subgradient at 0 takes the positive branch.
inline Var leaky_relu(const Var& a, double slope) {
    Tensor out = a.value();
    for (auto& v : out.values()) v = v >= 0.0 ? v : slope * v;
    return a.tape().record(std::move(out), {a}, [a, slope](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& av = t.value(a.id());
        detail::accumulate_with(t, a, [&](Tensor& ga) {
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += av[i] >= 0.0 ? g[i] : slope * g[i];
        });
    });
}

// ---------------------------------------------------------------------------
// Channel and spatial plumbing

/// Stacks CxHxW tensors along the channel axis in argument order.
inline Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: no inputs");
    detail::check_feature(xs[0].value(), "concat_channels");
    const std::size_t h = xs[0].value().height();
    const std::size_t w = xs[0].value().width();
    std::size_t c = 0;
    for (const Var& x : xs) {
        detail::check_feature(x.value(), "concat_channels");
        if (x.value().height() != h || x.value().width() != w)
            throw ShapeError("concat_channels: spatial size mismatch " + shape_string(xs[0].shape()) + " vs " +
                             shape_string(x.shape()));
        c += x.value().channels();
    }
    Tensor out(Shape{c, h, w});
    std::size_t offset = 0;
    for (const Var& x : xs) {
        std::copy(x.value().values().begin(), x.value().values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(offset));
        offset += x.value().size();
    }
    return xs[0].tape().record(std::move(out), xs, [xs](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t off = 0;
        for (const Var& x : xs) {
            const std::size_t n = t.value(x.id()).size();
            detail::accumulate_with(t, x, [&](Tensor& gx) {
                for (std::size_t i = 0; i < n; ++i) gx[i] += g[off + i];
            });
            off += n;
        }
    });
}

/// Replicates the last row/column so H and W become even. Returns x itself
/// when both are already even.
inline Var pad_to_even(const Var& x) {
    const Tensor& v = x.value();
    detail::check_feature(v, "pad_to_even");
    const std::size_t c = v.channels(), h = v.height(), w = v.width();
    const std::size_t h2 = h + (h % 2), w2 = w + (w % 2);
    if (h2 == h && w2 == w) return x;
    Tensor out(Shape{c, h2, w2});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t r = 0; r < h2; ++r)
            for (std::size_t col = 0; col < w2; ++col)
                out[(ch * h2 + r) * w2 + col] = v[(ch * h + std::min(r, h - 1)) * w + std::min(col, w - 1)];
    return x.tape().record(std::move(out), {x}, [x, c, h, w, h2, w2](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        detail::accumulate_with(t, x, [&](Tensor& gx) {
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t r = 0; r < h2; ++r)
                    for (std::size_t col = 0; col < w2; ++col)
                        gx[(ch * h + std::min(r, h - 1)) * w + std::min(col, w - 1)] += g[(ch * h2 + r) * w2 + col];
        });
    });
}

/// Keeps the top-left h x w window.
inline Var crop(const Var& x, std::size_t h, std::size_t w) {
    const Tensor& v = x.value();
    detail::check_feature(v, "crop");
    const std::size_t c = v.channels(), H = v.height(), W = v.width();
    if (h > H || w > W) throw ShapeError("crop: window larger than input");
    if (h == H && w == W) return x;
    Tensor out(Shape{c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t col = 0; col < w; ++col) out[(ch * h + r) * w + col] = v[(ch * H + r) * W + col];
    return x.tape().record(std::move(out), {x}, [x, c, h, w, H, W](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        detail::accumulate_with(t, x, [&](Tensor& gx) {
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t r = 0; r < h; ++r)
                    for (std::size_t col = 0; col < w; ++col) gx[(ch * H + r) * W + col] += g[(ch * h + r) * w + col];
        });
    });
}

// ---------------------------------------------------------------------------
// Convolutions

namespace detail {

inline void check_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t k, const char* who, bool transposed) {
    check_feature(x, who);
    if (w.rank() != 4 || w.dim(2) != k || w.dim(3) != k)
        throw ShapeError(std::string(who) + ": kernel must be rank 4 with " + std::to_string(k) + "x" +
                         std::to_string(k) + " taps, got " + shape_string(w.shape()));
    const std::size_t in_ch = transposed ? w.dim(0) : w.dim(1);
    const std::size_t out_ch = transposed ? w.dim(1) : w.dim(0);
    if (x.channels() != in_ch)
        throw ShapeError(std::string(who) + ": input has " + std::to_string(x.channels()) + " channels, kernel expects " +
                         std::to_string(in_ch));
    if (b.rank() != 1 || b.dim(0) != out_ch) throw ShapeError(std::string(who) + ": bias length must equal output channels");
}

} // namespace detail

/// 3x3 convolution, stride 1, zero padding 1. Kernel (C_out, C_in, 3, 3).
inline Var conv3x3(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    detail::check_conv(xv, wv, bv, 3, "conv3x3", false);
    const std::size_t ci = xv.channels(), H = xv.height(), W = xv.width(), co = wv.dim(0);
    const std::size_t plane = H * W;
    Tensor out(Shape{co, H, W});
    for (std::size_t o = 0; o < co; ++o) {
        double* op = out.data() + o * plane;
        std::fill(op, op + plane, bv[o]);
        for (std::size_t i = 0; i < ci; ++i) {
            const double* ip = xv.data() + i * plane;
            for (int ky = 0; ky < 3; ++ky) {
                const int dy = ky - 1;
                for (int kx = 0; kx < 3; ++kx) {
                    const int dx = kx - 1;
                    const double k = wv[((o * ci + i) * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)];
                    if (k == 0.0) continue;
                    const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? H - 1 : H;
                    const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? W - 1 : W;
                    for (std::size_t y = y0; y < y1; ++y) {
                        double* orow = op + y * W;
                        const double* irow = ip + static_cast<std::ptrdiff_t>(y * W) + dy * static_cast<std::ptrdiff_t>(W) + dx;
                        for (std::size_t xx = x0; xx < x1; ++xx) orow[xx] += k * irow[xx];
                    }
                }
            }
        }
    }
    return x.tape().record(std::move(out), {x, w, b}, [x, w, b, ci, co, H, W](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.value(x.id());
        const Tensor& wv = t.value(w.id());
        const std::size_t plane = H * W;
        const bool need_x = t.requires_grad(x.id());
        const bool need_w = t.requires_grad(w.id());
        Tensor* gx = need_x ? &t.grad_accumulator(x.id()) : nullptr;
        Tensor* gw = need_w ? &t.grad_accumulator(w.id()) : nullptr;
        for (std::size_t o = 0; o < co; ++o) {
            const double* gp = g.data() + o * plane;
            for (std::size_t i = 0; i < ci; ++i) {
                const double* ip = xv.data() + i * plane;
                for (int ky = 0; ky < 3; ++ky) {
                    const int dy = ky - 1;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int dx = kx - 1;
                        const std::size_t widx = ((o * ci + i) * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx);
                        const double k = wv[widx];
                        const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? H - 1 : H;
                        const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? W - 1 : W;
                        double acc = 0.0;
                        for (std::size_t y = y0; y < y1; ++y) {
                            const double* grow = gp + y * W;
                            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(y * W) + dy * static_cast<std::ptrdiff_t>(W) + dx;
                            const double* irow = ip + off;
                            if (gw)
                                for (std::size_t xx = x0; xx < x1; ++xx) acc += grow[xx] * irow[xx];
                            if (gx && k != 0.0) {
                                double* gxrow = gx->data() + static_cast<std::ptrdiff_t>(i * plane) + off;
                                for (std::size_t xx = x0; xx < x1; ++xx) gxrow[xx] += k * grow[xx];
                            }
                        }
                        if (gw) (*gw)[widx] += acc;
                    }
                }
            }
        }
        detail::accumulate_with(t, b, [&](Tensor& gb) {
            for (std::size_t o = 0; o < co; ++o) {
                double s = 0.0;
                const double* gp = g.data() + o * plane;
                for (std::size_t p = 0; p < plane; ++p) s += gp[p];
                gb[o] += s;
            }
        });
    });
}

/// 2x2 convolution with stride 2 (restriction). Kernel (C_out, C_in, 2, 2);
/// H and W must be even.
inline Var conv2x2_down(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    detail::check_conv(xv, wv, bv, 2, "conv2x2_down", false);
    const std::size_t ci = xv.channels(), H = xv.height(), W = xv.width(), co = wv.dim(0);
    if (H % 2 || W % 2) throw ShapeError("conv2x2_down: spatial size must be even, got " + shape_string(xv.shape()));
    const std::size_t h = H / 2, ww = W / 2;
    Tensor out(Shape{co, h, ww});
    for (std::size_t o = 0; o < co; ++o) {
        double* op = out.data() + o * h * ww;
        std::fill(op, op + h * ww, bv[o]);
        for (std::size_t i = 0; i < ci; ++i) {
            const double* ip = xv.data() + i * H * W;
            const double* k = wv.data() + (o * ci + i) * 4;
            for (std::size_t y = 0; y < h; ++y) {
                const double* r0 = ip + (2 * y) * W;
                const double* r1 = r0 + W;
                for (std::size_t xx = 0; xx < ww; ++xx)
                    op[y * ww + xx] += k[0] * r0[2 * xx] + k[1] * r0[2 * xx + 1] + k[2] * r1[2 * xx] + k[3] * r1[2 * xx + 1];
            }
        }
    }
    return x.tape().record(std::move(out), {x, w, b}, [x, w, b, ci, co, H, W](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.value(x.id());
        const Tensor& wv = t.value(w.id());
        const std::size_t h = H / 2, ww = W / 2;
        Tensor* gx = t.requires_grad(x.id()) ? &t.grad_accumulator(x.id()) : nullptr;
        Tensor* gw = t.requires_grad(w.id()) ? &t.grad_accumulator(w.id()) : nullptr;
        for (std::size_t o = 0; o < co; ++o) {
            const double* gp = g.data() + o * h * ww;
            for (std::size_t i = 0; i < ci; ++i) {
                const std::size_t base = i * H * W;
                const double* k = wv.data() + (o * ci + i) * 4;
                double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
                for (std::size_t y = 0; y < h; ++y) {
                    const std::size_t r0 = base + (2 * y) * W, r1 = r0 + W;
                    for (std::size_t xx = 0; xx < ww; ++xx) {
                        const double gv = gp[y * ww + xx];
                        if (gw) {
                            a0 += gv * xv[r0 + 2 * xx];
                            a1 += gv * xv[r0 + 2 * xx + 1];
                            a2 += gv * xv[r1 + 2 * xx];
                            a3 += gv * xv[r1 + 2 * xx + 1];
                        }
                        if (gx) {
                            (*gx)[r0 + 2 * xx] += k[0] * gv;
                            (*gx)[r0 + 2 * xx + 1] += k[1] * gv;
                            (*gx)[r1 + 2 * xx] += k[2] * gv;
                            (*gx)[r1 + 2 * xx + 1] += k[3] * gv;
                        }
                    }
                }
                if (gw) {
                    double* gk = gw->data() + (o * ci + i) * 4;
                    gk[0] += a0;
                    gk[1] += a1;
                    gk[2] += a2;
                    gk[3] += a3;
                }
            }
        }
        detail::accumulate_with(t, b, [&](Tensor& gb) {
            for (std::size_t o = 0; o < co; ++o)
                for (std::size_t p = 0; p < h * ww; ++p) gb[o] += g[o * h * ww + p];
        });
    });
}

/// 2x2 transpose convolution with stride 2 (prolongation). Kernel
/// (C_in, C_out, 2, 2), so with zero bias it is the exact adjoint of
/// conv2x2_down using the same kernel tensor.
inline Var tconv2x2_up(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    detail::check_conv(xv, wv, bv, 2, "tconv2x2_up", true);
    const std::size_t ci = xv.channels(), h = xv.height(), ww = xv.width(), co = wv.dim(1);
    const std::size_t H = 2 * h, W = 2 * ww;
    Tensor out(Shape{co, H, W});
    for (std::size_t o = 0; o < co; ++o) {
        double* op = out.data() + o * H * W;
        std::fill(op, op + H * W, bv[o]);
        for (std::size_t i = 0; i < ci; ++i) {
            const double* ip = xv.data() + i * h * ww;
            const double* k = wv.data() + (i * co + o) * 4;
            for (std::size_t y = 0; y < h; ++y) {
                double* r0 = op + (2 * y) * W;
                double* r1 = r0 + W;
                for (std::size_t xx = 0; xx < ww; ++xx) {
                    const double v = ip[y * ww + xx];
                    r0[2 * xx] += k[0] * v;
                    r0[2 * xx + 1] += k[1] * v;
                    r1[2 * xx] += k[2] * v;
                    r1[2 * xx + 1] += k[3] * v;
                }
            }
        }
    }
    return x.tape().record(std::move(out), {x, w, b}, [x, w, b, ci, co, h, ww](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.value(x.id());
        const Tensor& wv = t.value(w.id());
        const std::size_t H = 2 * h, W = 2 * ww;
        Tensor* gx = t.requires_grad(x.id()) ? &t.grad_accumulator(x.id()) : nullptr;
        Tensor* gw = t.requires_grad(w.id()) ? &t.grad_accumulator(w.id()) : nullptr;
        for (std::size_t o = 0; o < co; ++o) {
            const double* gp = g.data() + o * H * W;
            for (std::size_t i = 0; i < ci; ++i) {
                const double* k = wv.data() + (i * co + o) * 4;
                double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
                for (std::size_t y = 0; y < h; ++y) {
                    const double* r0 = gp + (2 * y) * W;
                    const double* r1 = r0 + W;
                    for (std::size_t xx = 0; xx < ww; ++xx) {
                        const std::size_t idx = i * h * ww + y * ww + xx;
                        if (gw) {
                            const double v = xv[idx];
                            a0 += r0[2 * xx] * v;
                            a1 += r0[2 * xx + 1] * v;
                            a2 += r1[2 * xx] * v;
                            a3 += r1[2 * xx + 1] * v;
                        }
                        if (gx) (*gx)[idx] += k[0] * r0[2 * xx] + k[1] * r0[2 * xx + 1] + k[2] * r1[2 * xx] + k[3] * r1[2 * xx + 1];
                    }
                }
                if (gw) {
                    double* gk = gw->data() + (i * co + o) * 4;
                    gk[0] += a0;
                    gk[1] += a1;
                    gk[2] += a2;
                    gk[3] += a3;
                }
            }
        }
        detail::accumulate_with(t, b, [&](Tensor& gb) {
            for (std::size_t o = 0; o < co; ++o)
                for (std::size_t p = 0; p < H * W; ++p) gb[o] += g[o * H * W + p];
        });
    });
}

// ---------------------------------------------------------------------------
// Wrapped linear operators

/// A fixed linear map with an explicit transpose, e.g. a projector, an FBP
/// or a blur. The graph node applies `apply` forward and `transpose` backward.
struct LinearMap {
    std::string name;
    Shape in_shape;
    Shape out_shape;
    std::function<Tensor(const Tensor&)> apply;
    std::function<Tensor(const Tensor&)> transpose;
};

using LinearMapPtr = std::shared_ptr<const LinearMap>;

inline LinearMapPtr identity_map(Shape shape) {
    auto id = [](const Tensor& t) { return t; };
    return std::make_shared<LinearMap>(LinearMap{"identity", shape, shape, id, id});
}

inline Var linear_op(const Var& x, LinearMapPtr op) {
    if (!op) throw ShapeError("linear_op: null operator");
    if (x.shape() != op->in_shape)
        throw ShapeError("linear_op(" + op->name + "): input " + shape_string(x.shape()) + ", operator expects " +
                         shape_string(op->in_shape));
    Tensor out = op->apply(x.value());
    if (out.shape() != op->out_shape) throw ShapeError("linear_op(" + op->name + "): operator produced wrong shape");
    return x.tape().record(std::move(out), {x}, [x, op](Tape& t, std::size_t self) {
        if (!t.requires_grad(x.id())) return;
        t.grad_accumulator(x.id()).add_(op->transpose(t.grad(self)));
    });
}

} // namespace mvms::diff
