#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mvms/diff/ops.hpp"
#include "mvms/tomo/fbp.hpp"
#include "mvms/tomo/geometry.hpp"
#include "mvms/tomo/projector.hpp"
#include "mvms/tomo/upsample.hpp"

namespace mvms::refine {

using diff::LinearMap;
using diff::LinearMapPtr;
using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;

/// Channels of the refined stack, in stack order.
enum class Channel : std::size_t { x_prev = 0, x_u, e_u, e_f, e_k, e_s, e_d, e_j };

inline constexpr std::size_t kStackChannels = 8;

inline const char* channel_name(Channel c) {
    static constexpr std::array<const char*, kStackChannels> names{"x_prev", "x_u", "e_u", "e_f", "e_k", "e_s", "e_d", "e_j"};
    return names[static_cast<std::size_t>(c)];
}

/// Subset of stack channels; always emitted in canonical order.
class ChannelSet {
public:
    ChannelSet() = default;
    ChannelSet(std::initializer_list<Channel> cs) {
        for (Channel c : cs) bits_ |= 1u << static_cast<unsigned>(c);
    }

    static ChannelSet all() { return from_mask(0xffu); }
    static ChannelSet from_mask(std::uint32_t mask) {
        if (mask == 0 || mask > 0xffu) throw ArgumentError("channel mask must select 1..8 of the 8 stack channels");
        if (!(mask & 1u)) throw ArgumentError("channel mask must include x_prev");
        ChannelSet s;
        s.bits_ = mask;
        return s;
    }

    bool has(Channel c) const noexcept { return bits_ & (1u << static_cast<unsigned>(c)); }
    std::uint32_t mask() const noexcept { return bits_; }
    std::size_t count() const noexcept { return static_cast<std::size_t>(std::popcount(bits_)); }
    std::vector<Channel> channels() const {
        std::vector<Channel> out;
        for (std::size_t i = 0; i < kStackChannels; ++i)
            if (has(static_cast<Channel>(i))) out.push_back(static_cast<Channel>(i));
        return out;
    }
    bool operator==(const ChannelSet&) const = default;

private:
    std::uint32_t bits_ = 0;
};

/// Ablation variants (a) to (g): which projection errors feed the correction.
enum class Variant { a, b, c, d, e, f, g };

inline constexpr std::array<Variant, 7> kAllVariants{Variant::a, Variant::b, Variant::c, Variant::d,
                                                    Variant::e, Variant::f, Variant::g};

inline char variant_letter(Variant v) { return static_cast<char>('a' + static_cast<int>(v)); }

inline Variant parse_variant(const std::string& s) {
    if (s.size() == 1 && s[0] >= 'a' && s[0] <= 'g') return static_cast<Variant>(s[0] - 'a');
    throw ArgumentError("unknown ablation variant '" + s + "' (expected a..g)");
}

inline ChannelSet variant_channels(Variant v) {
    using C = Channel;
    switch (v) {
    case Variant::a: return {C::x_prev};
    case Variant::b: return {C::x_prev, C::x_u, C::e_u};
    case Variant::c: return {C::x_prev, C::x_u, C::e_u, C::e_f, C::e_k};
    case Variant::d: return {C::x_prev, C::x_u, C::e_u, C::e_f, C::e_k, C::e_s};
    case Variant::e: return {C::x_prev, C::e_s};
    case Variant::f: return {C::x_prev, C::e_s, C::e_d, C::e_j};
    case Variant::g: return ChannelSet::all();
    }
    throw ArgumentError("unknown ablation variant");
}

/// Operator handles for one (geometry, view subset) pair. Independent of the
/// measurements, so one set serves every sample with that view count.
struct Operators {
    tomo::ScanGeometry geometry;
    tomo::ViewSubset subset;
    LinearMapPtr project_full;   // P_f: image -> full sinogram
    LinearMapPtr select;         // full sinogram -> sparse rows (P_s = select o P_f)
    LinearMapPtr project_sparse; // P_s
    LinearMapPtr fbp_sparse;     // P_s^T (Ram-Lak FBP on the subset)
    LinearMapPtr fbp_full;       // P_f^T
    LinearMapPtr upsample;       // I_u: sparse sinogram -> full sinogram
};

using OperatorsPtr = std::shared_ptr<const Operators>;

inline OperatorsPtr make_operators(const tomo::ScanGeometry& g, const tomo::ViewSubset& s) {
    tomo::validate_subset(g, s);
    auto ops = std::make_shared<Operators>();
    ops->geometry = g;
    ops->subset = s;
    const tomo::ViewSubset full = tomo::full_subset(g);
    const Shape img{1, g.m1, g.m2};
    const Shape sino_full{1, g.n_views(), g.n_det};
    const Shape sino_sparse{1, s.q1(), g.n_det};
    const auto as_tensor = [](const Array2D& a) { return Tensor::from_image(a); };

    ops->project_full = std::make_shared<LinearMap>(LinearMap{
        "P_f", img, sino_full, [g, full, as_tensor](const Tensor& x) { return as_tensor(tomo::project(x.to_image(), g, full)); },
        [g, full, as_tensor](const Tensor& y) { return as_tensor(tomo::backproject_adjoint(y.to_image(), g, full)); }});
    ops->project_sparse = std::make_shared<LinearMap>(LinearMap{
        "P_s", img, sino_sparse, [g, s, as_tensor](const Tensor& x) { return as_tensor(tomo::project(x.to_image(), g, s)); },
        [g, s, as_tensor](const Tensor& y) { return as_tensor(tomo::backproject_adjoint(y.to_image(), g, s)); }});
    const std::size_t nv = g.n_views();
    ops->select = std::make_shared<LinearMap>(LinearMap{
        "select", sino_full, sino_sparse, [s, as_tensor](const Tensor& y) { return as_tensor(tomo::select_views(y.to_image(), s)); },
        [s, nv, as_tensor](const Tensor& y) { return as_tensor(tomo::scatter_views(y.to_image(), s, nv)); }});
    auto fs = std::make_shared<tomo::FilteredBackprojection>(g, s);
    ops->fbp_sparse = std::make_shared<LinearMap>(LinearMap{
        "P_s^T", sino_sparse, img, [fs, as_tensor](const Tensor& y) { return as_tensor(fs->apply(y.to_image())); },
        [fs, as_tensor](const Tensor& x) { return as_tensor(fs->apply_transpose(x.to_image())); }});
    auto ff = std::make_shared<tomo::FilteredBackprojection>(g, full);
    ops->fbp_full = std::make_shared<LinearMap>(LinearMap{
        "P_f^T", sino_full, img, [ff, as_tensor](const Tensor& y) { return as_tensor(ff->apply(y.to_image())); },
        [ff, as_tensor](const Tensor& x) { return as_tensor(ff->apply_transpose(x.to_image())); }});
    auto up = std::make_shared<tomo::ViewUpsampler>(g, s);
    ops->upsample = std::make_shared<LinearMap>(LinearMap{
        "I_u", sino_sparse, sino_full, [up, as_tensor](const Tensor& y) { return as_tensor(up->apply(y.to_image())); },
        [up, as_tensor](const Tensor& y) { return as_tensor(up->apply_transpose(y.to_image())); }});
    return ops;
}

/// Sparse measurements bound to their operators, with the stage-independent
/// images x_0 = P_s^T y_s and x_u = P_f^T I_u y_s cached.
class StageContext {
public:
    StageContext(OperatorsPtr ops, Array2D y_s) : ops_(std::move(ops)) { set_measurements(std::move(y_s)); }
    StageContext(const tomo::ScanGeometry& g, const tomo::ViewSubset& s, Array2D y_s)
        : StageContext(make_operators(g, s), std::move(y_s)) {}

    void set_measurements(Array2D y_s) {
        tomo::detail::check_sinogram(ops_->geometry, ops_->subset, y_s, "StageContext");
        y_s_ = Tensor::from_image(y_s);
        x0_ = ops_->fbp_sparse->apply(y_s_);
        x_u_ = ops_->fbp_full->apply(ops_->upsample->apply(y_s_));
    }

    const Operators& ops() const noexcept { return *ops_; }
    const OperatorsPtr& ops_ptr() const noexcept { return ops_; }
    const tomo::ScanGeometry& geometry() const noexcept { return ops_->geometry; }
    const tomo::ViewSubset& subset() const noexcept { return ops_->subset; }
    const Tensor& y_s() const noexcept { return y_s_; }
    const Tensor& x0() const noexcept { return x0_; }
    const Tensor& x_u() const noexcept { return x_u_; }
    Shape image_shape() const { return {1, ops_->geometry.m1, ops_->geometry.m2}; }

private:
    OperatorsPtr ops_;
    Tensor y_s_;
    Tensor x0_;
    Tensor x_u_;
};

namespace detail {

inline void check_image(const Var& x, const StageContext& ctx, const char* who) {
    if (x.shape() != ctx.image_shape())
        throw ShapeError(std::string(who) + ": image " + diff::shape_string(x.shape()) + " does not match grid " +
                         diff::shape_string(ctx.image_shape()));
}

/// (I - A^T A) v for the projector/FBP pair (project, fbp).
inline Var residual_operator(const Var& v, const LinearMapPtr& project, const LinearMapPtr& fbp) {
    return diff::sub(v, diff::linear_op(diff::linear_op(v, project), fbp));
}

} // namespace detail

/// Sparse-view reconstruction error e_s = P_s^T (y_s - P_s x).
inline Var svr_error(const Var& x, const StageContext& ctx) {
    detail::check_image(x, ctx, "svr_error");
    const Var y = x.tape().constant(ctx.y_s());
    return diff::linear_op(diff::sub(y, diff::linear_op(x, ctx.ops().project_sparse)), ctx.ops().fbp_sparse);
}

struct SvpErrors {
    Var r_hat; // x + e_s - e_d
    Var e_d;   // (I - P_s^T P_s) x
    Var e_j;   // (I - P_s^T P_s) r_hat
};

/// Sparse-view projection errors.
inline SvpErrors svp_errors(const Var& x, const Var& e_s, const StageContext& ctx) {
    detail::check_image(x, ctx, "svp_errors");
    detail::check_image(e_s, ctx, "svp_errors");
    const auto& ops = ctx.ops();
    const Var e_d = detail::residual_operator(x, ops.project_sparse, ops.fbp_sparse);
    const Var r_hat = diff::sub(diff::add(x, e_s), e_d);
    const Var e_j = detail::residual_operator(r_hat, ops.project_sparse, ops.fbp_sparse);
    return {r_hat, e_d, e_j};
}

struct FvpErrors {
    Var e_f; // (I - P_f^T P_f) x
    Var e_k; // (I - P_f^T P_f) r_hat
};

/// Full-view projection errors.
inline FvpErrors fvp_errors(const Var& x, const Var& r_hat, const StageContext& ctx) {
    detail::check_image(x, ctx, "fvp_errors");
    detail::check_image(r_hat, ctx, "fvp_errors");
    const auto& ops = ctx.ops();
    return {detail::residual_operator(x, ops.project_full, ops.fbp_full),
            detail::residual_operator(r_hat, ops.project_full, ops.fbp_full)};
}

struct CvrErrors {
    Var x_u; // P_f^T (I_u y_s), cached
    Var e_u; // P_f^T (I_u P_s x - P_f x)
};

/// Cross-view reconstruction and its projection error. P_s x is taken as the
/// subset rows of P_f x, which is the same array.
inline CvrErrors cvr(const Var& x, const StageContext& ctx) {
    detail::check_image(x, ctx, "cvr");
    const auto& ops = ctx.ops();
    const Var pf = diff::linear_op(x, ops.project_full);
    const Var ps = diff::linear_op(pf, ops.select);
    const Var e_u = diff::linear_op(diff::sub(diff::linear_op(ps, ops.upsample), pf), ops.fbp_full);
    return {x.tape().constant(ctx.x_u()), e_u};
}

/// Builds the refined stack for x_prev: the selected channels of
/// [x_prev, x_u, e_u, e_f, e_k, e_s, e_d, e_j], only computing what is needed.
inline Var assemble(const Var& x_prev, const StageContext& ctx, const ChannelSet& channels = ChannelSet::all()) {
    detail::check_image(x_prev, ctx, "assemble");
    using C = Channel;
    std::optional<Var> e_s;
    std::optional<SvpErrors> svp;
    std::optional<FvpErrors> fvp;
    std::optional<CvrErrors> cv;
    const auto need_es = [&] {
        if (!e_s) e_s = svr_error(x_prev, ctx);
        return *e_s;
    };
    const auto need_svp = [&] {
        if (!svp) svp = svp_errors(x_prev, need_es(), ctx);
        return *svp;
    };
    const auto need_fvp = [&] {
        if (!fvp) fvp = fvp_errors(x_prev, need_svp().r_hat, ctx);
        return *fvp;
    };
    const auto need_cvr = [&] {
        if (!cv) cv = cvr(x_prev, ctx);
        return *cv;
    };
    std::vector<Var> parts;
    for (Channel c : channels.channels()) {
        switch (c) {
        case C::x_prev: parts.push_back(x_prev); break;
        case C::x_u: parts.push_back(need_cvr().x_u); break;
        case C::e_u: parts.push_back(need_cvr().e_u); break;
        case C::e_f: parts.push_back(need_fvp().e_f); break;
        case C::e_k: parts.push_back(need_fvp().e_k); break;
        case C::e_s: parts.push_back(need_es()); break;
        case C::e_d: parts.push_back(need_svp().e_d); break;
        case C::e_j: parts.push_back(need_svp().e_j); break;
        }
    }
    return diff::concat_channels(parts);
}

/// Stack values without recording gradients.
inline Tensor assemble_values(const Array2D& x_prev, const StageContext& ctx, const ChannelSet& channels = ChannelSet::all()) {
    Tape t;
    return assemble(t.constant(Tensor::from_image(x_prev)), ctx, channels).value();
}

} // namespace mvms::refine
