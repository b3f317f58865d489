#include <gtest/gtest.h>

#include <cmath>

#include "mvms/refine/refine.hpp"
#include "oracles/common.hpp"
#include "oracles/refine_oracle.hpp"

using namespace mvms;
using namespace mvms::refine;
namespace tg = mvms::tomo;

namespace {

tg::ScanGeometry toy(tg::Beam beam) {
    tg::GeometryConfig c;
    c.beam = beam;
    c.n_views = 6;
    c.n_det = 16;
    c.grid_m1 = c.grid_m2 = 8;
    if (beam == tg::Beam::fan) {
        c.det_spacing_mm = 2.0;
        c.src_dist_mm = 40.0;
        c.det_dist_mm = 30.0;
    }
    return tg::make_geometry(c);
}

Array2D gaussian_blob(std::size_t n, double sigma_frac) {
    Array2D img(n, n);
    const double c = 0.5 * static_cast<double>(n - 1);
    const double s = sigma_frac * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
            img(i, j) = std::exp(-(di * di + dj * dj) / (2.0 * s * s));
        }
    return img;
}

} // namespace

TEST(Refine, ErrorExtractorsMatchDenseMatrices) {
    for (tg::Beam beam : {tg::Beam::parallel, tg::Beam::fan}) {
        SCOPED_TRACE(tg::to_string(beam));
        const tg::ScanGeometry g = toy(beam);
        const tg::ViewSubset s = tg::sparse_subset(g, 3);
        const Array2D x = oracle::random_array(8, 8, 1, 0.0, 1.0);
        const Array2D y = oracle::random_array(3, 16, 2, 0.0, 5.0);
        const StageContext ctx(g, s, y);
        const oracle::DenseChain d = oracle::dense_chain(g, s, x, y);
        const Tensor stack = assemble_values(x, ctx);
        ASSERT_EQ(stack.shape(), (Shape{8, 8, 8}));
        EXPECT_LT(max_abs_diff(stack.channel(0), x), 1e-15);
        EXPECT_LT(max_abs_diff(stack.channel(1), d.x_u), 1e-8);
        EXPECT_LT(max_abs_diff(stack.channel(2), d.e_u), 1e-8);
        EXPECT_LT(max_abs_diff(stack.channel(3), d.e_f), 1e-8);
        EXPECT_LT(max_abs_diff(stack.channel(4), d.e_k), 1e-8);
        EXPECT_LT(max_abs_diff(stack.channel(5), d.e_s), 1e-8);
        EXPECT_LT(max_abs_diff(stack.channel(6), d.e_d), 1e-8);
        EXPECT_LT(max_abs_diff(stack.channel(7), d.e_j), 1e-8);
    }
}

TEST(Refine, ChannelOrderMatchesIndividualExtractors) {
    const tg::ScanGeometry g = toy(tg::Beam::fan);
    const tg::ViewSubset s = tg::sparse_subset(g, 2);
    const StageContext ctx(g, s, oracle::random_array(2, 16, 3));
    diff::Tape t;
    const Var x = t.constant(oracle::random_tensor({1, 8, 8}, 4));
    const Var e_s = svr_error(x, ctx);
    const SvpErrors svp = svp_errors(x, e_s, ctx);
    const FvpErrors fvp = fvp_errors(x, svp.r_hat, ctx);
    const CvrErrors cv = cvr(x, ctx);
    const Tensor stack = assemble(x, ctx).value();
    const std::vector<Var> expect{x, cv.x_u, cv.e_u, fvp.e_f, fvp.e_k, e_s, svp.e_d, svp.e_j};
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(stack.channel(c), expect[c].value().to_image()) << channel_name(Channel(c));
}

TEST(Refine, ZeroImageIdentities) {
    const tg::ScanGeometry g = toy(tg::Beam::parallel);
    const tg::ViewSubset s = tg::sparse_subset(g, 3);
    const StageContext ctx(g, s, oracle::random_array(3, 16, 5));
    diff::Tape t;
    const Var zero = t.constant(Tensor({1, 8, 8}));
    const Var e_s = svr_error(zero, ctx);
    EXPECT_EQ(e_s.value(), ctx.x0());
    const SvpErrors svp = svp_errors(zero, e_s, ctx);
    for (double v : svp.e_d.value().values()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(svp.r_hat.value(), e_s.value());
    const Var direct = diff::sub(e_s, diff::linear_op(diff::linear_op(e_s, ctx.ops().project_sparse), ctx.ops().fbp_sparse));
    EXPECT_EQ(svp.e_j.value(), direct.value());
    for (double v : fvp_errors(zero, svp.r_hat, ctx).e_f.value().values()) EXPECT_EQ(v, 0.0);
    for (double v : cvr(zero, ctx).e_u.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Refine, FullViewSubsetHasNoCrossViewError) {
    const tg::ScanGeometry g = toy(tg::Beam::fan);
    const StageContext ctx(g, tg::full_subset(g), oracle::random_array(6, 16, 6));
    diff::Tape t;
    const Var x = t.constant(oracle::random_tensor({1, 8, 8}, 7));
    for (double v : cvr(x, ctx).e_u.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Refine, NoiselessFixedPoint) {
    for (tg::Beam beam : {tg::Beam::parallel, tg::Beam::fan}) {
        const tg::ScanGeometry g = toy(beam);
        const tg::ViewSubset s = tg::sparse_subset(g, 3);
        const Array2D x_star = oracle::random_array(8, 8, 8, 0.0, 1.0);
        const StageContext ctx(g, s, tg::project(x_star, g, s));
        diff::Tape t;
        const Var x = t.constant(Tensor::from_image(x_star));
        const Var e_s = svr_error(x, ctx);
        for (double v : e_s.value().values()) EXPECT_EQ(v, 0.0);
        const SvpErrors svp = svp_errors(x, e_s, ctx);
        EXPECT_EQ(svp.r_hat.value(), diff::sub(x, svp.e_d).value());
    }
}

TEST(Refine, JointLinearityInImageAndData) {
    const tg::ScanGeometry g = toy(tg::Beam::fan);
    const tg::ViewSubset s = tg::sparse_subset(g, 3);
    const Array2D x = oracle::random_array(8, 8, 9);
    const Array2D y = oracle::random_array(3, 16, 10);
    const double alpha = -2.5;
    const Tensor a = assemble_values(x, StageContext(g, s, y));
    const Tensor b = assemble_values(alpha * x, StageContext(g, s, alpha * y));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], alpha * a[i], 1e-12 * (1.0 + std::abs(a[i])));
}

TEST(Refine, ZeroInputsGiveZeroStack) {
    const tg::ScanGeometry g = toy(tg::Beam::parallel);
    const tg::ViewSubset s = tg::sparse_subset(g, 2);
    const Tensor stack = assemble_values(Array2D(8, 8), StageContext(g, s, Array2D(2, 16)));
    ASSERT_EQ(stack.channels(), 8u);
    for (double v : stack.values()) EXPECT_EQ(v, 0.0);
}

TEST(Refine, AssembleGradientMatchesFiniteDifferences) {
    for (tg::Beam beam : {tg::Beam::parallel, tg::Beam::fan}) {
        const tg::ScanGeometry g = toy(beam);
        const StageContext ctx(g, tg::sparse_subset(g, 3), oracle::random_array(3, 16, 11));
        const Tensor w = oracle::random_tensor({8, 8, 8}, 12);
        const auto loss = [&](const Tensor& xv, Tensor* grad) {
            diff::Tape t;
            const Var x = t.leaf(xv);
            const Var l = diff::sum(diff::mul(assemble(x, ctx), t.constant(w)));
            if (grad) {
                t.backward(l);
                *grad = x.grad();
            }
            return l.value().item();
        };
        const Tensor x0 = oracle::random_tensor({1, 8, 8}, 13);
        Tensor analytic;
        loss(x0, &analytic);
        const Tensor numeric = oracle::numeric_gradient([&](const Tensor& p) { return loss(p, nullptr); }, x0);
        EXPECT_LT(oracle::rel_err(analytic.values(), numeric.values()), 1e-5);
    }
}

TEST(Refine, VariantsSelectListedChannels) {
    EXPECT_EQ(kAllVariants.size(), 7u);
    const std::vector<std::size_t> counts{1, 3, 5, 6, 2, 4, 8};
    for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(variant_channels(kAllVariants[i]).count(), counts[i]);
    EXPECT_EQ(variant_channels(Variant::e).channels(), (std::vector<Channel>{Channel::x_prev, Channel::e_s}));
    EXPECT_THROW(parse_variant("h"), ArgumentError);
    EXPECT_EQ(parse_variant("c"), Variant::c);

    const tg::ScanGeometry g = toy(tg::Beam::fan);
    const tg::ViewSubset s = tg::sparse_subset(g, 3);
    const StageContext ctx(g, s, oracle::random_array(3, 16, 14));
    const Array2D x = oracle::random_array(8, 8, 15);
    const Tensor full = assemble_values(x, ctx);
    for (Variant v : kAllVariants) {
        const ChannelSet cs = variant_channels(v);
        const Tensor part = assemble_values(x, ctx, cs);
        ASSERT_EQ(part.channels(), cs.count());
        std::size_t k = 0;
        for (Channel c : cs.channels()) EXPECT_EQ(part.channel(k++), full.channel(static_cast<std::size_t>(c)));
    }
}

TEST(Refine, ShapeMismatchThrows) {
    const tg::ScanGeometry g = toy(tg::Beam::fan);
    const tg::ViewSubset s = tg::sparse_subset(g, 3);
    EXPECT_THROW(StageContext(g, s, Array2D(4, 16)), ShapeError);
    const StageContext ctx(g, s, Array2D(3, 16));
    diff::Tape t;
    EXPECT_THROW(svr_error(t.constant(Tensor({1, 7, 8})), ctx), ShapeError);
    EXPECT_THROW(assemble(t.constant(Tensor({2, 8, 8})), ctx), ShapeError);
}

TEST(Refine, FullViewOperatorIsNearIdentityOnSmoothPhantom) {
    const tg::ScanGeometry g = tg::load_geometry("parallel-720@2");
    const Array2D x = gaussian_blob(g.m1, 0.12);
    const StageContext ctx(g, tg::full_subset(g), tg::project(x, g, tg::full_subset(g)));
    diff::Tape t;
    const Var xv = t.constant(Tensor::from_image(x));
    const SvpErrors svp = svp_errors(xv, svr_error(xv, ctx), ctx);
    EXPECT_LT(norm2(svp.e_d.value().to_image()) / norm2(x), 0.1);
}

TEST(Refine, FullViewErrorSmallerThanSparseAtSixteenViews) {
    const tg::ScanGeometry g = tg::load_geometry("fan-1024@8");
    const tg::ViewSubset s = tg::sparse_subset(g, 16);
    const Array2D x = gaussian_blob(g.m1, 0.12);
    const StageContext ctx(g, s, tg::project(x, g, s));
    diff::Tape t;
    const Var xv = t.constant(Tensor::from_image(x));
    const SvpErrors svp = svp_errors(xv, svr_error(xv, ctx), ctx);
    const FvpErrors fvp = fvp_errors(xv, svp.r_hat, ctx);
    EXPECT_LT(norm2(fvp.e_f.value().to_image()), norm2(svp.e_d.value().to_image()));
}
