#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mvms/train/train.hpp"
#include "oracles/common.hpp"
#include "oracles/ssim_oracle.hpp"

using namespace mvms;
using namespace mvms::train;
namespace tg = mvms::tomo;

namespace {

tg::ScanGeometry small_fan() {
    tg::GeometryConfig c;
    c.beam = tg::Beam::fan;
    c.n_views = 6;
    c.n_det = 16;
    c.grid_m1 = c.grid_m2 = 8;
    c.det_spacing_mm = 2.0;
    c.src_dist_mm = 40.0;
    c.det_dist_mm = 30.0;
    return tg::make_geometry(c);
}

double eval_scalar(const std::function<Var(diff::Tape&, const Var&)>& f, const Tensor& x) {
    diff::Tape t;
    return f(t, t.constant(x)).value().item();
}

/// Max relative error between the tape gradient of f and central differences.
double fd_error(const std::function<Var(diff::Tape&, const Var&)>& f, const Tensor& x0, double h = 1e-6) {
    diff::Tape t;
    const Var x = t.leaf(x0);
    t.backward(f(t, x));
    const Tensor g = x.grad();
    double worst = 0.0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        Tensor a = x0, b = x0;
        a[i] += h;
        b[i] -= h;
        const double fd = (eval_scalar(f, a) - eval_scalar(f, b)) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - g[i]) / std::max(1e-4, std::abs(fd) + std::abs(g[i])));
    }
    return worst;
}

std::filesystem::path temp_path(const std::string& name) { return std::filesystem::temp_directory_path() / ("mvms_" + name); }

std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

model::MvmsModel tiny_model(std::size_t n = 1, std::uint64_t seed = 1) {
    model::ModelConfig c;
    c.p = 2;
    c.n = n;
    c.n_s = 2;
    model::MvmsModel m(c, seed);
    const tg::ScanGeometry g = small_fan();
    m.register_geometry(g, tg::sparse_subset(g, 2));
    m.register_geometry(g, tg::sparse_subset(g, 3));
    return m;
}

std::vector<Array2D> blobs(std::size_t count) {
    std::vector<Array2D> out;
    for (std::size_t k = 0; k < count; ++k) out.push_back(oracle::random_array(8, 8, 100 + k, 0.0, 1.0));
    return out;
}

} // namespace

// ---- l1 ----

TEST(L1Loss, IdenticalInputsGiveZero) {
    diff::Tape t;
    const Var x = t.constant(oracle::random_tensor({1, 5, 4}, 1));
    EXPECT_EQ(l1_loss(x, x).value().item(), 0.0);
}

TEST(L1Loss, UnitOffsetGivesOne) {
    diff::Tape t;
    const Tensor a = oracle::random_tensor({1, 5, 4}, 2);
    Tensor b = a;
    for (double& v : b.values()) v += 1.0;
    EXPECT_NEAR(l1_loss(t.constant(b), t.constant(a)).value().item(), 1.0, 1e-15);
}

TEST(L1Loss, GradientIsSignOverPixelCount) {
    const Tensor target = oracle::random_tensor({1, 4, 4}, 3);
    const Tensor x0 = oracle::random_tensor({1, 4, 4}, 4);
    diff::Tape t;
    const Var x = t.leaf(x0);
    t.backward(l1_loss(x, t.constant(target)));
    for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], (x0[i] > target[i] ? 1.0 : -1.0) / 16.0);
    EXPECT_LT(fd_error([&](diff::Tape& tt, const Var& v) { return l1_loss(v, tt.constant(target)); }, x0), 1e-6);
}

TEST(L1Loss, ZeroSubgradientAtTies) {
    diff::Tape t;
    const Tensor a = oracle::random_tensor({1, 3, 3}, 5);
    const Var x = t.leaf(a);
    t.backward(l1_loss(x, t.constant(a)));
    for (double g : x.grad().values()) EXPECT_EQ(g, 0.0);
}

TEST(L1Loss, ShapeMismatch) {
    diff::Tape t;
    EXPECT_THROW(l1_loss(t.constant(Tensor({1, 2, 2})), t.constant(Tensor({1, 2, 3}))), ShapeError);
}

// ---- ssim ----

TEST(Ssim, SelfSimilarityIsExactlyOne) {
    for (unsigned seed : {1u, 2u, 3u}) {
        const Array2D a = oracle::random_array(17, 23, seed, 0.0, 1.0);
        EXPECT_EQ(ssim_value(a, a), 1.0);
    }
}

TEST(Ssim, ConstantImagesReduceToLuminanceTerm) {
    const LossConfig cfg;
    const double c1 = 0.01 * 0.01;
    for (auto [u, v] : {std::pair{0.2, 0.7}, std::pair{0.5, 0.5}, std::pair{0.0, 1.0}, std::pair{0.9, 0.1}}) {
        Array2D a(12, 9), b(12, 9);
        a.fill(u);
        b.fill(v);
        EXPECT_NEAR(ssim_value(a, b, cfg), (2 * u * v + c1) / (u * u + v * v + c1), 1e-12);
    }
}

TEST(Ssim, MatchesScalarOracle) {
    for (unsigned k = 0; k < 10; ++k) {
        const Array2D a = oracle::random_array(32, 32, 200 + k, 0.0, 1.0);
        Array2D b = a;
        const Array2D noise = oracle::random_array(32, 32, 300 + k, -0.2, 0.2);
        b += noise;
        EXPECT_NEAR(ssim_value(a, b), oracle::ssim_scalar(a, b), 1e-10);
    }
    const Array2D a = oracle::random_array(7, 13, 9, 0.0, 1.0), b = oracle::random_array(7, 13, 10, 0.0, 1.0);
    LossConfig cfg;
    cfg.range = 2.5;
    EXPECT_NEAR(ssim_value(a, b, cfg), oracle::ssim_scalar(a, b, 2.5), 1e-10);
}

TEST(Ssim, IsSymmetric) {
    for (unsigned k = 0; k < 5; ++k) {
        const Array2D a = oracle::random_array(20, 16, 10 + k, 0.0, 1.0), b = oracle::random_array(20, 16, 20 + k, 0.0, 1.0);
        EXPECT_NEAR(ssim_value(a, b), ssim_value(b, a), 1e-12);
    }
}

TEST(Ssim, ValueInRange) {
    const Array2D a = oracle::random_array(16, 16, 1, 0.0, 1.0);
    Array2D b = a;
    b *= -1.0;
    const double s = ssim_value(a, b);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
}

TEST(Ssim, RejectsBadInput) {
    diff::Tape t;
    const Var a = t.constant(Tensor({1, 4, 4})), b = t.constant(Tensor({1, 4, 5}));
    EXPECT_THROW(ssim(a, b), ShapeError);
    LossConfig cfg;
    cfg.range = 0.0;
    EXPECT_THROW(ssim(a, a, cfg), ArgumentError);
}

TEST(Ssim, GaussianWindowTransposeIsAdjoint) {
    const auto G = gaussian_window({2, 9, 14}, LossConfig{});
    const Tensor x = oracle::random_tensor({2, 9, 14}, 1), y = oracle::random_tensor({2, 9, 14}, 2);
    const Tensor gx = G->apply(x), gty = G->transpose(y);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        lhs += gx[i] * y[i];
        rhs += x[i] * gty[i];
    }
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::abs(lhs));
}

TEST(Ssim, GradientMatchesFiniteDifferences) {
    const Tensor target = oracle::random_tensor({1, 6, 7}, 4, 0.0, 1.0);
    const Tensor x0 = oracle::random_tensor({1, 6, 7}, 5, 0.0, 1.0);
    EXPECT_LT(fd_error([&](diff::Tape& t, const Var& v) { return ssim(v, t.constant(target)); }, x0), 1e-6);
}

// ---- total / unsupervised ----

TEST(TotalLoss, VanishesOnIdenticalInputs) {
    for (unsigned seed = 0; seed < 8; ++seed) {
        diff::Tape t;
        const Var x = t.constant(oracle::random_tensor({1, 9, 11}, seed, -2.0, 2.0));
        EXPECT_EQ(total_loss(x, x).value().item(), 0.0);
    }
}

TEST(TotalLoss, ZeroGammaIsExactlyL1) {
    diff::Tape t;
    const Var a = t.constant(oracle::random_tensor({1, 8, 8}, 1)), b = t.constant(oracle::random_tensor({1, 8, 8}, 2));
    LossConfig cfg;
    cfg.gamma = 0.0;
    EXPECT_EQ(total_loss(a, b, cfg).value().item(), l1_loss(a, b).value().item());
}

TEST(TotalLoss, GammaSweepCombinesTerms) {
    const Array2D a = oracle::random_array(10, 10, 3, 0.0, 1.0), b = oracle::random_array(10, 10, 4, 0.0, 1.0);
    diff::Tape t;
    const Var x = t.constant(Tensor::from_image(a)), y = t.constant(Tensor::from_image(b));
    const double l1 = l1_loss(x, y).value().item();
    const double s = oracle::ssim_scalar(a, b);
    for (double gamma : {0.0, 0.1, 1.0, 10.0}) {
        LossConfig cfg;
        cfg.gamma = gamma;
        EXPECT_NEAR(total_loss(x, y, cfg).value().item(), l1 + gamma * (1.0 - s), 1e-10);
    }
    LossConfig bad;
    bad.gamma = -1.0;
    EXPECT_THROW(total_loss(x, y, bad), ArgumentError);
}

TEST(UnsupervisedLoss, ZeroForTruthOnNoiselessData) {
    const tg::ScanGeometry g = small_fan();
    const tg::ViewSubset s = tg::sparse_subset(g, 3);
    const Array2D x_star = oracle::random_array(8, 8, 7, 0.0, 1.0);
    const refine::StageContext ctx(g, s, tg::project(x_star, g, s));
    diff::Tape t;
    EXPECT_EQ(unsupervised_loss(t.constant(Tensor::from_image(x_star)), ctx).value().item(), 0.0);
}

TEST(UnsupervisedLoss, ZeroForZeroImageAndData) {
    const tg::ScanGeometry g = small_fan();
    const refine::StageContext ctx(g, tg::sparse_subset(g, 2), Array2D(2, 16));
    diff::Tape t;
    EXPECT_EQ(unsupervised_loss(t.constant(Tensor({1, 8, 8})), ctx).value().item(), 0.0);
}

TEST(UnsupervisedLoss, GradientMatchesFiniteDifferences) {
    const tg::ScanGeometry g = small_fan();
    const refine::StageContext ctx(g, tg::sparse_subset(g, 3), oracle::random_array(3, 16, 8, 0.0, 5.0));
    const Tensor x0 = oracle::random_tensor({1, 8, 8}, 9, 0.0, 1.0);
    EXPECT_LT(fd_error([&](diff::Tape&, const Var& v) { return unsupervised_loss(v, ctx); }, x0), 1e-4);
}

TEST(UnsupervisedLoss, GeometryMismatch) {
    const tg::ScanGeometry g = small_fan();
    const refine::StageContext ctx(g, tg::sparse_subset(g, 3), Array2D(3, 16));
    diff::Tape t;
    EXPECT_THROW(unsupervised_loss(t.constant(Tensor({1, 6, 6})), ctx), ShapeError);
}

// ---- adam ----

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
    Tensor p = oracle::random_tensor({3, 4}, 1);
    const Tensor orig = p;
    OptimState st;
    for (int k = 0; k < 5; ++k) adam_step({&p}, {Tensor({3, 4})}, st);
    EXPECT_EQ(p, orig);
    EXPECT_EQ(st.step, 5u);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
    Tensor p({4});
    const Tensor g({4}, std::vector<double>{0.5, -3.0, 1e-3, 7.0});
    OptimState st;
    st.cfg.lr = 0.01;
    adam_step({&p}, {g}, st);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i], -0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
    // m_hat -> g and v_hat -> g^2, so every step moves by lr g / (|g| + eps).
    Tensor p({1});
    const Tensor g({1}, std::vector<double>{2.5});
    OptimState st;
    st.cfg.lr = 1e-3;
    double last = 0.0;
    for (int k = 0; k < 2000; ++k) {
        const double before = p[0];
        adam_step({&p}, {g}, st);
        last = before - p[0];
    }
    EXPECT_NEAR(last, 1e-3, 1e-9);
    EXPECT_NEAR(p[0], -2000 * 1e-3, 1e-6);
}

TEST(Adam, DeterministicAndShapeChecked) {
    const auto run = [] {
        Tensor p = oracle::random_tensor({2, 3}, 1);
        OptimState st;
        for (unsigned k = 0; k < 10; ++k) adam_step({&p}, {oracle::random_tensor({2, 3}, 10 + k)}, st);
        return p;
    };
    EXPECT_EQ(run(), run());
    Tensor p({2, 3});
    OptimState st;
    EXPECT_THROW(adam_step({&p}, {Tensor({3, 2})}, st), ShapeError);
    EXPECT_THROW(adam_step({&p}, {}, st), ShapeError);
}

// ---- checkpoint ----

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    const model::MvmsModel m = tiny_model(2, 4);
    OptimState st;
    std::vector<Tensor> grads;
    auto mm = m;
    for (Tensor* t : mm.parameter_tensors()) grads.push_back(oracle::random_tensor(t->shape(), 3));
    adam_step(mm.parameter_tensors(), grads, st);
    const auto a = temp_path("ckpt_a.bin"), b = temp_path("ckpt_b.bin");
    save_checkpoint(a.string(), make_checkpoint(mm, 0.5, 42, 17, st));
    const Checkpoint c = load_checkpoint(a.string());
    save_checkpoint(b.string(), c);
    EXPECT_EQ(read_bytes(a), read_bytes(b));
    EXPECT_EQ(c.params, mm.params());
    EXPECT_EQ(c.config, mm.config());
    EXPECT_EQ(c.gamma, 0.5);
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.step, 17u);
    ASSERT_TRUE(c.optim);
    EXPECT_EQ(c.optim->step, 1u);
    EXPECT_EQ(c.optim->m, st.m);
    EXPECT_EQ(c.optim->v, st.v);
    std::filesystem::remove(a);
    std::filesystem::remove(b);
}

TEST(Checkpoint, UnsharedAndChannelSubsetRoundTrip) {
    model::ModelConfig c;
    c.p = 3;
    c.n = 1;
    c.n_s = 3;
    c.shared = false;
    c.zero_init = true;
    c.channels = refine::variant_channels(refine::Variant::f);
    const model::MvmsModel m(c, 5);
    std::stringstream buf;
    write_checkpoint(buf, make_checkpoint(m, 1.0, 0, 0));
    const Checkpoint back = read_checkpoint(buf);
    EXPECT_EQ(back.config, c);
    EXPECT_EQ(back.params, m.params());
    EXPECT_FALSE(back.optim);
}

TEST(Checkpoint, HeaderLayout) {
    const model::MvmsModel m = tiny_model();
    std::stringstream buf;
    write_checkpoint(buf, make_checkpoint(m, 1.0, 0, 0));
    const std::string s = buf.str();
    ASSERT_GT(s.size(), 24u);
    EXPECT_EQ(s.substr(0, 4), "MVMS");
    const auto u32 = [&](std::size_t off) {
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[off + i]);
        return v;
    };
    EXPECT_EQ(u32(4), 1u);  // version
    EXPECT_EQ(u32(8), 2u);  // p
    EXPECT_EQ(u32(12), 1u); // n
    EXPECT_EQ(u32(16), 2u); // n_s
    EXPECT_EQ(u32(20), 8u); // c_in
}

TEST(Checkpoint, ParamCountInHeaderMatchesBlobs) {
    const model::MvmsModel m = tiny_model();
    std::stringstream buf;
    write_checkpoint(buf, make_checkpoint(m, 1.0, 0, 0));
    std::string s = buf.str();
    // u64 param count follows magic, 5 u32, 2 f64, 2 u32, 2 u64.
    const std::size_t off = 4 + 5 * 4 + 2 * 8 + 2 * 4 + 2 * 8;
    std::uint64_t count = 0;
    for (int i = 7; i >= 0; --i) count = (count << 8) | static_cast<unsigned char>(s[off + i]);
    EXPECT_EQ(count, m.param_count());
    s[off] = static_cast<char>(s[off] + 1);
    std::stringstream bad(s);
    EXPECT_THROW(read_checkpoint(bad), FormatError);
}

TEST(Checkpoint, TypedErrors) {
    const model::MvmsModel m5 = tiny_model(5);
    model::MvmsModel m4 = tiny_model(4);
    std::stringstream buf;
    write_checkpoint(buf, make_checkpoint(m5, 1.0, 0, 0));
    const Checkpoint c = read_checkpoint(buf);
    EXPECT_THROW(load_into(m4, c), CheckpointMismatch);

    std::string s = buf.str();
    std::string bad_magic = s;
    bad_magic[0] = 'X';
    std::stringstream a(bad_magic);
    EXPECT_THROW(read_checkpoint(a), FormatError);

    std::stringstream trunc(s.substr(0, s.size() - 3));
    EXPECT_THROW(read_checkpoint(trunc), FormatError);

    std::stringstream trailing(s + "x");
    EXPECT_THROW(read_checkpoint(trailing), FormatError);

    std::string bad_version = s;
    bad_version[4] = 9;
    std::stringstream v(bad_version);
    EXPECT_THROW(read_checkpoint(v), CheckpointMismatch);

    EXPECT_THROW(load_checkpoint("/nonexistent/dir/ckpt.bin"), FormatError);
}

TEST(Checkpoint, BlobShapeMismatchIsFormatError) {
    const model::MvmsModel m = tiny_model();
    std::stringstream buf;
    write_checkpoint(buf, make_checkpoint(m, 1.0, 0, 0));
    std::string s = buf.str();
    // Rewrite the header's p from 2 to 3: blobs no longer fit.
    s[8] = 3;
    std::stringstream bad(s);
    EXPECT_THROW(read_checkpoint(bad), FormatError);
}

// ---- training ----

TEST(TrainLoop, OverfitsSingleSample) {
    model::MvmsModel m = tiny_model(1, 3);
    TrainConfig cfg;
    cfg.view_counts = {3};
    cfg.steps = 50;
    cfg.flips = false;
    cfg.adam.lr = 3e-3;
    const TrainResult r = train_loop(m, blobs(1), cfg);
    ASSERT_EQ(r.records.size(), 50u);
    const auto window = [&](std::size_t from) {
        double s = 0.0;
        for (std::size_t k = from; k < from + 10; ++k) s += r.records[k].loss;
        return s / 10.0;
    };
    EXPECT_LT(window(40), window(0));
    EXPECT_LT(window(40), window(20));
    EXPECT_EQ(r.checkpoint.step, 50u);
}

TEST(TrainLoop, ScheduleServesSeveralViewCounts) {
    model::MvmsModel m = tiny_model(1, 3);
    TrainConfig cfg;
    cfg.view_counts = {2, 3};
    cfg.steps = 20;
    const TrainResult r = train_loop(m, blobs(4), cfg);
    std::set<std::size_t> seen;
    for (const auto& rec : r.records) seen.insert(rec.view_count);
    EXPECT_EQ(seen, (std::set<std::size_t>{2, 3}));
    const tg::ScanGeometry g = small_fan();
    for (std::size_t q : {2u, 3u}) EXPECT_TRUE(all_finite(m.reconstruct(tg::project(blobs(1)[0], g, tg::sparse_subset(g, q)))));
}

TEST(TrainLoop, DeterministicAndResumable) {
    TrainConfig cfg;
    cfg.view_counts = {2, 3};
    cfg.steps = 12;
    cfg.seed = 99;
    const auto data = blobs(5);

    model::MvmsModel a = tiny_model(1, 3);
    const TrainResult ra = train_loop(a, data, cfg);
    model::MvmsModel b = tiny_model(1, 3);
    const TrainResult rb = train_loop(b, data, cfg);
    EXPECT_EQ(a.params(), b.params());
    for (std::size_t k = 0; k < ra.records.size(); ++k) EXPECT_EQ(ra.records[k].loss, rb.records[k].loss);

    // Interrupt after 5 steps, round-trip through a file, finish.
    model::MvmsModel c = tiny_model(1, 3);
    TrainConfig first = cfg;
    first.steps = 5;
    const auto path = temp_path("resume.bin");
    first.checkpoint_path = path.string();
    train_loop(c, data, first);
    const Checkpoint saved = load_checkpoint(path.string());
    model::MvmsModel d = tiny_model(1, 77);
    const TrainResult rd = train_loop(d, data, cfg, saved);
    EXPECT_EQ(d.params(), a.params());
    ASSERT_EQ(rd.records.size(), 7u);
    EXPECT_EQ(rd.records.back().loss, ra.records.back().loss);
    std::filesystem::remove(path);
}

TEST(TrainLoop, MetricsLogHasOneTabSeparatedLinePerStep) {
    model::MvmsModel m = tiny_model(1, 3);
    std::ostringstream log;
    TrainConfig cfg;
    cfg.view_counts = {3};
    cfg.steps = 4;
    cfg.log = &log;
    train_loop(m, blobs(2), cfg);
    std::istringstream in(log.str());
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 4) << line;
        EXPECT_EQ(line.substr(0, line.find('\t')), std::to_string(lines));
        ++lines;
    }
    EXPECT_EQ(lines, 4u);
}

TEST(TrainLoop, Errors) {
    model::MvmsModel m = tiny_model();
    TrainConfig cfg;
    cfg.view_counts = {3};
    cfg.steps = 1;
    EXPECT_THROW(train_loop(m, {}, cfg), ArgumentError);
    cfg.view_counts = {4};
    EXPECT_THROW(train_loop(m, blobs(1), cfg), GeometryError);
    cfg.view_counts = {};
    EXPECT_THROW(train_loop(m, blobs(1), cfg), ArgumentError);
    cfg.view_counts = {3};
    EXPECT_THROW(train_loop(m, {Array2D(4, 4)}, cfg), ShapeError);
    Array2D nan_img(8, 8);
    nan_img(3, 3) = std::nan("");
    EXPECT_THROW(train_loop(m, {nan_img}, cfg), DivergenceError);
    model::MvmsModel bare{model::ModelConfig{}};
    EXPECT_THROW(train_loop(bare, blobs(1), cfg), GeometryError);
}

TEST(Finetune, ZeroEpochsLeaveParametersUnchanged) {
    model::MvmsModel m = tiny_model();
    const auto before = m.params();
    const tg::ScanGeometry g = small_fan();
    const FinetuneResult r = finetune_unsupervised(m, {tg::project(blobs(1)[0], g, tg::sparse_subset(g, 3))}, 0, TrainConfig{});
    EXPECT_EQ(m.params(), before);
    EXPECT_TRUE(r.epoch_loss.empty());
    EXPECT_THROW(finetune_unsupervised(m, {}, 1, TrainConfig{}), ArgumentError);
}

TEST(Finetune, EpochLossesAreFiniteAndDecrease) {
    model::MvmsModel m = tiny_model(1, 8);
    const tg::ScanGeometry g = small_fan();
    std::vector<Array2D> sinos;
    for (const Array2D& x : blobs(3)) sinos.push_back(tg::project(x, g, tg::sparse_subset(g, 3)));
    TrainConfig cfg;
    cfg.adam.lr = 3e-3;
    const FinetuneResult r = finetune_unsupervised(m, sinos, 8, cfg);
    ASSERT_EQ(r.epoch_loss.size(), 8u);
    for (double l : r.epoch_loss) EXPECT_TRUE(std::isfinite(l));
    EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}
