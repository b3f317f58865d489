#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "mvms/bench/fista.hpp"
#include "mvms/bench/metrics.hpp"
#include "mvms/bench/phantom.hpp"
#include "mvms/model/model.hpp"
#include "mvms/train/train.hpp"

namespace mvms::bench {

/// Desk-scale setting: the fan preset shrunk 16x (32 x 32 grid, 64 detectors)
/// with 60 full views.
struct ToyConfig {
    std::size_t scale = 16;
    std::size_t n_views = 60;
    std::vector<std::size_t> schedule{15, 30};
    std::size_t p = 8;
    std::size_t n = 2;
    std::size_t n_s = 3;
    std::uint64_t steps = 500;
    double lr = 3e-3;
    std::size_t n_train = 64;
    std::size_t n_val = 3;
    std::size_t n_test = 8;
    std::uint64_t seed = 7;
    train::LossConfig loss;
    FistaOptions fista;
};

inline tomo::ScanGeometry toy_geometry(const ToyConfig& c) {
    tomo::GeometryConfig g = tomo::scaled_config(tomo::preset_config("fan-1024"), c.scale);
    g.n_views = c.n_views;
    return tomo::make_geometry(g);
}

struct ToyData {
    tomo::ScanGeometry geometry;
    std::vector<Array2D> train, val, test;
};

/// Disjoint random-ellipse phantoms per split (seeds never overlap).
inline ToyData make_toy_data(const ToyConfig& c) {
    ToyData d{toy_geometry(c), {}, {}, {}};
    PhantomSpec s;
    s.kind = PhantomKind::random_ellipses;
    s.m1 = d.geometry.m1;
    s.m2 = d.geometry.m2;
    std::uint64_t next = c.seed * 1000003ull;
    const auto fill = [&](std::vector<Array2D>& out, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) {
            s.seed = next++;
            out.push_back(make_phantom(s));
        }
    };
    fill(d.train, c.n_train);
    fill(d.val, c.n_val);
    fill(d.test, c.n_test);
    return d;
}

inline model::MvmsModel make_toy_model(const ToyConfig& c, const tomo::ScanGeometry& g,
                                       refine::ChannelSet channels = refine::ChannelSet::all()) {
    model::ModelConfig mc;
    mc.p = c.p;
    mc.n = c.n;
    mc.n_s = c.n_s;
    mc.channels = channels;
    model::MvmsModel m(mc, c.seed);
    for (std::size_t q : c.schedule) m.register_geometry(g, tomo::sparse_subset(g, q));
    return m;
}

inline train::TrainResult train_toy(model::MvmsModel& m, const ToyData& d, const ToyConfig& c, std::ostream* log = nullptr) {
    train::TrainConfig tc;
    tc.view_counts = c.schedule;
    tc.steps = c.steps;
    tc.seed = c.seed;
    tc.adam.lr = c.lr;
    tc.loss = c.loss;
    tc.log = log;
    return train::train_loop(m, d.train, tc);
}

/// Mean of per-image records.
struct MeanMetrics {
    MetricsRecord mean;
    std::size_t count = 0;

    void add(const MetricsRecord& r) {
        const double k = static_cast<double>(count++);
        mean.psnr = (mean.psnr * k + r.psnr) / (k + 1.0);
        mean.ssim = (mean.ssim * k + r.ssim) / (k + 1.0);
        mean.rmse_hu = (mean.rmse_hu * k + r.rmse_hu) / (k + 1.0);
    }
};

template <class Reconstruct>
MetricsRecord evaluate_set(const std::vector<Array2D>& images, const tomo::ScanGeometry& g, std::size_t q1, Reconstruct&& rec) {
    const tomo::ViewSubset s = tomo::sparse_subset(g, q1);
    MeanMetrics acc;
    for (const Array2D& x : images) acc.add(evaluate(rec(tomo::project(x, g, s), s), x));
    return acc.mean;
}

inline MetricsRecord evaluate_fbp(const std::vector<Array2D>& images, const tomo::ScanGeometry& g, std::size_t q1) {
    return evaluate_set(images, g, q1,
                        [&](const Array2D& y, const tomo::ViewSubset& s) { return tomo::FilteredBackprojection(g, s).apply(y); });
}

inline MetricsRecord evaluate_fista(const std::vector<Array2D>& images, const tomo::ScanGeometry& g, std::size_t q1, double lambda,
                                    const FistaOptions& opt = {}) {
    return evaluate_set(images, g, q1,
                        [&](const Array2D& y, const tomo::ViewSubset& s) { return fista_tv(y, g, s, lambda, opt).image; });
}

inline MetricsRecord evaluate_model(const std::vector<Array2D>& images, const tomo::ScanGeometry& g, std::size_t q1,
                                    const model::MvmsModel& m) {
    return evaluate_set(images, g, q1, [&](const Array2D& y, const tomo::ViewSubset&) { return m.reconstruct(y); });
}

/// FISTA-TV with lambda tuned on the validation split.
inline MetricsRecord evaluate_fista_tuned(const ToyData& d, std::size_t q1, const FistaOptions& opt, double* lambda_out = nullptr) {
    const tomo::ViewSubset s = tomo::sparse_subset(d.geometry, q1);
    const double lam = tune_lambda(d.val, d.geometry, s, lambda_grid(operator_norm_sq(d.geometry, s)), opt);
    if (lambda_out) *lambda_out = lam;
    return evaluate_fista(d.test, d.geometry, q1, lam, opt);
}

struct AblationRow {
    std::size_t views = 0;
    MetricsRecord metrics;
};

struct AblationResult {
    refine::Variant variant;
    std::size_t channels = 0;
    std::vector<AblationRow> rows;
};

/// Trains the toy model on the variant's channel subset and evaluates it on
/// the held-out split at every schedule view count.
inline AblationResult run_ablation(refine::Variant v, const ToyConfig& c, const ToyData& d, std::ostream* log = nullptr) {
    const refine::ChannelSet ch = refine::variant_channels(v);
    model::MvmsModel m = make_toy_model(c, d.geometry, ch);
    train_toy(m, d, c, log);
    AblationResult out{v, ch.count(), {}};
    for (std::size_t q : c.schedule) out.rows.push_back({q, evaluate_model(d.test, d.geometry, q, m)});
    return out;
}

inline AblationResult run_ablation(refine::Variant v, const ToyConfig& c) { return run_ablation(v, c, make_toy_data(c)); }

/// Per-iteration mean PSNR of plug-and-play iterations on data simulated with
/// a perturbed geometry while the model keeps its nominal operators.
inline std::vector<double> pnp_perturbed_psnr(const model::MvmsModel& m, const std::vector<Array2D>& images,
                                              const tomo::ScanGeometry& g, std::size_t q1, double rel, std::size_t iters,
                                              std::uint64_t seed) {
    const tomo::ScanGeometry pg = tomo::perturb_geometry(g, rel, seed);
    const tomo::ViewSubset s = tomo::sparse_subset(g, q1);
    std::vector<double> mean(iters, 0.0);
    for (const Array2D& x : images) {
        const auto traj = model::run_pnp(tomo::project(x, pg, s), m, iters, [&](std::size_t, const Array2D& img) {
            return model::PnpStep{psnr(img, x), false};
        });
        for (std::size_t k = 0; k < iters; ++k) mean[k] += traj.metrics[k] / static_cast<double>(images.size());
    }
    return mean;
}

/// Tab-separated table with a one-line header.
inline void write_metrics_table(std::ostream& out, const std::vector<std::pair<std::string, MetricsRecord>>& rows) {
    out << "method\tpsnr\tssim\trmse_hu\n";
    for (const auto& [name, r] : rows) out << name << '\t' << r.psnr << '\t' << r.ssim << '\t' << r.rmse_hu << '\n';
}

} // namespace mvms::bench
