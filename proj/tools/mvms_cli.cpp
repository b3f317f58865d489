#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "mvms/mvms.hpp"

using namespace mvms;
namespace tg = mvms::tomo;

namespace {

struct Common {
    std::string geometry = "fan-1024";
    std::size_t views = 0; // 0: every view
    std::uint64_t seed = 0;
    std::string out;
    std::string checkpoint;
    std::size_t epochs = 1;
    double gamma = 1.0;
    std::size_t stages = 7;
    std::size_t depth = 5;
    std::size_t width = 32;
};

tg::ViewSubset subset_for(const tg::ScanGeometry& g, std::size_t views) {
    return views == 0 ? tg::full_subset(g) : tg::sparse_subset(g, views);
}

void print_metrics(const std::string& name, const bench::MetricsRecord& r) {
    bench::write_metrics_table(std::cout, {{name, r}});
}

model::MvmsModel load_model(const Common& c, const tg::ScanGeometry& g, std::size_t q1) {
    if (c.checkpoint.empty()) throw ArgumentError("--checkpoint is required");
    model::MvmsModel m = train::model_from(train::load_checkpoint(c.checkpoint));
    m.register_geometry(g, tg::sparse_subset(g, q1));
    return m;
}

std::vector<Array2D> load_images(const std::vector<std::string>& paths) {
    std::vector<Array2D> out;
    for (const auto& p : paths) out.push_back(bench::load_image(p));
    return out;
}

int selftest() {
    bool ok = true;
    const std::size_t pc = msgc::param_count(32, 5, 8);
    std::printf("param_count(32,5,8)=%zu\n", pc);
    ok = ok && pc == 293441;

    for (tg::Beam beam : {tg::Beam::parallel, tg::Beam::fan}) {
        tg::GeometryConfig gc;
        gc.beam = beam;
        gc.n_views = 12;
        gc.n_det = 24;
        gc.grid_m1 = gc.grid_m2 = 16;
        if (beam == tg::Beam::fan) {
            gc.det_spacing_mm = 2.0;
            gc.src_dist_mm = 80.0;
            gc.det_dist_mm = 64.0;
        }
        const tg::ScanGeometry g = tg::make_geometry(gc);
        const tg::ViewSubset s = tg::full_subset(g);
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Array2D x(16, 16), y(12, 24);
        for (double& v : x.values()) v = u(rng);
        for (double& v : y.values()) v = u(rng);
        const Array2D px = tg::project(x, g, s);
        const double gap = std::abs(dot(px, y) - dot(x, tg::backproject_adjoint(y, g, s))) / (norm2(px) * norm2(y));
        std::printf("adjoint(%s)=%.3e\n", tg::to_string(beam).c_str(), gap);
        ok = ok && gap < 1e-10;
    }

    tg::GeometryConfig gc;
    gc.beam = tg::Beam::fan;
    gc.n_views = 6;
    gc.n_det = 16;
    gc.grid_m1 = gc.grid_m2 = 8;
    gc.det_spacing_mm = 2.0;
    gc.src_dist_mm = 40.0;
    gc.det_dist_mm = 30.0;
    const tg::ScanGeometry g = tg::make_geometry(gc);
    model::ModelConfig mc;
    mc.p = 2;
    mc.n = 1;
    mc.n_s = 1;
    model::MvmsModel m(mc, 3);
    m.register_geometry(g, tg::sparse_subset(g, 3));
    Array2D x_star(8, 8);
    for (std::size_t i = 0; i < x_star.size(); ++i) x_star[i] = 0.5 + 0.4 * std::sin(0.7 * static_cast<double>(i));
    const refine::StageContext ctx = m.context(tg::project(x_star, g, tg::sparse_subset(g, 3)));
    const auto loss = [&](bool grad, std::vector<double>* out) {
        diff::Tape t;
        const auto w = m.bind(t, grad);
        const diff::Var l = train::total_loss(m.forward(t, ctx, w), t.constant(diff::Tensor::from_image(x_star)));
        if (grad) {
            t.backward(l);
            msgc::for_each_param(w[0], [&](const std::string&, const diff::Var& v) {
                out->insert(out->end(), v.grad().values().begin(), v.grad().values().end());
            });
        }
        return l.value().item();
    };
    std::vector<double> analytic, numeric;
    loss(true, &analytic);
    for (diff::Tensor* p : m.parameter_tensors())
        for (std::size_t k = 0; k < p->size(); ++k) {
            const double orig = (*p)[k];
            (*p)[k] = orig + 1e-6;
            const double up = loss(false, nullptr);
            (*p)[k] = orig - 1e-6;
            const double dn = loss(false, nullptr);
            (*p)[k] = orig;
            numeric.push_back((up - dn) / 2e-6);
        }
    double d = 0.0, n = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        d += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        n += numeric[i] * numeric[i];
    }
    const double rel = std::sqrt(d / std::max(n, 1e-300));
    std::printf("gradient_rel_err=%.3e\n", rel);
    ok = ok && rel < 1e-4;
    std::printf("%s\n", ok ? "selftest ok" : "selftest FAILED");
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-view multi-scale sparse-view CT reconstruction"};
    app.require_subcommand(1);
    Common c;

    const auto add_geometry = [&](CLI::App* sub) {
        sub->add_option("--geometry", c.geometry, "Preset (fan-1024, parallel-720, optionally @k) or config file")
            ->capture_default_str();
        sub->add_option("--views", c.views, "Number of sparse views (0: all)")->capture_default_str();
    };
    const auto add_model = [&](CLI::App* sub) {
        sub->add_option("--stages", c.stages, "Refinement stages")->capture_default_str();
        sub->add_option("--depth", c.depth, "Multi-scale levels in the correction module")->capture_default_str();
        sub->add_option("--width", c.width, "Feature channels")->capture_default_str();
    };

    // phantom
    std::string kind = "shepp_logan";
    std::size_t size = 256, count = 1;
    auto* phantom = app.add_subcommand("phantom", "Write phantom images");
    phantom->add_option("--kind", kind, "shepp_logan, random_ellipses or disk")->capture_default_str();
    phantom->add_option("--size", size, "Grid size")->capture_default_str();
    phantom->add_option("--count", count, "Number of images (seeds seed..seed+count-1)")->capture_default_str();
    phantom->add_option("--seed", c.seed);
    phantom->add_option("--out", c.out, "Output file; with --count > 1 a prefix for <out>_<i>.tgrd")->required();

    // project / fbp
    std::string in, ref;
    auto* project = app.add_subcommand("project", "Image to sinogram");
    add_geometry(project);
    project->add_option("--in", in, "Image file")->required()->check(CLI::ExistingFile);
    project->add_option("--out", c.out)->required();

    auto* fbp = app.add_subcommand("fbp", "Filtered backprojection of a sinogram");
    add_geometry(fbp);
    fbp->add_option("--in", in, "Sinogram file")->required()->check(CLI::ExistingFile);
    fbp->add_option("--ref", ref, "Reference image: print metrics")->check(CLI::ExistingFile);
    fbp->add_option("--out", c.out)->required();

    // train
    std::vector<std::size_t> schedule{15, 30};
    std::uint64_t steps = 500;
    double lr = 1e-4;
    std::size_t n_phantoms = 64;
    std::string manifest, log_path, resume;
    auto* trn = app.add_subcommand("train", "Supervised training on simulated sparse sinograms");
    trn->add_option("--geometry", c.geometry)->capture_default_str();
    trn->add_option("--views", schedule, "View counts drawn per step")->capture_default_str();
    trn->add_option("--steps", steps)->capture_default_str();
    trn->add_option("--lr", lr)->capture_default_str();
    trn->add_option("--gamma", c.gamma, "SSIM weight in the loss")->capture_default_str();
    trn->add_option("--seed", c.seed);
    trn->add_option("--manifest", manifest, "Dataset manifest (train split is used)")->check(CLI::ExistingFile);
    trn->add_option("--phantoms", n_phantoms, "Random-ellipse images when no manifest is given")->capture_default_str();
    trn->add_option("--log", log_path, "Per-step metrics log");
    trn->add_option("--resume", resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
    trn->add_option("--out", c.out, "Checkpoint to write")->required();
    add_model(trn);

    // reconstruct / pnp
    auto* rec = app.add_subcommand("reconstruct", "Checkpoint + sparse sinogram to image");
    rec->add_option("--geometry", c.geometry)->capture_default_str();
    rec->add_option("--checkpoint", c.checkpoint)->required()->check(CLI::ExistingFile);
    rec->add_option("--in", in, "Sparse sinogram")->required()->check(CLI::ExistingFile);
    rec->add_option("--ref", ref, "Reference image: print metrics")->check(CLI::ExistingFile);
    rec->add_option("--out", c.out)->required();

    std::size_t iters = 20;
    auto* pnp = app.add_subcommand("pnp", "Plug-and-play iterations of the trained stage");
    pnp->add_option("--geometry", c.geometry)->capture_default_str();
    pnp->add_option("--checkpoint", c.checkpoint)->required()->check(CLI::ExistingFile);
    pnp->add_option("--in", in, "Sparse sinogram")->required()->check(CLI::ExistingFile);
    pnp->add_option("--iters", iters)->capture_default_str();
    pnp->add_option("--ref", ref, "Reference image: print PSNR per iteration")->check(CLI::ExistingFile);
    pnp->add_option("--out", c.out)->required();

    // finetune
    std::vector<std::string> sinos;
    auto* ft = app.add_subcommand("finetune", "Unsupervised fine-tuning on measured sparse sinograms");
    ft->add_option("--geometry", c.geometry)->capture_default_str();
    ft->add_option("--checkpoint", c.checkpoint)->required()->check(CLI::ExistingFile);
    ft->add_option("--in", sinos, "Sparse sinograms (same view count)")->required()->check(CLI::ExistingFile);
    ft->add_option("--epochs", c.epochs)->capture_default_str();
    ft->add_option("--gamma", c.gamma)->capture_default_str();
    ft->add_option("--lr", lr)->capture_default_str();
    ft->add_option("--seed", c.seed);
    ft->add_option("--out", c.out, "Checkpoint to write")->required();

    // eval
    double mu_water = 0.2, hu_slope = 1000.0, range = 1.0;
    auto* ev = app.add_subcommand("eval", "Metrics table for an image against a reference");
    ev->add_option("--in", in)->required()->check(CLI::ExistingFile);
    ev->add_option("--ref", ref)->required()->check(CLI::ExistingFile);
    ev->add_option("--range", range, "Dynamic range for PSNR and SSIM")->capture_default_str();
    ev->add_option("--mu-water", mu_water)->capture_default_str();
    ev->add_option("--hu-slope", hu_slope)->capture_default_str();

    // ablate
    std::vector<std::string> variants{"a", "b", "c", "d", "e", "f", "g"};
    bench::ToyConfig toy;
    auto* abl = app.add_subcommand("ablate", "Train and evaluate channel-subset variants on toy data");
    abl->add_option("--variant", variants, "Variants a..g")->capture_default_str();
    abl->add_option("--steps", toy.steps)->capture_default_str();
    abl->add_option("--seed", toy.seed)->capture_default_str();
    abl->add_option("--stages", toy.n_s)->capture_default_str();
    abl->add_option("--depth", toy.n)->capture_default_str();
    abl->add_option("--width", toy.p)->capture_default_str();
    abl->add_option("--gamma", toy.loss.gamma)->capture_default_str();
    abl->add_option("--out", c.out, "Also write the table here");

    auto* self = app.add_subcommand("selftest", "Adjoint, gradient and parameter-count checks");

    CLI11_PARSE(app, argc, argv);

    try {
        if (phantom->parsed()) {
            bench::PhantomSpec s;
            s.kind = bench::parse_phantom_kind(kind);
            s.m1 = s.m2 = size;
            for (std::size_t i = 0; i < count; ++i) {
                s.seed = c.seed + i;
                const std::string path = count == 1 ? c.out : c.out + "_" + std::to_string(i) + ".tgrd";
                bench::save_image(path, bench::make_phantom(s));
            }
            return 0;
        }
        if (project->parsed()) {
            const tg::ScanGeometry g = tg::load_geometry(c.geometry);
            bench::save_image(c.out, tg::project(bench::load_image(in), g, subset_for(g, c.views)));
            return 0;
        }
        if (fbp->parsed()) {
            const tg::ScanGeometry g = tg::load_geometry(c.geometry);
            const Array2D y = bench::load_image(in);
            const std::size_t q = c.views ? c.views : y.rows();
            const Array2D x = tg::FilteredBackprojection(g, subset_for(g, q == g.n_views() ? 0 : q)).apply(y);
            bench::save_image(c.out, x);
            if (!ref.empty()) print_metrics("fbp", bench::evaluate(x, bench::load_image(ref)));
            return 0;
        }
        if (trn->parsed()) {
            const tg::ScanGeometry g = tg::load_geometry(c.geometry);
            std::vector<Array2D> targets;
            if (!manifest.empty()) {
                targets = load_images(bench::load_manifest(manifest).paths(bench::Split::train));
            } else {
                bench::PhantomSpec s;
                s.kind = bench::PhantomKind::random_ellipses;
                s.m1 = g.m1;
                s.m2 = g.m2;
                for (std::size_t i = 0; i < n_phantoms; ++i) {
                    s.seed = c.seed * 1000003ull + i;
                    targets.push_back(bench::make_phantom(s));
                }
            }
            model::ModelConfig mc;
            mc.p = c.width;
            mc.n = c.depth;
            mc.n_s = c.stages;
            model::MvmsModel m(mc, c.seed);
            for (std::size_t q : schedule) m.register_geometry(g, tg::sparse_subset(g, q));
            std::ofstream log;
            train::TrainConfig tc;
            tc.view_counts = schedule;
            tc.steps = steps;
            tc.seed = c.seed;
            tc.adam.lr = lr;
            tc.loss.gamma = c.gamma;
            tc.checkpoint_path = c.out;
            tc.checkpoint_every = 100;
            if (!log_path.empty()) {
                log.open(log_path);
                if (!log) throw FormatError("cannot open '" + log_path + "' for writing");
                tc.log = &log;
            }
            std::optional<train::Checkpoint> from;
            if (!resume.empty()) from = train::load_checkpoint(resume);
            const auto r = train::train_loop(m, targets, tc, from);
            if (!r.records.empty()) std::printf("final loss %.6g after %llu steps\n", r.records.back().loss,
                                                static_cast<unsigned long long>(r.checkpoint.step));
            return 0;
        }
        if (rec->parsed()) {
            const tg::ScanGeometry g = tg::load_geometry(c.geometry);
            const Array2D y = bench::load_image(in);
            const model::MvmsModel m = load_model(c, g, y.rows());
            const Array2D x = m.reconstruct(y);
            bench::save_image(c.out, x);
            if (!ref.empty()) print_metrics("model", bench::evaluate(x, bench::load_image(ref)));
            return 0;
        }
        if (pnp->parsed()) {
            const tg::ScanGeometry g = tg::load_geometry(c.geometry);
            const Array2D y = bench::load_image(in);
            const model::MvmsModel m = load_model(c, g, y.rows());
            model::PnpCallback cb;
            Array2D x_ref;
            if (!ref.empty()) {
                x_ref = bench::load_image(ref);
                cb = [&](std::size_t k, const Array2D& img) {
                    const double p = bench::psnr(img, x_ref);
                    std::printf("%zu\t%.4f\n", k, p);
                    return model::PnpStep{p, false};
                };
            }
            const auto traj = model::run_pnp(y, m, iters, cb);
            bench::save_image(c.out, traj.images.back());
            return 0;
        }
        if (ft->parsed()) {
            const tg::ScanGeometry g = tg::load_geometry(c.geometry);
            const std::vector<Array2D> ys = load_images(sinos);
            model::MvmsModel m = load_model(c, g, ys.front().rows());
            train::TrainConfig tc;
            tc.seed = c.seed;
            tc.adam.lr = lr;
            tc.loss.gamma = c.gamma;
            tc.checkpoint_path = c.out;
            const auto r = train::finetune_unsupervised(m, ys, c.epochs, tc);
            for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) std::printf("epoch %zu\t%.6g\n", e + 1, r.epoch_loss[e]);
            return 0;
        }
        if (ev->parsed()) {
            const Array2D x = bench::load_image(in), r = bench::load_image(ref);
            print_metrics(in, bench::evaluate(x, r, range, bench::HuMapping{mu_water, hu_slope}));
            return 0;
        }
        if (abl->parsed()) {
            const bench::ToyData data = bench::make_toy_data(toy);
            std::ostringstream table;
            table << "variant\tchannels\tviews\tpsnr\tssim\trmse_hu\n";
            for (const auto& v : variants) {
                const auto r = bench::run_ablation(refine::parse_variant(v), toy, data);
                for (const auto& row : r.rows)
                    table << v << '\t' << r.channels << '\t' << row.views << '\t' << row.metrics.psnr << '\t' << row.metrics.ssim
                          << '\t' << row.metrics.rmse_hu << '\n';
            }
            std::cout << table.str();
            if (!c.out.empty()) {
                std::ofstream f(c.out);
                if (!f) throw FormatError("cannot open '" + c.out + "' for writing");
                f << table.str();
            }
            return 0;
        }
        if (self->parsed()) return selftest();
    } catch (const mvms::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
