#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "mvms/model/model.hpp"
#include "mvms/train/adam.hpp"
#include "mvms/train/checkpoint.hpp"
#include "mvms/train/loss.hpp"

namespace mvms::train {

struct TrainConfig {
    std::vector<std::size_t> view_counts; // drawn uniformly per step
    std::uint64_t steps = 0;              // total optimizer steps
    std::uint64_t seed = 0;
    bool flips = true;
    AdamConfig adam;
    LossConfig loss;
    std::ostream* log = nullptr; // step, view_count, loss, l1, ssim_term
    std::string checkpoint_path;
    std::uint64_t checkpoint_every = 0;
};

struct StepRecord {
    std::uint64_t step = 0;
    std::size_t view_count = 0;
    double loss = 0.0;
    double l1 = 0.0;
    double ssim_term = 0.0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<StepRecord> records;
};

namespace detail {

/// Per-step generator: depends only on (seed, stream, index), so a resumed
/// run draws the same values as an uninterrupted one.
inline std::mt19937_64 step_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n));
}

/// Sample index at `step` under a fresh shuffle per epoch.
inline std::size_t epoch_sample(std::uint64_t seed, std::uint64_t step, std::size_t n) {
    const std::uint64_t epoch = step / n;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = step_rng(seed, 1, epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    return order[step % n];
}

inline void log_record(std::ostream* log, const StepRecord& r) {
    if (!log) return;
    *log << r.step << '\t' << r.view_count << '\t' << r.loss << '\t' << r.l1 << '\t' << r.ssim_term << '\n';
}

/// Backward from `terms.total` and an Adam step on every model tensor.
inline StepRecord optimize(model::MvmsModel& m, diff::Tape& t, const std::vector<msgc::MsgcWeights<Var>>& bound,
                           const LossTerms& terms, OptimState& optim, std::uint64_t step, std::size_t q1) {
    StepRecord rec{step, q1, terms.total.value().item(), terms.l1.value().item(),
                   terms.ssim_term.valid() ? terms.ssim_term.value().item() : 0.0};
    if (!std::isfinite(rec.loss))
        throw DivergenceError("non-finite loss " + std::to_string(rec.loss) + " at step " + std::to_string(step) + " (" +
                              std::to_string(q1) + " views)");
    t.backward(terms.total);
    std::vector<diff::Tensor> grads;
    for (const auto& w : bound)
        msgc::for_each_param(w, [&](const std::string& name, const Var& v) {
            grads.push_back(v.grad());
            for (double g : grads.back().values())
                if (!std::isfinite(g))
                    throw DivergenceError("non-finite gradient in '" + name + "' at step " + std::to_string(step));
        });
    adam_step(m.parameter_tensors(), grads, optim);
    return rec;
}

inline void check_dataset(const model::MvmsModel& m, const std::vector<Array2D>& data, const char* who) {
    if (data.empty()) throw ArgumentError(std::string(who) + ": dataset is empty");
    const auto base = m.registry().base();
    if (!base) throw GeometryError(std::string(who) + ": no geometry registered");
    for (const Array2D& a : data)
        if (a.rows() != base->m1 || a.cols() != base->m2)
            throw ShapeError(std::string(who) + ": image " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                             " does not match the grid");
}

} // namespace detail

/// Supervised training on target images; sparse sinograms are simulated per
/// step. Continues from `resume` when given, until cfg.steps.
inline TrainResult train_loop(model::MvmsModel& m, const std::vector<Array2D>& targets, const TrainConfig& cfg,
                              std::optional<Checkpoint> resume = std::nullopt) {
    detail::check_dataset(m, targets, "train_loop");
    if (cfg.view_counts.empty()) throw ArgumentError("train_loop: view-count schedule is empty");
    for (std::size_t q : cfg.view_counts)
        if (!m.registry().contains(q)) throw GeometryError("train_loop: " + std::to_string(q) + " views not registered");
    validate(cfg.loss);

    OptimState optim{cfg.adam, 0, {}, {}};
    std::uint64_t step = 0;
    if (resume) {
        load_into(m, *resume);
        step = resume->step;
        if (resume->optim) optim = *resume->optim;
    }
    TrainResult out;
    for (; step < cfg.steps; ++step) {
        auto rng = detail::step_rng(cfg.seed, 0, step);
        const std::size_t q1 = cfg.view_counts[detail::uniform_index(rng, cfg.view_counts.size())];
        Array2D x_star = targets[detail::epoch_sample(cfg.seed, step, targets.size())];
        const bool fh = (rng() >> 63) != 0, fv = (rng() >> 63) != 0;
        if (cfg.flips && fh) x_star = flip_horizontal(x_star);
        if (cfg.flips && fv) x_star = flip_vertical(x_star);

        const auto ops = m.registry().get(q1);
        const Array2D y_s = ops->project_sparse->apply(Tensor::from_image(x_star)).to_image();
        const refine::StageContext ctx(ops, y_s);
        diff::Tape t;
        const auto bound = m.bind(t);
        const Var x = m.forward(t, ctx, bound);
        const LossTerms terms = loss_terms(x, t.constant(Tensor::from_image(x_star)), cfg.loss);
        const StepRecord rec = detail::optimize(m, t, bound, terms, optim, step, q1);
        detail::log_record(cfg.log, rec);
        out.records.push_back(rec);
        if (cfg.checkpoint_every && !cfg.checkpoint_path.empty() && (step + 1) % cfg.checkpoint_every == 0)
            save_checkpoint(cfg.checkpoint_path, make_checkpoint(m, cfg.loss.gamma, cfg.seed, step + 1, optim));
    }
    out.checkpoint = make_checkpoint(m, cfg.loss.gamma, cfg.seed, step, optim);
    if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, out.checkpoint);
    return out;
}

struct FinetuneResult {
    Checkpoint checkpoint;
    std::vector<StepRecord> records;
    std::vector<double> epoch_loss; // mean loss per epoch
};

/// Training without targets: each step fits one measured sparse sinogram
/// through the unsupervised loss.
inline FinetuneResult finetune_unsupervised(model::MvmsModel& m, const std::vector<Array2D>& sinograms, std::size_t epochs,
                                            const TrainConfig& cfg) {
    if (sinograms.empty()) throw ArgumentError("finetune_unsupervised: no sinograms");
    validate(cfg.loss);
    OptimState optim{cfg.adam, 0, {}, {}};
    FinetuneResult out;
    std::uint64_t step = 0;
    for (std::size_t e = 0; e < epochs; ++e) {
        double total = 0.0;
        for (std::size_t i = 0; i < sinograms.size(); ++i, ++step) {
            const Array2D& y_s = sinograms[detail::epoch_sample(cfg.seed, step, sinograms.size())];
            const refine::StageContext ctx = m.context(y_s);
            diff::Tape t;
            const auto bound = m.bind(t);
            const Var x = m.forward(t, ctx, bound);
            const StepRecord rec = detail::optimize(m, t, bound, unsupervised_terms(x, ctx, cfg.loss), optim, step, y_s.rows());
            detail::log_record(cfg.log, rec);
            out.records.push_back(rec);
            total += rec.loss;
        }
        out.epoch_loss.push_back(total / static_cast<double>(sinograms.size()));
    }
    out.checkpoint = make_checkpoint(m, cfg.loss.gamma, cfg.seed, step, optim);
    if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, out.checkpoint);
    return out;
}

} // namespace mvms::train
