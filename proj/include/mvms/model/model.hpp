#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "mvms/msgc/msgc.hpp"
#include "mvms/refine/refine.hpp"

namespace mvms::model {

using diff::Tape;
using diff::Tensor;
using diff::Var;
using msgc::MsgcParams;
using msgc::MsgcWeights;
using refine::ChannelSet;
using refine::StageContext;

struct ModelConfig {
    std::size_t p = 32;
    std::size_t n = 5;
    std::size_t n_s = 7;
    double slope = 0.01;
    ChannelSet channels = ChannelSet::all();
    bool zero_init = false; // x_0 = 0 instead of P_s^T y_s
    bool shared = true;     // one parameter set for all stages

    std::size_t c_in() const noexcept { return channels.count(); }
    msgc::MsgcConfig msgc() const { return {p, n, c_in(), slope}; }
    bool operator==(const ModelConfig&) const = default;
};

inline void validate(const ModelConfig& c) {
    if (c.n_s < 1) throw ArgumentError("model: stage count n_s must be >= 1");
    msgc::validate(c.msgc());
}

/// Operator handles per view count, all on one base geometry. Unregistered
/// view counts are built on demand with the floor decimation rule.
class GeometryRegistry {
public:
    GeometryRegistry() = default;
    GeometryRegistry(const GeometryRegistry& o) {
        std::lock_guard lock(o.mu_);
        base_ = o.base_;
        ops_ = o.ops_;
    }
    GeometryRegistry& operator=(const GeometryRegistry& o) {
        if (this == &o) return *this;
        std::scoped_lock lock(mu_, o.mu_);
        base_ = o.base_;
        ops_ = o.ops_;
        return *this;
    }

    void add(const tomo::ScanGeometry& g, const tomo::ViewSubset& s) {
        tomo::validate_subset(g, s);
        std::lock_guard lock(mu_);
        if (base_ && !(*base_ == g)) throw GeometryError("register_geometry: geometry differs from the registered base geometry");
        if (auto it = ops_.find(s.q1()); it != ops_.end()) {
            if (!(it->second->subset == s))
                throw GeometryError("register_geometry: " + std::to_string(s.q1()) + " views already registered with a different subset");
            return;
        }
        base_ = g;
        ops_.emplace(s.q1(), refine::make_operators(g, s));
    }

    refine::OperatorsPtr get(std::size_t q1) {
        std::lock_guard lock(mu_);
        if (auto it = ops_.find(q1); it != ops_.end()) return it->second;
        if (!base_) throw GeometryError("no geometry registered for " + std::to_string(q1) + " views");
        auto ops = refine::make_operators(*base_, tomo::sparse_subset(*base_, q1));
        ops_.emplace(q1, ops);
        return ops;
    }

    bool contains(std::size_t q1) const {
        std::lock_guard lock(mu_);
        return ops_.count(q1) != 0;
    }
    std::vector<std::size_t> view_counts() const {
        std::lock_guard lock(mu_);
        std::vector<std::size_t> out;
        for (const auto& kv : ops_) out.push_back(kv.first);
        return out;
    }
    std::optional<tomo::ScanGeometry> base() const {
        std::lock_guard lock(mu_);
        return base_;
    }

private:
    mutable std::mutex mu_;
    std::optional<tomo::ScanGeometry> base_;
    std::map<std::size_t, refine::OperatorsPtr> ops_;
};

/// Unfolded reconstruction network: n_s stages x_l = D(R(x_{l-1})).
class MvmsModel {
public:
    explicit MvmsModel(ModelConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
        validate(cfg_);
        const std::size_t sets = cfg_.shared ? 1 : cfg_.n_s;
        for (std::size_t k = 0; k < sets; ++k) params_.push_back(msgc::init_params(cfg_.msgc(), seed + k));
    }

    const ModelConfig& config() const noexcept { return cfg_; }
    std::vector<MsgcParams>& params() noexcept { return params_; }
    const std::vector<MsgcParams>& params() const noexcept { return params_; }
    std::size_t param_count() const {
        std::size_t total = 0;
        for (const auto& p : params_) total += p.count();
        return total;
    }

    /// Parameter set used by stage l (1-based); stages past n_s reuse the last.
    std::size_t param_index(std::size_t stage) const {
        if (cfg_.shared) return 0;
        return std::min(stage, cfg_.n_s) - 1;
    }

    void register_geometry(const tomo::ScanGeometry& g, const tomo::ViewSubset& s) { registry_.add(g, s); }
    GeometryRegistry& registry() noexcept { return registry_; }
    const GeometryRegistry& registry() const noexcept { return registry_; }

    StageContext context(const Array2D& y_s) const { return StageContext(registry_.get(y_s.rows()), y_s); }

    Tensor initial_image(const StageContext& ctx) const {
        return cfg_.zero_init ? Tensor(ctx.image_shape()) : ctx.x0();
    }

    /// One stage on a tape.
    Var stage(const Var& x_prev, const StageContext& ctx, const MsgcWeights<Var>& w) const {
        return msgc::apply_D(refine::assemble(x_prev, ctx, cfg_.channels), w, cfg_.slope);
    }

    /// Differentiable forward pass. `weights` holds the bound parameter sets.
    std::vector<Var> forward_stages(Tape& t, const StageContext& ctx, const std::vector<MsgcWeights<Var>>& weights) const {
        if (weights.size() != params_.size()) throw ArgumentError("forward: wrong number of bound parameter sets");
        std::vector<Var> xs;
        Var x = t.constant(initial_image(ctx));
        for (std::size_t l = 1; l <= cfg_.n_s; ++l) {
            x = stage(x, ctx, weights[param_index(l)]);
            xs.push_back(x);
        }
        return xs;
    }

    Var forward(Tape& t, const StageContext& ctx, const std::vector<MsgcWeights<Var>>& weights) const {
        return forward_stages(t, ctx, weights).back();
    }

    std::vector<MsgcWeights<Var>> bind(Tape& t, bool requires_grad = true) const {
        std::vector<MsgcWeights<Var>> out;
        for (const auto& p : params_) out.push_back(msgc::bind(t, p.weights, requires_grad));
        return out;
    }

    /// Inference: x_{n_s} for the sparse sinogram y_s.
    Array2D reconstruct(const Array2D& y_s) const {
        const StageContext ctx = context(y_s);
        Tape t;
        return forward(t, ctx, bind(t, false)).value().to_image();
    }

    /// All intermediate images x_1..x_{n_s}.
    std::vector<Array2D> reconstruct_stages(const Array2D& y_s) const {
        const StageContext ctx = context(y_s);
        Tape t;
        std::vector<Array2D> out;
        for (const Var& x : forward_stages(t, ctx, bind(t, false))) out.push_back(x.value().to_image());
        return out;
    }

    /// Flat list of every trainable tensor, in checkpoint order.
    std::vector<Tensor*> parameter_tensors() {
        std::vector<Tensor*> out;
        for (auto& p : params_) msgc::for_each_param(p.weights, [&](const std::string&, Tensor& t) { out.push_back(&t); });
        return out;
    }
    std::vector<std::string> parameter_names() const {
        std::vector<std::string> out;
        for (std::size_t k = 0; k < params_.size(); ++k)
            msgc::for_each_param(params_[k].weights, [&](const std::string& name, const Tensor&) {
                out.push_back(cfg_.shared ? name : "stage." + std::to_string(k + 1) + "." + name);
            });
        return out;
    }

private:
    ModelConfig cfg_;
    std::vector<MsgcParams> params_;
    mutable GeometryRegistry registry_;
};

struct PnpStep {
    double metric = 0.0;
    bool stop = false;
};

using PnpCallback = std::function<PnpStep(std::size_t iteration, const Array2D& image)>;

struct PnpTrajectory {
    std::vector<Array2D> images;
    std::vector<double> metrics; // empty without a callback
};

/// Reapplies the stage map past n_s, recording each iterate.
inline PnpTrajectory run_pnp(const Array2D& y_s, const MvmsModel& model, std::size_t max_iters, const PnpCallback& cb = {}) {
    if (max_iters < 1) throw ArgumentError("run_pnp: max_iters must be >= 1");
    const StageContext ctx = model.context(y_s);
    PnpTrajectory out;
    Tensor x = model.initial_image(ctx);
    for (std::size_t k = 1; k <= max_iters; ++k) {
        Tape t;
        const auto weights = model.bind(t, false);
        x = model.stage(t.constant(std::move(x)), ctx, weights[model.param_index(k)]).value();
        out.images.push_back(x.to_image());
        if (cb) {
            const PnpStep s = cb(k, out.images.back());
            out.metrics.push_back(s.metric);
            if (s.stop) break;
        }
    }
    return out;
}

} // namespace mvms::model
