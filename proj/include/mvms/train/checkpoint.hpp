#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvms/core/binary_io.hpp"
#include "mvms/model/model.hpp"
#include "mvms/train/adam.hpp"

namespace mvms::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Model hyperparameters, parameters, optional optimizer state, and the
/// training RNG position (seed, step).
struct Checkpoint {
    model::ModelConfig config;
    double gamma = 1.0;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    std::vector<msgc::MsgcParams> params;
    std::optional<OptimState> optim;
};

inline Checkpoint make_checkpoint(const model::MvmsModel& m, double gamma, std::uint64_t seed, std::uint64_t step,
                                  std::optional<OptimState> optim = std::nullopt) {
    return {m.config(), gamma, seed, step, m.params(), std::move(optim)};
}

/// Replaces the model's parameters. Hyperparameters must agree.
inline void load_into(model::MvmsModel& m, const Checkpoint& c) {
    if (!(m.config() == c.config)) {
        const auto& a = c.config;
        const auto& b = m.config();
        throw CheckpointMismatch("checkpoint has (p, n, n_s, c_in, shared) = (" + std::to_string(a.p) + ", " + std::to_string(a.n) +
                                 ", " + std::to_string(a.n_s) + ", " + std::to_string(a.c_in()) + ", " + std::to_string(a.shared) +
                                 "), model has (" + std::to_string(b.p) + ", " + std::to_string(b.n) + ", " +
                                 std::to_string(b.n_s) + ", " + std::to_string(b.c_in()) + ", " + std::to_string(b.shared) + ")");
    }
    m.params() = c.params;
}

inline model::MvmsModel model_from(const Checkpoint& c) {
    model::MvmsModel m(c.config);
    load_into(m, c);
    return m;
}

namespace detail {

inline std::vector<std::pair<std::string, const diff::Tensor*>> param_blobs(const Checkpoint& c) {
    std::vector<std::pair<std::string, const diff::Tensor*>> out;
    for (std::size_t k = 0; k < c.params.size(); ++k)
        msgc::for_each_param(c.params[k].weights, [&](const std::string& name, const diff::Tensor& t) {
            out.emplace_back(c.config.shared ? name : "stage." + std::to_string(k + 1) + "." + name, &t);
        });
    return out;
}

inline void write_blob(std::ostream& out, const std::string& name, const diff::Tensor& t) {
    io::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) io::put_u64(out, d);
    for (double v : t.values()) io::put_f64(out, v);
}

inline void read_blob(std::istream& in, const std::string& expect_name, diff::Tensor& t) {
    const std::uint32_t len = io::get_u32(in, "blob name length");
    if (len > 4096) throw FormatError("checkpoint: implausible blob name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("truncated input reading blob name");
    if (name != expect_name) throw FormatError("checkpoint: expected blob '" + expect_name + "', found '" + name + "'");
    const std::uint32_t rank = io::get_u32(in, "blob rank");
    diff::Shape shape(rank);
    for (auto& d : shape) d = io::get_u64(in, "blob dims");
    if (shape != t.shape())
        throw FormatError("checkpoint: blob '" + name + "' has shape " + diff::shape_string(shape) + ", expected " +
                          diff::shape_string(t.shape()));
    for (double& v : t.values()) v = io::get_f64(in, "blob payload");
}

} // namespace detail

/// Little-endian layout: "MVMS", u32 version, u32 p, n, n_s, c_in, f64 slope,
/// f64 gamma, u32 channel mask, u32 flags, u64 seed, u64 step, u64 param
/// count, optimizer header, u32 blob count, then blobs.
inline void write_checkpoint(std::ostream& out, const Checkpoint& c) {
    const auto& cfg = c.config;
    out.write("MVMS", 4);
    io::put_u32(out, kCheckpointVersion);
    io::put_u32(out, static_cast<std::uint32_t>(cfg.p));
    io::put_u32(out, static_cast<std::uint32_t>(cfg.n));
    io::put_u32(out, static_cast<std::uint32_t>(cfg.n_s));
    io::put_u32(out, static_cast<std::uint32_t>(cfg.c_in()));
    io::put_f64(out, cfg.slope);
    io::put_f64(out, c.gamma);
    io::put_u32(out, cfg.channels.mask());
    io::put_u32(out, (cfg.shared ? 1u : 0u) | (cfg.zero_init ? 2u : 0u) | (c.optim ? 4u : 0u));
    io::put_u64(out, c.seed);
    io::put_u64(out, c.step);
    const auto blobs = detail::param_blobs(c);
    std::uint64_t count = 0;
    for (const auto& b : blobs) count += b.second->size();
    io::put_u64(out, count);
    const OptimState empty;
    const OptimState& o = c.optim ? *c.optim : empty;
    io::put_f64(out, o.cfg.lr);
    io::put_f64(out, o.cfg.beta1);
    io::put_f64(out, o.cfg.beta2);
    io::put_f64(out, o.cfg.eps);
    io::put_u64(out, o.step);
    const bool moments = c.optim && !o.m.empty();
    if (moments && o.m.size() != blobs.size()) throw ShapeError("write_checkpoint: optimizer state does not match parameters");
    io::put_u32(out, static_cast<std::uint32_t>(moments ? 3 * blobs.size() : blobs.size()));
    for (const auto& [name, t] : blobs) detail::write_blob(out, name, *t);
    if (moments) {
        for (std::size_t i = 0; i < blobs.size(); ++i) detail::write_blob(out, "adam.m." + blobs[i].first, o.m[i]);
        for (std::size_t i = 0; i < blobs.size(); ++i) detail::write_blob(out, "adam.v." + blobs[i].first, o.v[i]);
    }
    if (!out) throw FormatError("write_checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& in) {
    io::expect_magic(in, "MVMS", "checkpoint");
    const std::uint32_t version = io::get_u32(in, "version");
    if (version != kCheckpointVersion)
        throw CheckpointMismatch("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
    Checkpoint c;
    c.config.p = io::get_u32(in, "p");
    c.config.n = io::get_u32(in, "n");
    c.config.n_s = io::get_u32(in, "n_s");
    const std::uint32_t c_in = io::get_u32(in, "c_in");
    c.config.slope = io::get_f64(in, "slope");
    c.gamma = io::get_f64(in, "gamma");
    const std::uint32_t mask = io::get_u32(in, "channel mask");
    const std::uint32_t flags = io::get_u32(in, "flags");
    c.seed = io::get_u64(in, "seed");
    c.step = io::get_u64(in, "step");
    const std::uint64_t count = io::get_u64(in, "param count");
    try {
        c.config.channels = refine::ChannelSet::from_mask(mask);
        c.config.shared = flags & 1u;
        c.config.zero_init = flags & 2u;
        model::validate(c.config);
    } catch (const Error& e) {
        throw FormatError(std::string("checkpoint: invalid header: ") + e.what());
    }
    if (c.config.channels.count() != c_in) throw FormatError("checkpoint: c_in disagrees with the channel mask");
    OptimState o;
    o.cfg.lr = io::get_f64(in, "lr");
    o.cfg.beta1 = io::get_f64(in, "beta1");
    o.cfg.beta2 = io::get_f64(in, "beta2");
    o.cfg.eps = io::get_f64(in, "eps");
    o.step = io::get_u64(in, "optimizer step");
    const std::uint32_t n_blobs = io::get_u32(in, "blob count");

    const std::size_t sets = c.config.shared ? 1 : c.config.n_s;
    for (std::size_t k = 0; k < sets; ++k) c.params.push_back({c.config.msgc(), msgc::zero_weights(c.config.msgc())});
    std::vector<std::pair<std::string, diff::Tensor*>> slots;
    for (std::size_t k = 0; k < sets; ++k)
        msgc::for_each_param(c.params[k].weights, [&](const std::string& name, diff::Tensor& t) {
            slots.emplace_back(c.config.shared ? name : "stage." + std::to_string(k + 1) + "." + name, &t);
        });
    const bool moments = n_blobs == 3 * slots.size();
    if (n_blobs != slots.size() && !moments)
        throw FormatError("checkpoint: " + std::to_string(n_blobs) + " blobs do not match the " + std::to_string(slots.size()) +
                          " tensors of the declared architecture");
    std::uint64_t recount = 0;
    for (auto& [name, t] : slots) {
        detail::read_blob(in, name, *t);
        recount += t->size();
    }
    if (recount != count)
        throw FormatError("checkpoint: header param count " + std::to_string(count) + " disagrees with blobs (" +
                          std::to_string(recount) + ")");
    if (moments) {
        for (auto& [name, t] : slots) {
            o.m.emplace_back(t->shape());
            detail::read_blob(in, "adam.m." + name, o.m.back());
        }
        for (auto& [name, t] : slots) {
            o.v.emplace_back(t->shape());
            detail::read_blob(in, "adam.v." + name, o.v.back());
        }
    }
    if (flags & 4u) c.optim = std::move(o);
    io::expect_end(in, "checkpoint");
    return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    write_checkpoint(out, c);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
    return read_checkpoint(in);
}

} // namespace mvms::train
