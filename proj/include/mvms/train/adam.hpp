#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mvms/diff/tensor.hpp"

namespace mvms::train {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    bool operator==(const AdamConfig&) const = default;
};

/// Moments are allocated on the first step.
struct OptimState {
    AdamConfig cfg;
    std::uint64_t step = 0;
    std::vector<diff::Tensor> m;
    std::vector<diff::Tensor> v;
};

/// In-place Adam update with bias correction.
inline void adam_step(const std::vector<diff::Tensor*>& params, const std::vector<diff::Tensor>& grads, OptimState& st) {
    if (params.size() != grads.size()) throw ShapeError("adam_step: parameter and gradient counts differ");
    if (st.m.empty()) {
        for (const diff::Tensor* p : params) {
            st.m.emplace_back(p->shape());
            st.v.emplace_back(p->shape());
        }
    }
    if (st.m.size() != params.size()) throw ShapeError("adam_step: optimizer state has the wrong number of moments");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i]->shape() != grads[i].shape() || st.m[i].shape() != grads[i].shape())
            throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i));

    const AdamConfig& c = st.cfg;
    ++st.step;
    const double t = static_cast<double>(st.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* p = params[i]->data();
        double* m = st.m[i].data();
        double* v = st.v[i].data();
        const double* g = grads[i].data();
        for (std::size_t k = 0; k < grads[i].size(); ++k) {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
            p[k] -= c.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + c.eps);
        }
    }
}

} // namespace mvms::train
