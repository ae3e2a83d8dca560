#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cslstm/errors.hpp"
#include "cslstm/tensor.hpp"

namespace cslstm {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Moment accumulators aligned with a fixed parameter list.
struct AdamState {
    std::int64_t step = 0;
    std::vector<std::vector<double>> m, v;

    static AdamState for_params(const std::vector<ad::Tensor*>& params) {
        AdamState s;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const auto* p : params) {
            s.m.emplace_back(p->data.size(), 0.0);
            s.v.emplace_back(p->data.size(), 0.0);
        }
        return s;
    }
};

// Scales all gradients so the global L2 norm does not exceed max_norm;
// returns the pre-clip norm.
inline double clip_global_norm(const std::vector<ad::Tensor*>& params, double max_norm) {
    double sq = 0.0;
    for (const auto* p : params) {
        for (double g : p->grad) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto* p : params) {
            for (double& g : p->grad) g *= scale;
        }
    }
    return norm;
}

// Standard bias-corrected Adam update in place; grads are left untouched
// (callers zero them between steps).
inline void adam_step(const std::vector<ad::Tensor*>& params, AdamState& state,
                      const AdamConfig& cfg = {}) {
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adam state does not match the parameter list");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        ad::Tensor& p = *params[pi];
        if (p.grad.size() != p.data.size()) {
            throw std::invalid_argument("adam_step: parameter " + std::to_string(pi) +
                                        " has no gradient");
        }
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        for (std::size_t k = 0; k < p.data.size(); ++k) {
            const double g = p.grad[k];
            if (!std::isfinite(g)) {
                throw NumericError("non-finite gradient in parameter " + std::to_string(pi) +
                                   " at element " + std::to_string(k));
            }
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p.data[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace cslstm
