#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cslstm/errors.hpp"
#include "cslstm/tensor.hpp"

namespace cslstm::ad {

// Compares the tape's analytic gradient against central finite differences,
// coordinate by coordinate, over every input tensor. Returns the maximum
// relative error max |a-n| / max(|a|, |n|, 1e-8).
inline double grad_check(const std::function<Var(Tape&, std::vector<Var>&)>& f,
                         std::vector<Tensor> point, double eps = 1e-5) {
    for (auto& t : point) t.requires_grad = true;

    auto evaluate = [&](const std::vector<Tensor>& at) {
        Tape tape;
        std::vector<Tensor> local = at;
        for (auto& t : local) t.requires_grad = false;
        std::vector<Var> vars;
        vars.reserve(local.size());
        for (auto& t : local) vars.push_back(tape.leaf(t));
        Var out = f(tape, vars);
        const double v = tape.value(out)[0];
        if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
        return v;
    };

    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(point.size());
        for (auto& t : point) {
            t.zero_grad();
            vars.push_back(tape.leaf(t));
        }
        Var out = f(tape, vars);
        if (!std::isfinite(tape.value(out)[0])) {
            throw NumericError("grad_check: non-finite function value at the base point");
        }
        tape.backward(out);
        for (const auto& t : point) analytic.push_back(t.grad);
    }

    double max_rel = 0.0;
    for (std::size_t ti = 0; ti < point.size(); ++ti) {
        for (std::size_t k = 0; k < point[ti].data.size(); ++k) {
            const double orig = point[ti].data[k];
            point[ti].data[k] = orig + eps;
            const double fp = evaluate(point);
            point[ti].data[k] = orig - eps;
            const double fm = evaluate(point);
            point[ti].data[k] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[ti][k];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace cslstm::ad
