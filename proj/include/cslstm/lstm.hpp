#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cslstm/rng.hpp"
#include "cslstm/tensor.hpp"

namespace cslstm {

// Single-layer LSTM parameters. Each gate weight is [hidden x (hidden+input)]
// and acts on the concatenation [h_{t-1}, x_t].
struct LstmParams {
    std::int64_t input_dim = 0;
    std::int64_t hidden_dim = 0;
    ad::Tensor w_f, w_i, w_c, w_o;
    ad::Tensor b_f, b_i, b_c, b_o;

    std::vector<std::pair<std::string, ad::Tensor*>> named_params(const std::string& prefix) {
        return {{prefix + ".w_f", &w_f}, {prefix + ".w_i", &w_i}, {prefix + ".w_c", &w_c},
                {prefix + ".w_o", &w_o}, {prefix + ".b_f", &b_f}, {prefix + ".b_i", &b_i},
                {prefix + ".b_c", &b_c}, {prefix + ".b_o", &b_o}};
    }
};

// Weights ~ Uniform(-1/sqrt(hidden), +1/sqrt(hidden)); forget-gate bias 1,
// other biases 0.
inline LstmParams init_lstm_params(std::int64_t input_dim, std::int64_t hidden_dim, Rng& rng) {
    if (input_dim < 1 || hidden_dim < 1) {
        throw std::invalid_argument("lstm dims must be >= 1");
    }
    LstmParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    auto weight = [&]() {
        ad::Tensor w = ad::Tensor::zeros({hidden_dim, hidden_dim + input_dim}, true);
        for (auto& v : w.data) v = rng.uniform(-bound, bound);
        return w;
    };
    p.w_f = weight();
    p.w_i = weight();
    p.w_c = weight();
    p.w_o = weight();
    p.b_f = ad::Tensor::zeros({hidden_dim}, true);
    for (auto& v : p.b_f.data) v = 1.0;
    p.b_i = ad::Tensor::zeros({hidden_dim}, true);
    p.b_c = ad::Tensor::zeros({hidden_dim}, true);
    p.b_o = ad::Tensor::zeros({hidden_dim}, true);
    return p;
}

inline LstmParams init_lstm_params(std::int64_t input_dim, std::int64_t hidden_dim,
                                   std::uint64_t seed) {
    Rng rng(seed);
    return init_lstm_params(input_dim, hidden_dim, rng);
}

// Parameters bound onto one tape; bind once per tape and reuse across steps
// so gate gradients accumulate on a single leaf per weight.
struct LstmBound {
    ad::Var w_f, w_i, w_c, w_o;
    ad::Var b_f, b_i, b_c, b_o;
    std::int64_t hidden_dim = 0;
};

inline LstmBound bind_lstm(ad::Tape& tape, LstmParams& p) {
    return LstmBound{tape.leaf(p.w_f), tape.leaf(p.w_i), tape.leaf(p.w_c), tape.leaf(p.w_o),
                     tape.leaf(p.b_f), tape.leaf(p.b_i), tape.leaf(p.b_c), tape.leaf(p.b_o),
                     p.hidden_dim};
}

struct LstmStateVar {
    ad::Var h, c;
};

inline LstmStateVar lstm_initial_state(ad::Tape& tape, std::int64_t hidden_dim) {
    auto zeros = std::vector<double>(static_cast<std::size_t>(hidden_dim), 0.0);
    return {tape.constant({hidden_dim}, zeros), tape.constant({hidden_dim}, zeros)};
}

// One recurrence step:
//   f = sig(W_f.[h,x]+b_f)   i = sig(W_i.[h,x]+b_i)
//   g = tanh(W_c.[h,x]+b_c)  C' = f*C + i*g
//   o = sig(W_o.[h,x]+b_o)   h' = o*tanh(C')
inline LstmStateVar lstm_step(const LstmBound& p, const LstmStateVar& state, ad::Var x) {
    using namespace ad;
    Var hx = concat(state.h, x);
    Var f = sigmoid(add(matmul(p.w_f, hx), p.b_f));
    Var i = sigmoid(add(matmul(p.w_i, hx), p.b_i));
    Var g = ad::tanh(add(matmul(p.w_c, hx), p.b_c));
    Var c_next = add(mul(f, state.c), mul(i, g));
    Var o = sigmoid(add(matmul(p.w_o, hx), p.b_o));
    Var h_next = mul(o, ad::tanh(c_next));
    return {h_next, c_next};
}

// Runs the cell over a sequence; returns every hidden state (final cell
// state is the last element's pair via the returned state).
struct LstmUnroll {
    std::vector<ad::Var> hidden;
    LstmStateVar final_state;
};

inline LstmUnroll lstm_unroll(const LstmBound& p, LstmStateVar state,
                              const std::vector<ad::Var>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("lstm_unroll: empty input sequence");
    LstmUnroll out;
    out.hidden.reserve(inputs.size());
    for (ad::Var x : inputs) {
        state = lstm_step(p, state, x);
        out.hidden.push_back(state.h);
    }
    out.final_state = state;
    return out;
}

}  // namespace cslstm
