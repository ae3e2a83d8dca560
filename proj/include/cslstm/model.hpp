#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cslstm/errors.hpp"
#include "cslstm/fft.hpp"
#include "cslstm/lstm.hpp"
#include "cslstm/rng.hpp"
#include "cslstm/tensor.hpp"

namespace cslstm {

struct ModelConfig {
    std::int64_t seasonal_window = 48;   // w_s
    std::int64_t total_window = 240;     // history consumed by the seasonal branch
    std::int64_t context_window = 4;     // w_c
    std::int64_t context_stride = 2;
    std::int64_t context_history = 48;   // defaults to w_s
    std::int64_t d_model = 256;
    std::int64_t num_layers = 1;
    double sigma_min = 1e-3;
    bool disable_seasonal = false;
    bool disable_contextual = false;
    bool disable_covariate = false;

    void validate() const {
        if (seasonal_window < 2 || seasonal_window % 2 != 0) {
            throw ConfigError("seasonal_window_size must be even and >= 2");
        }
        if (total_window % seasonal_window != 0 || total_window / seasonal_window < 2) {
            throw ConfigError("total_window_size must be n * seasonal_window_size with n >= 2");
        }
        if (context_window < 2 || context_window % 2 != 0) {
            throw ConfigError("context_window_size must be even and >= 2");
        }
        if (context_stride < 1 || context_stride >= context_window) {
            throw ConfigError("context_stride must satisfy 1 <= stride < context_window_size");
        }
        if (context_history < context_window ||
            (context_history - context_window) % context_stride != 0) {
            throw ConfigError("context_history must cover the window and align to the stride");
        }
        if (context_history > total_window) {
            throw ConfigError("context_history cannot exceed total_window_size");
        }
        if (d_model < 1) throw ConfigError("d_model must be >= 1");
        if (num_layers != 1) throw ConfigError("num_layers is fixed to 1");
        if (sigma_min <= 0.0) throw ConfigError("sigma_min must be positive");
        if (disable_seasonal && disable_contextual) {
            throw ConfigError("cannot disable both branches");
        }
    }

    std::int64_t seasonal_windows() const { return total_window / seasonal_window; }
    std::int64_t context_windows() const {
        return (context_history - context_window) / context_stride + 1;
    }
    std::int64_t seasonal_feature_dim() const {
        return disable_covariate ? seasonal_window : 2 * seasonal_window;
    }
    std::int64_t context_feature_dim() const {
        return disable_covariate ? context_window : 2 * context_window;
    }
    double log_var_floor() const { return 2.0 * std::log(sigma_min); }
};

enum class Branch { seasonal, contextual };

// Value-level forecast read off a tape after a branch forward.
struct GaussianForecast {
    std::vector<double> mu;
    std::vector<double> sigma;  // already floored at sigma_min
    Branch branch = Branch::seasonal;
};

// Forecast still on the tape, used while the loss graph is being built.
struct ForecastVars {
    ad::Var mu;
    ad::Var log_var;
};

namespace model_detail {

// Dense irfft as a matrix so the head's frequency-to-time map is an exact
// linear op with an exact adjoint; built by transforming unit spectra.
inline std::vector<double> build_irfft_matrix(std::int64_t w) {
    std::vector<double> m(static_cast<std::size_t>(w * w), 0.0);
    SpectrumPacked unit;
    unit.coeffs.assign(static_cast<std::size_t>(w), 0.0);
    for (std::int64_t j = 0; j < w; ++j) {
        unit.coeffs[static_cast<std::size_t>(j)] = 1.0;
        auto col = irfft(unit, static_cast<std::size_t>(w));
        unit.coeffs[static_cast<std::size_t>(j)] = 0.0;
        for (std::int64_t i = 0; i < w; ++i) {
            m[static_cast<std::size_t>(i * w + j)] = col[static_cast<std::size_t>(i)];
        }
    }
    return m;
}

inline ad::Tensor init_linear(Rng& rng, std::int64_t out_dim, std::int64_t in_dim) {
    ad::Tensor w = ad::Tensor::zeros({out_dim, in_dim}, true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (auto& v : w.data) v = rng.uniform(-bound, bound);
    return w;
}

}  // namespace model_detail

// Dual-branch forecaster: a seasonal LSTM over non-overlapping window
// spectra predicting the next w_s points, and a contextual LSTM over
// overlapping short windows predicting the next single point. Both heads
// emit a mean and a floored log-variance.
class CsModel {
public:
    ModelConfig config;
    LstmParams s_lstm, c_lstm;
    ad::Tensor s_head_mu_w, s_head_mu_b;  // packed-spectrum head
    ad::Tensor s_head_lv_w, s_head_lv_b;  // time-domain log-variance head
    ad::Tensor c_head_w, c_head_b;        // (mu, log-variance) pair
    ad::Tensor irfft_mat;                 // constant, not trained

    CsModel() = default;

    CsModel(ModelConfig cfg, std::uint64_t seed) : config(cfg) {
        config.validate();
        Rng rng(seed);
        const std::int64_t d = config.d_model;
        const std::int64_t w = config.seasonal_window;
        s_lstm = init_lstm_params(config.seasonal_feature_dim(), d, rng);
        s_head_mu_w = model_detail::init_linear(rng, w, d);
        s_head_mu_b = ad::Tensor::zeros({w}, true);
        s_head_lv_w = model_detail::init_linear(rng, w, d);
        s_head_lv_b = ad::Tensor::zeros({w}, true);
        c_lstm = init_lstm_params(config.context_feature_dim(), d, rng);
        c_head_w = model_detail::init_linear(rng, 2, d);
        c_head_b = ad::Tensor::zeros({2}, true);
        irfft_mat = ad::Tensor::from({w, w}, model_detail::build_irfft_matrix(w));
    }

    std::vector<std::pair<std::string, ad::Tensor*>> named_params() {
        std::vector<std::pair<std::string, ad::Tensor*>> out;
        for (auto& p : s_lstm.named_params("s_lstm")) out.push_back(p);
        out.emplace_back("s_head_mu.w", &s_head_mu_w);
        out.emplace_back("s_head_mu.b", &s_head_mu_b);
        out.emplace_back("s_head_lv.w", &s_head_lv_w);
        out.emplace_back("s_head_lv.b", &s_head_lv_b);
        for (auto& p : c_lstm.named_params("c_lstm")) out.push_back(p);
        out.emplace_back("c_head.w", &c_head_w);
        out.emplace_back("c_head.b", &c_head_b);
        return out;
    }

    std::vector<ad::Tensor*> params() {
        std::vector<ad::Tensor*> out;
        for (auto& [name, t] : named_params()) out.push_back(t);
        return out;
    }

    void zero_grads() {
        for (auto* p : params()) p->zero_grad();
    }
};

// Per-tape bindings of the model parameters; create once per tape.
struct BoundModel {
    LstmBound s_lstm, c_lstm;
    ad::Var s_mu_w, s_mu_b, s_lv_w, s_lv_b;
    ad::Var c_w, c_b;
    ad::Var irfft_m;
};

inline BoundModel bind_model(ad::Tape& tape, CsModel& model) {
    BoundModel b;
    b.s_lstm = bind_lstm(tape, model.s_lstm);
    b.c_lstm = bind_lstm(tape, model.c_lstm);
    b.s_mu_w = tape.leaf(model.s_head_mu_w);
    b.s_mu_b = tape.leaf(model.s_head_mu_b);
    b.s_lv_w = tape.leaf(model.s_head_lv_w);
    b.s_lv_b = tape.leaf(model.s_head_lv_b);
    b.c_w = tape.leaf(model.c_head_w);
    b.c_b = tape.leaf(model.c_head_b);
    b.irfft_m = tape.leaf(model.irfft_mat);
    return b;
}

// Seasonal branch: LSTM over the window features, head A emits the packed
// spectrum of the next window (inverse-transformed to the time domain),
// head B emits the log-variance directly in the time domain.
inline ForecastVars s_branch_forward(ad::Tape& tape, const BoundModel& bm,
                                     const ModelConfig& cfg,
                                     std::vector<ad::Tensor>& window_features) {
    if (static_cast<std::int64_t>(window_features.size()) != cfg.seasonal_windows()) {
        throw std::invalid_argument("seasonal sample has " +
                                    std::to_string(window_features.size()) +
                                    " windows, config expects " +
                                    std::to_string(cfg.seasonal_windows()));
    }
    std::vector<ad::Var> inputs;
    inputs.reserve(window_features.size());
    for (auto& f : window_features) {
        if (f.shape != ad::Shape{cfg.seasonal_feature_dim()}) {
            throw std::invalid_argument("seasonal feature shape " + ad::shape_str(f.shape) +
                                        " does not match config dim " +
                                        std::to_string(cfg.seasonal_feature_dim()));
        }
        inputs.push_back(tape.leaf(f));
    }
    auto out = lstm_unroll(bm.s_lstm, lstm_initial_state(tape, cfg.d_model), inputs);
    ad::Var h = out.final_state.h;
    ad::Var spectrum = ad::add(ad::matmul(bm.s_mu_w, h), bm.s_mu_b);
    ad::Var mu = ad::matmul(bm.irfft_m, spectrum);
    ad::Var lv = ad::clamp_min(ad::add(ad::matmul(bm.s_lv_w, h), bm.s_lv_b),
                               cfg.log_var_floor());
    return {mu, lv};
}

// Contextual branch: LSTM over overlapping window features, linear head
// emitting (mu, log-variance) for the single next point.
inline ForecastVars c_branch_forward(ad::Tape& tape, const BoundModel& bm,
                                     const ModelConfig& cfg,
                                     std::vector<ad::Tensor>& window_features) {
    if (static_cast<std::int64_t>(window_features.size()) != cfg.context_windows()) {
        throw std::invalid_argument("context sample has " +
                                    std::to_string(window_features.size()) +
                                    " windows, config expects " +
                                    std::to_string(cfg.context_windows()));
    }
    std::vector<ad::Var> inputs;
    inputs.reserve(window_features.size());
    for (auto& f : window_features) {
        if (f.shape != ad::Shape{cfg.context_feature_dim()}) {
            throw std::invalid_argument("context feature shape " + ad::shape_str(f.shape) +
                                        " does not match config dim " +
                                        std::to_string(cfg.context_feature_dim()));
        }
        inputs.push_back(tape.leaf(f));
    }
    auto out = lstm_unroll(bm.c_lstm, lstm_initial_state(tape, cfg.d_model), inputs);
    ad::Var h = out.final_state.h;
    ad::Var pair = ad::add(ad::matmul(bm.c_w, h), bm.c_b);
    ad::Var mu = ad::slice(pair, 0, 1);
    ad::Var lv = ad::clamp_min(ad::slice(pair, 1, 1), cfg.log_var_floor());
    return {mu, lv};
}

// The hybrid target keeps observed values at normal points (mask=1) and
// substitutes denoised values elsewhere.
inline std::vector<double> hybrid_target(std::span<const double> x,
                                         std::span<const double> x_hat,
                                         std::span<const double> mask) {
    std::vector<double> h(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        h[i] = x[i] * mask[i] + x_hat[i] * (1.0 - mask[i]);
    }
    return h;
}

// Masked Gaussian NLL, mean over timesteps:
//   mean_t [ log s2_t + (hybrid_t - mu_t)^2 / s2_t ],  s2 = max(exp(lv), sigma_min^2)
inline ad::Var masked_nll(ad::Tape& tape, ad::Var mu, ad::Var log_var,
                          std::span<const double> x, std::span<const double> x_hat,
                          std::span<const double> mask, double sigma_min) {
    const std::size_t n = x.size();
    if (x_hat.size() != n || mask.size() != n) {
        throw std::invalid_argument("masked_nll target arrays have mismatched lengths (" +
                                    std::to_string(n) + ", " + std::to_string(x_hat.size()) +
                                    ", " + std::to_string(mask.size()) + ")");
    }
    if (ad::numel(tape.shape(mu)) != n || ad::numel(tape.shape(log_var)) != n) {
        throw std::invalid_argument("masked_nll forecast length " +
                                    ad::shape_str(tape.shape(mu)) + " does not match target " +
                                    std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i] != 0.0 && mask[i] != 1.0) {
            throw std::invalid_argument("mask entries must be 0 or 1");
        }
    }
    ad::Var target = tape.constant_vector(hybrid_target(x, x_hat, mask));
    ad::Var residual = ad::sub(target, mu);
    ad::Var lvc = ad::clamp_min(log_var, 2.0 * std::log(sigma_min));
    ad::Var inv_var = ad::exp(ad::mul(lvc, tape.constant_scalar(-1.0)));
    return ad::mean(ad::add(lvc, ad::mul(ad::square(residual), inv_var)));
}

inline ad::Var total_loss(ad::Var seasonal_loss, ad::Var contextual_loss) {
    return ad::add(seasonal_loss, contextual_loss);
}

// Closed-form minimizers of the masked NLL: the optimal mean is the hybrid
// sequence; the optimal sigma is the floored absolute residual against the
// supplied mean (zero residual when mu is left at its own optimum).
struct LossOptima {
    std::vector<double> mu_star;
    std::vector<double> sigma_star;
};

inline LossOptima loss_optima_oracle(std::span<const double> x, std::span<const double> x_hat,
                                     std::span<const double> mask, double sigma_min,
                                     std::optional<std::span<const double>> mu = std::nullopt) {
    LossOptima out;
    out.mu_star = hybrid_target(x, x_hat, mask);
    out.sigma_star.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double m = mu ? (*mu)[i] : out.mu_star[i];
        out.sigma_star[i] = std::max(std::abs(out.mu_star[i] - m), sigma_min);
    }
    return out;
}

// Reads a forecast off the tape, applying the exact variance floor.
inline GaussianForecast read_forecast(const ad::Tape& tape, const ForecastVars& fv,
                                      double sigma_min, Branch branch) {
    GaussianForecast out;
    out.branch = branch;
    auto mu = tape.value(fv.mu);
    auto lv = tape.value(fv.log_var);
    out.mu.assign(mu.begin(), mu.end());
    out.sigma.resize(lv.size());
    const double floor2 = sigma_min * sigma_min;
    for (std::size_t i = 0; i < lv.size(); ++i) {
        out.sigma[i] = std::sqrt(std::max(std::exp(lv[i]), floor2));
    }
    return out;
}

}  // namespace cslstm
