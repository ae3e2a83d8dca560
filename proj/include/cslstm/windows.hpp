#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cslstm/fft.hpp"
#include "cslstm/tensor.hpp"

namespace cslstm {

// Aligned per-point arrays a window extractor reads from. mask uses 1 for
// trustworthy (normal) points; denoised holds the shrinkage output used as
// the substitute target at masked-out points.
struct SeriesView {
    std::span<const double> values;
    std::span<const double> mask;
    std::span<const double> denoised;

    std::size_t size() const { return values.size(); }

    void check() const {
        if (mask.size() != values.size() || denoised.size() != values.size()) {
            throw std::invalid_argument("series view arrays have mismatched lengths");
        }
    }
};

// One extracted training/inference sample for a branch: window feature
// matrix plus the raw covariate windows and the aligned targets.
struct WindowRow {
    ad::Tensor inputs;      // [num_windows x feature_dim]
    ad::Tensor covariates;  // [num_windows x w]
    std::vector<double> target;
    std::vector<double> target_mask;
    std::vector<double> target_denoised;
};

namespace window_detail {

// Fills one feature row: packed spectrum, optionally followed by the raw
// window values.
inline void fill_window_features(std::span<const double> window, bool with_covariates,
                                 double* out) {
    auto spec = rfft(window);
    const std::size_t w = window.size();
    for (std::size_t i = 0; i < w; ++i) out[i] = spec.coeffs[i];
    if (with_covariates) {
        for (std::size_t i = 0; i < w; ++i) out[w + i] = window[i];
    }
}

}  // namespace window_detail

// Cuts the `total` points ending at t-1 into total/w_s consecutive
// non-overlapping windows; the target is the w_s points [t, t+w_s).
inline WindowRow extract_seasonal(const SeriesView& series, std::int64_t w_s, std::int64_t total,
                                  std::int64_t t, bool with_covariates = true,
                                  bool need_target = true) {
    series.check();
    if (w_s < 2 || w_s % 2 != 0) {
        throw std::invalid_argument("seasonal window size must be even and >= 2");
    }
    if (total <= 0 || total % w_s != 0) {
        throw std::invalid_argument("total window " + std::to_string(total) +
                                    " must be a positive multiple of w_s=" + std::to_string(w_s));
    }
    if (t < total) {
        throw std::out_of_range("seasonal extraction at t=" + std::to_string(t) +
                                " needs " + std::to_string(total) + " points of history");
    }
    const std::int64_t n = static_cast<std::int64_t>(series.size());
    if (t > n || (need_target && t + w_s > n)) {
        throw std::out_of_range("seasonal target [" + std::to_string(t) + ", " +
                                std::to_string(t + w_s) + ") exceeds series length " +
                                std::to_string(n));
    }
    const std::int64_t num_windows = total / w_s;
    const std::int64_t feat = with_covariates ? 2 * w_s : w_s;

    WindowRow row;
    row.inputs = ad::Tensor::zeros({num_windows, feat});
    row.covariates = ad::Tensor::zeros({num_windows, w_s});
    for (std::int64_t wi = 0; wi < num_windows; ++wi) {
        const std::int64_t start = t - total + wi * w_s;
        auto window = series.values.subspan(static_cast<std::size_t>(start),
                                            static_cast<std::size_t>(w_s));
        window_detail::fill_window_features(window, with_covariates,
                                            row.inputs.data.data() + wi * feat);
        for (std::int64_t i = 0; i < w_s; ++i) {
            row.covariates.data[static_cast<std::size_t>(wi * w_s + i)] =
                window[static_cast<std::size_t>(i)];
        }
    }
    if (need_target) {
        row.target.assign(series.values.begin() + t, series.values.begin() + t + w_s);
        row.target_mask.assign(series.mask.begin() + t, series.mask.begin() + t + w_s);
        row.target_denoised.assign(series.denoised.begin() + t,
                                   series.denoised.begin() + t + w_s);
    }
    return row;
}

// Overlapping windows of length w_c at the given stride over the `history`
// points ending at t-1; the target is the single point x_t.
inline WindowRow extract_context(const SeriesView& series, std::int64_t w_c, std::int64_t stride,
                                 std::int64_t history, std::int64_t t,
                                 bool with_covariates = true, bool need_target = true) {
    series.check();
    if (w_c < 2 || w_c % 2 != 0) {
        throw std::invalid_argument("context window size must be even and >= 2");
    }
    if (stride < 1 || stride >= w_c) {
        throw std::invalid_argument("context stride " + std::to_string(stride) +
                                    " must satisfy 1 <= stride < w_c=" + std::to_string(w_c) +
                                    " (windows must overlap)");
    }
    if (history < w_c || (history - w_c) % stride != 0) {
        throw std::invalid_argument("context history " + std::to_string(history) +
                                    " must cover w_c and align to the stride");
    }
    if (t < history) {
        throw std::out_of_range("context extraction at t=" + std::to_string(t) + " needs " +
                                std::to_string(history) + " points of history");
    }
    const std::int64_t n = static_cast<std::int64_t>(series.size());
    if (t > n || (need_target && t >= n)) {
        throw std::out_of_range("context target at t=" + std::to_string(t) +
                                " exceeds series length " + std::to_string(n));
    }
    const std::int64_t num_windows = (history - w_c) / stride + 1;
    const std::int64_t feat = with_covariates ? 2 * w_c : w_c;

    WindowRow row;
    row.inputs = ad::Tensor::zeros({num_windows, feat});
    row.covariates = ad::Tensor::zeros({num_windows, w_c});
    for (std::int64_t wi = 0; wi < num_windows; ++wi) {
        const std::int64_t start = t - history + wi * stride;
        auto window = series.values.subspan(static_cast<std::size_t>(start),
                                            static_cast<std::size_t>(w_c));
        window_detail::fill_window_features(window, with_covariates,
                                            row.inputs.data.data() + wi * feat);
        for (std::int64_t i = 0; i < w_c; ++i) {
            row.covariates.data[static_cast<std::size_t>(wi * w_c + i)] =
                window[static_cast<std::size_t>(i)];
        }
    }
    if (need_target) {
        row.target = {series.values[static_cast<std::size_t>(t)]};
        row.target_mask = {series.mask[static_cast<std::size_t>(t)]};
        row.target_denoised = {series.denoised[static_cast<std::size_t>(t)]};
    }
    return row;
}

// Splits a window-feature matrix into per-window vectors that bind onto a
// tape as 1-D leaves.
inline std::vector<ad::Tensor> rows_as_tensors(const ad::Tensor& matrix) {
    const std::int64_t rows = matrix.shape[0], cols = matrix.shape[1];
    std::vector<ad::Tensor> out;
    out.reserve(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        out.push_back(ad::Tensor::from(
            {cols}, std::vector<double>(matrix.data.begin() + r * cols,
                                        matrix.data.begin() + (r + 1) * cols)));
    }
    return out;
}

}  // namespace cslstm
