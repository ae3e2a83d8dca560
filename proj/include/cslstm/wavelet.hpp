#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cslstm/errors.hpp"

namespace cslstm {

// Phi^{-1}(0.75): calibrates the median absolute deviation to the standard
// deviation of a Gaussian.
inline constexpr double kMadScale = 0.6744897501960817;

enum class WaveletName { haar, db4 };

// Orthonormal two-channel filter bank. All four filters are derived from the
// scaling (reconstruction lowpass) coefficients, which sum to sqrt(2) and
// have unit energy.
struct WaveletBasis {
    WaveletName name;
    std::vector<double> dec_lo, dec_hi;
    std::vector<double> rec_lo, rec_hi;

    std::size_t filter_length() const { return rec_lo.size(); }

    static WaveletBasis from_scaling(WaveletName name, std::vector<double> scaling) {
        WaveletBasis b;
        b.name = name;
        const std::size_t m = scaling.size();
        b.rec_lo = scaling;
        b.dec_lo.resize(m);
        b.rec_hi.resize(m);
        b.dec_hi.resize(m);
        for (std::size_t k = 0; k < m; ++k) {
            b.dec_lo[k] = scaling[m - 1 - k];
            b.rec_hi[k] = (k % 2 == 0 ? 1.0 : -1.0) * scaling[m - 1 - k];
        }
        for (std::size_t k = 0; k < m; ++k) b.dec_hi[k] = b.rec_hi[m - 1 - k];
        return b;
    }

    static WaveletBasis haar() {
        const double s = 1.0 / std::sqrt(2.0);
        return from_scaling(WaveletName::haar, {s, s});
    }

    static WaveletBasis db4() {
        return from_scaling(WaveletName::db4,
                            {0.23037781330885523, 0.7148465705525415, 0.6308807679295904,
                             -0.02798376941698385, -0.18703481171888114, 0.030841381835986965,
                             0.032883011666982945, -0.010597401784997278});
    }

    static WaveletBasis from_name(const std::string& name) {
        if (name == "haar") return haar();
        if (name == "db4") return db4();
        throw ConfigError("unknown wavelet basis '" + name + "' (expected haar or db4)");
    }
};

enum class BoundaryMode { symmetric };

struct WaveletDecomposition {
    std::vector<double> approx;               // c_A at the coarsest level
    std::vector<std::vector<double>> details; // coarsest first: c_D^(L) ... c_D^(1)
    std::size_t level = 0;
    std::size_t original_length = 0;
    BoundaryMode boundary_mode = BoundaryMode::symmetric;
};

namespace wavelet_detail {

// Half-point symmetric extension: ..., x1, x0 | x0, x1, ..., x_{n-1} | x_{n-1], ...
inline double ext(std::span<const double> s, long long i) {
    const long long n = static_cast<long long>(s.size());
    long long p = i % (2 * n);
    if (p < 0) p += 2 * n;
    return p < n ? s[static_cast<std::size_t>(p)] : s[static_cast<std::size_t>(2 * n - 1 - p)];
}

inline std::size_t coeff_len(std::size_t n, std::size_t m) { return (n + m - 1) / 2; }

// One analysis level: filter over the symmetric extension, keep the odd
// downsampling phase. Output covers every coefficient whose filter support
// touches the original samples.
inline std::vector<double> analyze(std::span<const double> s, const std::vector<double>& f) {
    const std::size_t m = f.size();
    const std::size_t lc = coeff_len(s.size(), m);
    std::vector<double> out(lc);
    for (std::size_t i = 0; i < lc; ++i) {
        const long long k = 2 * static_cast<long long>(i) + 1;
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += f[j] * ext(s, k - static_cast<long long>(j));
        out[i] = acc;
    }
    return out;
}

// One synthesis level: transpose of analyze. Upsample, filter, crop m-2 from
// the left, truncate to the child length.
inline std::vector<double> synthesize(std::span<const double> ca, std::span<const double> cd,
                                      const WaveletBasis& basis, std::size_t child_len) {
    const std::size_t m = basis.filter_length();
    std::vector<double> out(child_len, 0.0);
    const long long off = static_cast<long long>(m) - 2;
    for (std::size_t i = 0; i < ca.size(); ++i) {
        // cd has the same length as ca; fuse both branches in one pass.
        const long long base = 2 * static_cast<long long>(i);
        for (std::size_t j = 0; j < m; ++j) {
            const long long p = base + static_cast<long long>(j) - off;
            if (p >= 0 && p < static_cast<long long>(child_len)) {
                out[static_cast<std::size_t>(p)] +=
                    ca[i] * basis.rec_lo[j] + cd[i] * basis.rec_hi[j];
            }
        }
    }
    return out;
}

// Cascade of per-level input lengths: index j holds the length fed into
// analysis level j+1.
inline std::vector<std::size_t> level_lengths(std::size_t n, std::size_t m, std::size_t level) {
    std::vector<std::size_t> lens(level);
    for (std::size_t j = 0; j < level; ++j) {
        lens[j] = n;
        n = coeff_len(n, m);
    }
    return lens;
}

}  // namespace wavelet_detail

inline std::size_t max_wavedec_level(std::size_t n) {
    std::size_t lvl = 0;
    while (n >= 2) {
        n >>= 1;
        ++lvl;
    }
    return lvl;
}

inline WaveletDecomposition wavedec(std::span<const double> signal, const WaveletBasis& basis,
                                    std::size_t level) {
    if (signal.size() < 2) throw std::invalid_argument("wavedec: signal length must be >= 2");
    if (level < 1 || level > max_wavedec_level(signal.size())) {
        throw std::invalid_argument("wavedec: level " + std::to_string(level) +
                                    " out of range [1, " +
                                    std::to_string(max_wavedec_level(signal.size())) +
                                    "] for signal length " + std::to_string(signal.size()));
    }
    WaveletDecomposition d;
    d.level = level;
    d.original_length = signal.size();
    d.details.resize(level);
    std::vector<double> cur(signal.begin(), signal.end());
    for (std::size_t j = 0; j < level; ++j) {
        auto ca = wavelet_detail::analyze(cur, basis.dec_lo);
        auto cd = wavelet_detail::analyze(cur, basis.dec_hi);
        d.details[level - 1 - j] = std::move(cd);  // finest scale ends up last
        cur = std::move(ca);
    }
    d.approx = std::move(cur);
    return d;
}

inline std::vector<double> waverec(const WaveletDecomposition& decomp,
                                   const WaveletBasis& basis) {
    const std::size_t m = basis.filter_length();
    if (decomp.details.size() != decomp.level) {
        throw DataError("waverec: decomposition holds " + std::to_string(decomp.details.size()) +
                        " detail bands but claims level " + std::to_string(decomp.level));
    }
    auto lens = wavelet_detail::level_lengths(decomp.original_length, m, decomp.level);
    // Walk coarsest to finest; details[0] pairs with the deepest level.
    std::vector<double> cur = decomp.approx;
    for (std::size_t j = 0; j < decomp.level; ++j) {
        const auto& cd = decomp.details[j];
        const std::size_t child = lens[decomp.level - 1 - j];
        const std::size_t expect = wavelet_detail::coeff_len(child, m);
        if (cd.size() != expect || cur.size() != expect) {
            throw DataError("waverec: band length mismatch at level " +
                            std::to_string(decomp.level - j) + " (approx " +
                            std::to_string(cur.size()) + ", detail " + std::to_string(cd.size()) +
                            ", expected " + std::to_string(expect) + ")");
        }
        cur = wavelet_detail::synthesize(cur, cd, basis, child);
    }
    return cur;
}

// Robust noise scale: median absolute coefficient calibrated to a Gaussian
// standard deviation. Even-length medians average the two central order
// statistics.
inline double mad_sigma(std::span<const double> coeffs) {
    if (coeffs.empty()) throw std::invalid_argument("mad_sigma: empty coefficient array");
    std::vector<double> mags(coeffs.size());
    for (std::size_t i = 0; i < coeffs.size(); ++i) mags[i] = std::abs(coeffs[i]);
    std::sort(mags.begin(), mags.end());
    const std::size_t n = mags.size();
    double med = (n % 2 == 1) ? mags[n / 2] : 0.5 * (mags[n / 2 - 1] + mags[n / 2]);
    return med / kMadScale;
}

inline double universal_threshold(double sigma, std::size_t n) {
    if (sigma < 0.0) throw std::invalid_argument("universal_threshold: sigma must be >= 0");
    if (n < 2) throw std::invalid_argument("universal_threshold: n must be >= 2");
    return sigma * std::sqrt(2.0 * std::log(static_cast<double>(n)));
}

inline std::vector<double> soft_threshold(std::span<const double> coeffs, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("soft_threshold: lambda must be >= 0");
    std::vector<double> out(coeffs.size());
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
        const double mag = std::abs(coeffs[i]) - lambda;
        out[i] = mag > 0.0 ? (coeffs[i] > 0.0 ? mag : -mag) : 0.0;
    }
    return out;
}

// Wavelet shrinkage: estimate a per-band noise scale from each detail band,
// apply its universal threshold, reconstruct. The approximation band passes
// through untouched.
inline std::vector<double> denoise(std::span<const double> signal, const WaveletBasis& basis,
                                   std::size_t level) {
    auto d = wavedec(signal, basis, level);
    const std::size_t n = d.original_length;
    for (auto& band : d.details) {
        const double sigma = mad_sigma(band);
        const double lambda = universal_threshold(sigma, n);
        band = soft_threshold(band, lambda);
    }
    return waverec(d, basis);
}

inline std::size_t default_denoise_level(std::size_t n) {
    return std::min<std::size_t>(4, max_wavedec_level(n));
}

}  // namespace cslstm
