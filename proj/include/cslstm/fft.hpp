#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cslstm {

namespace fft_detail {

constexpr double kPi = 3.14159265358979323846;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two.
inline void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n <= 1) return;
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// Bluestein's chirp-z transform: DFT of arbitrary length via a zero-padded
// power-of-two convolution.
inline void fft_bluestein(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    std::size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;

    std::vector<std::complex<double>> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        // exp(-i*pi*k^2/n), conjugated for the inverse transform.
        double ang = kPi * static_cast<double>((k * k) % (2 * n)) / static_cast<double>(n);
        if (inverse) ang = -ang;
        chirp[k] = std::complex<double>(std::cos(ang), -std::sin(ang));
    }

    std::vector<std::complex<double>> x(m, {0.0, 0.0});
    std::vector<std::complex<double>> y(m, {0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
    y[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) {
        y[k] = std::conj(chirp[k]);
        y[m - k] = std::conj(chirp[k]);
    }
    fft_pow2(x, false);
    fft_pow2(y, false);
    for (std::size_t k = 0; k < m; ++k) x[k] *= y[k];
    fft_pow2(x, true);
    const double scale = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * scale * chirp[k];
}

}  // namespace fft_detail

// Unnormalized complex DFT (forward: sum x_t e^{-2pi i kt/n}); the inverse
// is likewise unnormalized. Any length.
inline void fft(std::vector<std::complex<double>>& a, bool inverse) {
    if (fft_detail::is_pow2(a.size())) {
        fft_detail::fft_pow2(a, inverse);
    } else {
        fft_detail::fft_bluestein(a, inverse);
    }
}

// Real spectrum packing for even window length w:
//   [Re X_0, Re X_1, Im X_1, ..., Re X_{w/2-1}, Im X_{w/2-1}, Re X_{w/2}]
// exactly w reals; the Hermitian-redundant half is dropped.
struct SpectrumPacked {
    std::vector<double> coeffs;
};

inline SpectrumPacked rfft(std::span<const double> window) {
    const std::size_t w = window.size();
    if (w < 2 || w % 2 != 0) {
        throw std::invalid_argument("rfft: window length must be even and >= 2, got " +
                                    std::to_string(w));
    }
    std::vector<std::complex<double>> a(w);
    for (std::size_t t = 0; t < w; ++t) a[t] = {window[t], 0.0};
    fft(a, false);

    SpectrumPacked out;
    out.coeffs.resize(w);
    out.coeffs[0] = a[0].real();
    for (std::size_t k = 1; k < w / 2; ++k) {
        out.coeffs[2 * k - 1] = a[k].real();
        out.coeffs[2 * k] = a[k].imag();
    }
    out.coeffs[w - 1] = a[w / 2].real();
    return out;
}

// Inverse of rfft; carries the 1/w normalization so irfft(rfft(x)) == x.
inline std::vector<double> irfft(const SpectrumPacked& spectrum, std::size_t w) {
    if (w < 2 || w % 2 != 0) {
        throw std::invalid_argument("irfft: window length must be even and >= 2, got " +
                                    std::to_string(w));
    }
    if (spectrum.coeffs.size() != w) {
        throw std::invalid_argument("irfft: packed spectrum has " +
                                    std::to_string(spectrum.coeffs.size()) +
                                    " coefficients, expected " + std::to_string(w));
    }
    std::vector<std::complex<double>> a(w);
    a[0] = {spectrum.coeffs[0], 0.0};
    for (std::size_t k = 1; k < w / 2; ++k) {
        a[k] = {spectrum.coeffs[2 * k - 1], spectrum.coeffs[2 * k]};
        a[w - k] = std::conj(a[k]);
    }
    a[w / 2] = {spectrum.coeffs[w - 1], 0.0};
    fft(a, true);

    std::vector<double> out(w);
    const double scale = 1.0 / static_cast<double>(w);
    for (std::size_t t = 0; t < w; ++t) out[t] = a[t].real() * scale;
    return out;
}

// Spectrum energy under the packing convention: Hermitian-dropped bins
// count twice. Equals w * sum(x_t^2) by Parseval.
inline double packed_energy(const SpectrumPacked& spectrum) {
    const std::size_t w = spectrum.coeffs.size();
    double e = spectrum.coeffs[0] * spectrum.coeffs[0] +
               spectrum.coeffs[w - 1] * spectrum.coeffs[w - 1];
    for (std::size_t i = 1; i + 1 < w; ++i) e += 2.0 * spectrum.coeffs[i] * spectrum.coeffs[i];
    return e;
}

}  // namespace cslstm
