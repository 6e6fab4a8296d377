#ifndef QFA_FFT_HPP
#define QFA_FFT_HPP

#include <complex>
#include <vector>

#include "qfa/common.hpp"

namespace qfa {
namespace detail {

inline bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

/// In-place iterative radix-2 Cooley-Tukey; n must be a power of two.
/// sign = -1 forward (e^{-i}), +1 inverse kernel (no 1/n scaling).
inline void fft_pow2(std::vector<cplx>& a, int sign) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = sign * 2.0 * pi / static_cast<double>(len);
        cplx wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                cplx u = a[i + k];
                cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

/// Bluestein's algorithm: DFT of arbitrary length via a power-of-two
/// convolution.
inline void fft_bluestein(std::vector<cplx>& a, int sign) {
    const std::size_t n = a.size();
    std::size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;
    // chirp w_k = exp(sign*i*pi*k^2/n); k^2 mod 2n keeps the argument small
    std::vector<cplx> w(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t k2 = (k * k) % (2 * n);
        double ang = sign * pi * static_cast<double>(k2) / static_cast<double>(n);
        w[k] = cplx(std::cos(ang), std::sin(ang));
    }
    std::vector<cplx> x(m, cplx(0, 0)), y(m, cplx(0, 0));
    for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * w[k];
    y[0] = std::conj(w[0]);
    for (std::size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(w[k]);
    fft_pow2(x, -1);
    fft_pow2(y, -1);
    for (std::size_t k = 0; k < m; ++k) x[k] *= y[k];
    fft_pow2(x, +1);
    for (std::size_t k = 0; k < n; ++k)
        a[k] = x[k] * w[k] / static_cast<double>(m);
}

} // namespace detail

/// Forward DFT: X_v = sum_{s=0}^{n-1} x_s exp(-i*2*pi*v*s/n). Any length.
inline void fft(std::vector<cplx>& a) {
    if (a.size() <= 1) return;
    if (detail::is_pow2(a.size())) detail::fft_pow2(a, -1);
    else detail::fft_bluestein(a, -1);
}

/// Inverse DFT with 1/n scaling.
inline void ifft(std::vector<cplx>& a) {
    if (a.size() <= 1) return;
    if (detail::is_pow2(a.size())) detail::fft_pow2(a, +1);
    else detail::fft_bluestein(a, +1);
    double inv = 1.0 / static_cast<double>(a.size());
    for (auto& v : a) v *= inv;
}

} // namespace qfa

#endif
