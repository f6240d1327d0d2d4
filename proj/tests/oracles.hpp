#pragma once

// Reference implementations for tests. Everything here is written as the
// most direct translation of the defining formula, independent of how the
// library computes the same quantity, so agreement is meaningful. Keep
// these dumb: no padding buffers, no FFT, no loop tiling.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include "winconv/tensor.hpp"

namespace oracles {

// O(n^2) DFT, unnormalized forward convention.
inline std::vector<std::complex<double>> naive_dft1(
    const std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t u = 0; u < n; ++u) {
        std::complex<double> acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * std::numbers::pi *
                               static_cast<double>(u * t % n) / static_cast<double>(n);
            acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[u] = acc;
    }
    return out;
}

// O(P^4) direct 2-D DFT magnitude.
inline winconv::Tensor naive_dft2_mag(const winconv::Tensor& x) {
    const std::size_t p = x.extent(0);
    winconv::Tensor mag({p, p});
    for (std::size_t u = 0; u < p; ++u) {
        for (std::size_t v = 0; v < p; ++v) {
            std::complex<double> acc = 0.0;
            for (std::size_t a = 0; a < p; ++a) {
                for (std::size_t b = 0; b < p; ++b) {
                    const double ang = -2.0 * std::numbers::pi *
                                       static_cast<double>((u * a + v * b) % p) /
                                       static_cast<double>(p);
                    acc += x.at({a, b}) * std::complex<double>(std::cos(ang), std::sin(ang));
                }
            }
            mag.at({u, v}) = std::abs(acc);
        }
    }
    return mag;
}

// Direct correlation with explicit bounds checks standing in for zero pad.
// keff is the already-tapered kernel [k,k,C,M].
inline winconv::Tensor brute_conv2d(const winconv::Tensor& x, const winconv::Tensor& keff,
                                    const winconv::Tensor& bias, std::size_t stride,
                                    std::size_t pad) {
    const std::size_t c_in = x.extent(0), h = x.extent(1), w = x.extent(2);
    const std::size_t kr = keff.extent(0), kc = keff.extent(1), m = keff.extent(3);
    const std::size_t ho = (h + 2 * pad - kr) / stride + 1;
    const std::size_t wo = (w + 2 * pad - kc) / stride + 1;
    winconv::Tensor y({m, ho, wo});
    for (std::size_t mm = 0; mm < m; ++mm) {
        for (std::size_t p = 0; p < ho; ++p) {
            for (std::size_t q = 0; q < wo; ++q) {
                double acc = bias[mm];
                for (std::size_t c = 0; c < c_in; ++c) {
                    for (std::size_t i = 0; i < kr; ++i) {
                        for (std::size_t j = 0; j < kc; ++j) {
                            const std::ptrdiff_t r =
                                static_cast<std::ptrdiff_t>(p * stride + i) -
                                static_cast<std::ptrdiff_t>(pad);
                            const std::ptrdiff_t s =
                                static_cast<std::ptrdiff_t>(q * stride + j) -
                                static_cast<std::ptrdiff_t>(pad);
                            if (r < 0 || s < 0 || r >= static_cast<std::ptrdiff_t>(h) ||
                                s >= static_cast<std::ptrdiff_t>(w)) {
                                continue;
                            }
                            acc += keff.at({i, j, c, mm}) *
                                   x.at({c, static_cast<std::size_t>(r),
                                         static_cast<std::size_t>(s)});
                        }
                    }
                }
                y.at({mm, p, q}) = acc;
            }
        }
    }
    return y;
}

// Central finite difference of a scalar function with respect to one slot.
inline double central_diff(double* slot, const std::function<double()>& f,
                           double step = 1e-5) {
    const double saved = *slot;
    *slot = saved + step;
    const double hi = f();
    *slot = saved - step;
    const double lo = f();
    *slot = saved;
    return (hi - lo) / (2.0 * step);
}

// Relative error with a floor so near-zero pairs are compared absolutely.
inline double rel_err(double a, double b, double floor = 1e-3) {
    const double denom = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / denom;
}

}  // namespace oracles
