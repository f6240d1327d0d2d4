#include "winconv/window.hpp"

#include <cmath>
#include <numbers>

namespace winconv {

std::vector<double> hamming_1d(std::size_t k) {
    if (k == 0) throw SizeError("window length must be at least 1");
    std::vector<double> u(k, 1.0);
    if (k == 1) return u;
    const double n_max = static_cast<double>(k - 1);
    for (std::size_t n = 0; n <= (k - 1) / 2; ++n) {
        const double c = std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / n_max);
        u[n] = kHammingAlpha - (1.0 - kHammingAlpha) * c;
        u[k - 1 - n] = u[n];
    }
    return u;
}

Window make_window(const WindowSpec& spec) {
    if (spec.k_rows == 0 || spec.k_cols == 0) {
        throw SizeError("window extents must be at least 1");
    }
    Tensor coeffs({spec.k_rows, spec.k_cols}, 1.0);
    if (spec.family == WindowFamily::hamming) {
        const std::vector<double> ur = hamming_1d(spec.k_rows);
        const std::vector<double> uc = hamming_1d(spec.k_cols);
        double* p = coeffs.data();
        for (std::size_t i = 0; i < spec.k_rows; ++i) {
            for (std::size_t j = 0; j < spec.k_cols; ++j) {
                p[i * spec.k_cols + j] = ur[i] * uc[j];
            }
        }
    }
    return Window{spec, std::move(coeffs)};
}

Tensor apply_window(const Tensor& weights, const Window& window) {
    if (weights.rank() != 4) {
        throw ShapeError("windowed weights must have rank 4 [k_rows, k_cols, C, M]");
    }
    if (weights.extent(0) != window.spec.k_rows || weights.extent(1) != window.spec.k_cols) {
        throw ShapeError("window " + std::to_string(window.spec.k_rows) + "x" +
                         std::to_string(window.spec.k_cols) + " does not match kernel " +
                         std::to_string(weights.extent(0)) + "x" +
                         std::to_string(weights.extent(1)));
    }
    Tensor out(weights.shape());
    const std::size_t cm = weights.extent(2) * weights.extent(3);
    const double* w = weights.data();
    const double* u = window.coeffs.data();
    double* o = out.data();
    const std::size_t taps = window.spec.k_rows * window.spec.k_cols;
    for (std::size_t t = 0; t < taps; ++t) {
        const double coeff = u[t];
        const double* src = w + t * cm;
        double* dst = o + t * cm;
        for (std::size_t i = 0; i < cm; ++i) dst[i] = src[i] * coeff;
    }
    return out;
}

}  // namespace winconv
