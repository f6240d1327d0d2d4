#pragma once

#include <cstddef>
#include <vector>

#include "winconv/tensor.hpp"

namespace winconv {

enum class WindowFamily { rectangular, hamming };

struct WindowSpec {
    WindowFamily family = WindowFamily::rectangular;
    std::size_t k_rows = 1;
    std::size_t k_cols = 1;
};

// Separable 2-D taper, coeffs has shape [k_rows, k_cols].
struct Window {
    WindowSpec spec;
    Tensor coeffs;
};

// Exact Hamming coefficient; the classic 0.54 is this value rounded.
inline constexpr double kHammingAlpha = 25.0 / 46.0;

// k-tap Hamming curve u[n] = alpha - (1 - alpha) * cos(2*pi*n / (k - 1)).
// k == 1 degenerates to {1}. The second half mirrors the first so the
// symmetry u[n] == u[k-1-n] holds bit-exactly.
std::vector<double> hamming_1d(std::size_t k);

// Outer product of the two 1-D curves (rectangular => all ones).
Window make_window(const WindowSpec& spec);

// Taper a conv weight tensor [k_rows, k_cols, C, M]: every (c, m) slice is
// multiplied by the same coefficient grid. Pure function; the weights are
// untouched.
Tensor apply_window(const Tensor& weights, const Window& window);

}  // namespace winconv
