#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "winconv/tensor.hpp"
#include "winconv/window.hpp"

namespace winconv {

struct ConvGeometry {
    std::size_t k_rows = 1;
    std::size_t k_cols = 1;
    std::size_t stride = 1;
    std::size_t pad = 0;

    // floor((in + 2*pad - k) / stride) + 1; throws if the kernel does not fit.
    std::size_t out_extent(std::size_t in, std::size_t k) const;
};

// One correlation layer. Weights are stored [k_rows, k_cols, C, M] with the
// output channel innermost; the optional window tapers the weights on every
// use, so the stored weights stay untapered and their gradients pick up the
// same coefficients.
struct ConvLayer {
    Tensor weights;  // [k_rows, k_cols, C, M]
    Tensor bias;     // [M]
    ConvGeometry geom;
    std::optional<Window> window;

    std::size_t in_channels() const { return weights.extent(2); }
    std::size_t out_channels() const { return weights.extent(3); }

    // Weights with the window coefficients multiplied in (a plain copy for
    // unwindowed layers).
    Tensor effective_kernel() const;

    void validate() const;
};

ConvLayer make_conv_layer(Tensor weights, Tensor bias, ConvGeometry geom,
                          std::optional<WindowSpec> window = std::nullopt);

// Correlation (no kernel flip) over a zero-padded input:
//   y[m,p,q] = bias[m] + sum_{c,i,j} K[i,j,c,m] * x_pad[c, p*s+i, q*s+j]
Tensor conv2d_forward(const Tensor& x, const ConvLayer& layer);

struct ConvGrads {
    Tensor dx;        // [C, H, W] (empty when not requested)
    Tensor dweights;  // [k_rows, k_cols, C, M] (empty when not requested)
    Tensor dbias;     // [M]
};

// Gradients of a scalar loss given dy = dL/dy. dweights is the gradient of
// the stored (untapered) weights: the window coefficients attenuate it
// exactly as they attenuate the forward pass. Either output can be skipped
// when only the other is needed.
ConvGrads conv2d_backward(const Tensor& x, const ConvLayer& layer, const Tensor& dy,
                          bool want_dx = true, bool want_dw = true);

struct PoolResult {
    Tensor y;  // [C, H/2, W/2]
    std::vector<std::uint32_t> argmax;  // flat input index per output cell
};

// 2x2 max pooling, stride 2. Ties resolve to the first maximum in scan
// order (top-left, top-right, bottom-left, bottom-right).
PoolResult max_pool2x2(const Tensor& x);

Tensor max_pool2x2_backward(const PoolResult& pool, const Tensor& dy,
                            const std::vector<std::size_t>& in_shape);

}  // namespace winconv
