// Quick throughput probe for the conv kernels at the shapes the training
// experiments actually use. Not registered as a test; run by hand when
// touching the inner loops.

#include <chrono>
#include <cstdio>

#include "winconv/conv.hpp"
#include "winconv/tensor.hpp"

using namespace winconv;

namespace {

double bench(std::size_t k, std::size_t c, std::size_t m, std::size_t hw, std::size_t stride,
             int reps) {
    Rng rng(1);
    Tensor w = rng_uniform(rng, -0.1, 0.1, {k, k, c, m});
    Tensor b = rng_uniform(rng, -0.1, 0.1, {m});
    const ConvLayer layer =
        make_conv_layer(std::move(w), std::move(b), ConvGeometry{k, k, stride, k / 2});
    const Tensor x = rng_uniform(rng, -1.0, 1.0, {c, hw, hw});
    const std::size_t ho = layer.geom.out_extent(hw, k);
    const Tensor dy = rng_uniform(rng, -1.0, 1.0, {m, ho, ho});

    const auto t0 = std::chrono::steady_clock::now();
    double sink = 0.0;
    for (int r = 0; r < reps; ++r) {
        const Tensor y = conv2d_forward(x, layer);
        const ConvGrads g = conv2d_backward(x, layer, dy, /*want_dx=*/true, /*want_dw=*/true);
        sink += y[0] + g.dweights[0];
    }
    const auto t1 = std::chrono::steady_clock::now();
    const double sec = std::chrono::duration<double>(t1 - t0).count();

    const double macs_fwd = static_cast<double>(m) * ho * ho * k * k * c;
    const double flops = reps * (2.0 * macs_fwd) * 3.0;  // fwd + dW + dx
    std::printf("k=%zu C=%zu M=%zu in=%zux%zu s=%zu: %7.2f ms/iter  %6.2f GF/s  (sink %g)\n", k,
                c, m, hw, hw, stride, 1e3 * sec / reps, flops / sec / 1e9, sink);
    return flops / sec / 1e9;
}

}  // namespace

int main() {
    bench(9, 1, 256, 16, 1, 50);   // regression head, tapered
    bench(5, 1, 256, 16, 1, 100);  // regression head, baseline
    bench(7, 3, 8, 32, 2, 200);    // classifier first layer
    bench(7, 8, 16, 16, 1, 200);   // classifier block
    bench(7, 16, 16, 16, 1, 100);  // classifier block, wider
    return 0;
}
