#include "winconv/conv.hpp"

#include <algorithm>
#include <cstring>

namespace winconv {

namespace {

// Copy x [C,H,W] into a zero border of `pad` cells on each side.
Tensor pad_input(const Tensor& x, std::size_t pad) {
    if (pad == 0) return x;
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    Tensor out({c, h + 2 * pad, w + 2 * pad}, 0.0);
    const std::size_t wp = w + 2 * pad;
    const std::size_t hp = h + 2 * pad;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t r = 0; r < h; ++r) {
            std::memcpy(out.data() + (ch * hp + r + pad) * wp + pad,
                        x.data() + (ch * h + r) * w, w * sizeof(double));
        }
    }
    return out;
}

}  // namespace

std::size_t ConvGeometry::out_extent(std::size_t in, std::size_t k) const {
    if (stride == 0) throw RangeError("stride must be at least 1");
    if (in + 2 * pad < k) {
        throw ShapeError("kernel extent " + std::to_string(k) + " exceeds padded input " +
                         std::to_string(in + 2 * pad));
    }
    return (in + 2 * pad - k) / stride + 1;
}

Tensor ConvLayer::effective_kernel() const {
    return window ? apply_window(weights, *window) : weights;
}

void ConvLayer::validate() const {
    if (weights.rank() != 4) throw ShapeError("conv weights must be rank 4 [k,k,C,M]");
    if (weights.extent(0) != geom.k_rows || weights.extent(1) != geom.k_cols) {
        throw ShapeError("conv weights do not match the layer geometry");
    }
    if (bias.rank() != 1 || bias.extent(0) != weights.extent(3)) {
        throw ShapeError("conv bias must be [M]");
    }
    if (window && (window->spec.k_rows != geom.k_rows || window->spec.k_cols != geom.k_cols)) {
        throw ShapeError("window does not match the kernel size");
    }
}

ConvLayer make_conv_layer(Tensor weights, Tensor bias, ConvGeometry geom,
                          std::optional<WindowSpec> window) {
    ConvLayer layer{std::move(weights), std::move(bias), geom, std::nullopt};
    if (window) {
        WindowSpec spec = *window;
        spec.k_rows = geom.k_rows;
        spec.k_cols = geom.k_cols;
        layer.window = make_window(spec);
    }
    layer.validate();
    return layer;
}

Tensor conv2d_forward(const Tensor& x, const ConvLayer& layer) {
    layer.validate();
    if (x.rank() != 3) throw ShapeError("conv input must be rank 3 [C,H,W]");
    if (x.extent(0) != layer.in_channels()) {
        throw ShapeError("input has " + std::to_string(x.extent(0)) + " channels, layer expects " +
                         std::to_string(layer.in_channels()));
    }
    const ConvGeometry& g = layer.geom;
    const std::size_t c_in = x.extent(0);
    const std::size_t ho = g.out_extent(x.extent(1), g.k_rows);
    const std::size_t wo = g.out_extent(x.extent(2), g.k_cols);
    const std::size_t m = layer.out_channels();

    const Tensor keff = layer.effective_kernel();
    const Tensor xp = pad_input(x, g.pad);
    const std::size_t hp = xp.extent(1), wp = xp.extent(2);

    Tensor y({m, ho, wo});
    std::vector<double> rowacc(wo * m);
    const double* kw = keff.data();
    const double* bias = layer.bias.data();

    for (std::size_t p = 0; p < ho; ++p) {
        std::fill(rowacc.begin(), rowacc.end(), 0.0);
        for (std::size_t i = 0; i < g.k_rows; ++i) {
            const std::size_t row = p * g.stride + i;
            for (std::size_t j = 0; j < g.k_cols; ++j) {
                for (std::size_t c = 0; c < c_in; ++c) {
                    const double* wr = kw + ((i * g.k_cols + j) * c_in + c) * m;
                    const double* xrow = xp.data() + (c * hp + row) * wp + j;
                    for (std::size_t q = 0; q < wo; ++q) {
                        const double xv = xrow[q * g.stride];
                        double* acc = rowacc.data() + q * m;
                        for (std::size_t mm = 0; mm < m; ++mm) acc[mm] += wr[mm] * xv;
                    }
                }
            }
        }
        for (std::size_t q = 0; q < wo; ++q) {
            const double* acc = rowacc.data() + q * m;
            for (std::size_t mm = 0; mm < m; ++mm) {
                y[(mm * ho + p) * wo + q] = acc[mm] + bias[mm];
            }
        }
    }
    return y;
}

ConvGrads conv2d_backward(const Tensor& x, const ConvLayer& layer, const Tensor& dy,
                          bool want_dx, bool want_dw) {
    layer.validate();
    const ConvGeometry& g = layer.geom;
    const std::size_t c_in = x.extent(0);
    const std::size_t ho = g.out_extent(x.extent(1), g.k_rows);
    const std::size_t wo = g.out_extent(x.extent(2), g.k_cols);
    const std::size_t m = layer.out_channels();
    if (dy.rank() != 3 || dy.extent(0) != m || dy.extent(1) != ho || dy.extent(2) != wo) {
        throw ShapeError("dy shape does not match the layer output");
    }

    const Tensor keff = layer.effective_kernel();
    const Tensor xp = pad_input(x, g.pad);
    const std::size_t hp = xp.extent(1), wp = xp.extent(2);

    Tensor dkeff;
    if (want_dw) dkeff = Tensor(layer.weights.shape(), 0.0);
    Tensor dxp;
    if (want_dx) dxp = Tensor({c_in, hp, wp}, 0.0);
    Tensor dbias({m}, 0.0);

    std::vector<double> dyt(wo * m);  // dy for one output row, channel-innermost
    const double* kw = keff.data();

    for (std::size_t p = 0; p < ho; ++p) {
        for (std::size_t mm = 0; mm < m; ++mm) {
            const double* src = dy.data() + (mm * ho + p) * wo;
            for (std::size_t q = 0; q < wo; ++q) dyt[q * m + mm] = src[q];
        }
        for (std::size_t q = 0; q < wo; ++q) {
            const double* dv = dyt.data() + q * m;
            for (std::size_t mm = 0; mm < m; ++mm) dbias[mm] += dv[mm];
        }
        for (std::size_t i = 0; i < g.k_rows; ++i) {
            const std::size_t row = p * g.stride + i;
            for (std::size_t j = 0; j < g.k_cols; ++j) {
                for (std::size_t c = 0; c < c_in; ++c) {
                    const std::size_t tap = ((i * g.k_cols + j) * c_in + c) * m;
                    const double* xrow = xp.data() + (c * hp + row) * wp + j;
                    if (want_dw) {
                        double* dkr = dkeff.data() + tap;
                        for (std::size_t q = 0; q < wo; ++q) {
                            const double xv = xrow[q * g.stride];
                            const double* dv = dyt.data() + q * m;
                            for (std::size_t mm = 0; mm < m; ++mm) dkr[mm] += dv[mm] * xv;
                        }
                    }
                    if (want_dx) {
                        const double* wr = kw + tap;
                        double* dxrow = dxp.data() + (c * hp + row) * wp + j;
                        for (std::size_t q = 0; q < wo; ++q) {
                            const double* dv = dyt.data() + q * m;
                            // four running sums so the reduction pipelines
                            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
                            std::size_t mm = 0;
                            for (; mm + 4 <= m; mm += 4) {
                                s0 += wr[mm] * dv[mm];
                                s1 += wr[mm + 1] * dv[mm + 1];
                                s2 += wr[mm + 2] * dv[mm + 2];
                                s3 += wr[mm + 3] * dv[mm + 3];
                            }
                            for (; mm < m; ++mm) s0 += wr[mm] * dv[mm];
                            dxrow[q * g.stride] += ((s0 + s1) + (s2 + s3));
                        }
                    }
                }
            }
        }
    }

    ConvGrads grads;
    grads.dbias = std::move(dbias);
    if (want_dw) {
        if (layer.window) {
            // chain rule through the taper: dW = dK_eff (.) coeffs
            grads.dweights = apply_window(dkeff, *layer.window);
        } else {
            grads.dweights = std::move(dkeff);
        }
    }
    if (want_dx) {
        if (g.pad == 0) {
            grads.dx = std::move(dxp);
        } else {
            const std::size_t h = x.extent(1), w = x.extent(2);
            Tensor dx({c_in, h, w});
            for (std::size_t c = 0; c < c_in; ++c) {
                for (std::size_t r = 0; r < h; ++r) {
                    std::memcpy(dx.data() + (c * h + r) * w,
                                dxp.data() + (c * hp + r + g.pad) * wp + g.pad,
                                w * sizeof(double));
                }
            }
            grads.dx = std::move(dx);
        }
    }
    return grads;
}

PoolResult max_pool2x2(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("pool input must be rank 3 [C,H,W]");
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("2x2 pooling needs even spatial extents, got " + std::to_string(h) +
                         "x" + std::to_string(w));
    }
    PoolResult res{Tensor({c, h / 2, w / 2}), {}};
    res.argmax.resize(res.y.size());
    const double* in = x.data();
    double* out = res.y.data();
    std::size_t o = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t r = 0; r < h; r += 2) {
            for (std::size_t col = 0; col < w; col += 2) {
                std::size_t best = (ch * h + r) * w + col;
                double val = in[best];
                const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
                for (std::size_t k = 0; k < 3; ++k) {
                    if (in[cand[k]] > val) {
                        val = in[cand[k]];
                        best = cand[k];
                    }
                }
                out[o] = val;
                res.argmax[o] = static_cast<std::uint32_t>(best);
                ++o;
            }
        }
    }
    return res;
}

Tensor max_pool2x2_backward(const PoolResult& pool, const Tensor& dy,
                            const std::vector<std::size_t>& in_shape) {
    if (!pool.y.same_shape(dy)) throw ShapeError("pool gradient shape mismatch");
    Tensor dx(in_shape, 0.0);
    for (std::size_t o = 0; o < dy.size(); ++o) dx[pool.argmax[o]] += dy[o];
    return dx;
}

}  // namespace winconv
