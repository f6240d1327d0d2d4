#include "winconv/ortho.hpp"

#include <cmath>
#include <iostream>

namespace winconv {

DbtMatrix build_dbt(const ConvLayer& layer, const std::vector<std::size_t>& input_shape,
                    std::size_t budget, std::size_t layer_index) {
    if (input_shape.size() != 3) throw ShapeError("dbt input shape must be [C,H,W]");
    const std::size_t c_in = input_shape[0], h_in = input_shape[1], w_in = input_shape[2];
    const std::size_t kr = layer.weights.extent(0), kc = layer.weights.extent(1);
    if (layer.weights.extent(2) != c_in) {
        throw ShapeError("layer expects " + std::to_string(layer.weights.extent(2)) +
                         " input channels, dbt input has " + std::to_string(c_in));
    }
    const std::size_t m_out = layer.weights.extent(3);
    const std::size_t h_out = layer.geom.out_extent(h_in, kr);
    const std::size_t w_out = layer.geom.out_extent(w_in, kc);

    DbtMatrix dbt;
    dbt.rows = m_out * h_out * w_out;
    dbt.cols = c_in * h_in * w_in;
    dbt.layer_index = layer_index;
    dbt.input_shape = input_shape;
    if (dbt.cols == 0 || dbt.rows == 0) throw SizeError("dbt would be empty");
    if (dbt.rows > budget / dbt.cols) {
        throw SizeError("dense dbt needs " + std::to_string(dbt.rows) + " x " +
                        std::to_string(dbt.cols) + " entries, over the budget of " +
                        std::to_string(budget) + "; use a smaller input or layer");
    }

    const Tensor keff = layer.effective_kernel();
    dbt.entries = Tensor({dbt.rows, dbt.cols});
    const std::size_t stride = layer.geom.stride, pad = layer.geom.pad;
    for (std::size_t m = 0; m < m_out; ++m) {
        for (std::size_t p = 0; p < h_out; ++p) {
            for (std::size_t q = 0; q < w_out; ++q) {
                const std::size_t row = (m * h_out + p) * w_out + q;
                double* out = dbt.entries.data() + row * dbt.cols;
                for (std::size_t i = 0; i < kr; ++i) {
                    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(p * stride + i) -
                                             static_cast<std::ptrdiff_t>(pad);
                    if (h < 0 || h >= static_cast<std::ptrdiff_t>(h_in)) continue;
                    for (std::size_t j = 0; j < kc; ++j) {
                        const std::ptrdiff_t w =
                            static_cast<std::ptrdiff_t>(q * stride + j) -
                            static_cast<std::ptrdiff_t>(pad);
                        if (w < 0 || w >= static_cast<std::ptrdiff_t>(w_in)) continue;
                        for (std::size_t c = 0; c < c_in; ++c) {
                            out[(c * h_in + static_cast<std::size_t>(h)) * w_in +
                                static_cast<std::size_t>(w)] = keff.at({i, j, c, m});
                        }
                    }
                }
            }
        }
    }
    return dbt;
}

double ortho_deviation(const DbtMatrix& dbt, std::size_t* rows_used) {
    const std::size_t cols = dbt.cols;
    std::vector<std::size_t> live;
    std::vector<double> sumsq;
    live.reserve(dbt.rows);
    for (std::size_t r = 0; r < dbt.rows; ++r) {
        const double* row = dbt.entries.data() + r * cols;
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += row[c] * row[c];
        if (s > 0.0) {
            live.push_back(r);
            sumsq.push_back(s);
        }
    }
    if (live.empty()) throw UndefinedError("every dbt row is zero");
    if (live.size() < dbt.rows) {
        std::cerr << "warning: dropped " << dbt.rows - live.size()
                  << " zero rows from the orthogonality deviation (layer "
                  << dbt.layer_index << ")\n";
    }
    const std::size_t n = live.size();
    if (rows_used != nullptr) *rows_used = n;
    if (n < 2) throw UndefinedError("orthogonality deviation needs at least two nonzero rows");

    double total = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        const double* ra = dbt.entries.data() + live[a] * cols;
        for (std::size_t b = a + 1; b < n; ++b) {
            const double* rb = dbt.entries.data() + live[b] * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += ra[c] * rb[c];
            total += std::abs(dot) / std::sqrt(sumsq[a] * sumsq[b]);
        }
    }
    return 2.0 * total / (static_cast<double>(n) * static_cast<double>(n - 1));
}

std::vector<LayerOrtho> ortho_report(const Model& model,
                                     const std::vector<std::size_t>& input_shape, Rng rng,
                                     std::size_t budget) {
    const auto shapes = conv_input_shapes(model.spec, input_shape);
    const Model chance_model = model_init(model.spec, rng);

    std::vector<LayerOrtho> report;
    for (std::size_t l = 0; l < model.convs.size(); ++l) {
        LayerOrtho entry;
        entry.name = "conv" + std::to_string(l);
        try {
            DbtMatrix trained = build_dbt(model.convs[l], shapes[l], budget, l);
            entry.deviation = ortho_deviation(trained, &entry.rows_used);
            DbtMatrix fresh = build_dbt(chance_model.convs[l], shapes[l], budget, l);
            entry.chance = ortho_deviation(fresh);
        } catch (const SizeError& e) {
            throw SizeError(entry.name + ": " + e.what());
        }
        report.push_back(std::move(entry));
    }
    return report;
}

}  // namespace winconv
