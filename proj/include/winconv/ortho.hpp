#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "winconv/nn.hpp"

namespace winconv {

// Ceiling on dense matrix size (rows * cols) so a misconfigured call cannot
// allocate without bound.
inline constexpr std::size_t kDbtEntryBudget = 100'000'000;

// Dense matrix K realizing a conv layer as y = K x on flattened maps: row r
// is output coordinate (m, p, q) in row-major order, column index is
// flat(c, h, w) over the input, and the entry is the effective kernel weight
// connecting them (zero where padding falls outside the image).
struct DbtMatrix {
    std::size_t rows = 0;  // M * H' * W'
    std::size_t cols = 0;  // C * H * W
    Tensor entries;        // [rows, cols]
    std::size_t layer_index = 0;
    std::vector<std::size_t> input_shape;  // [C, H, W] it was built for
};

DbtMatrix build_dbt(const ConvLayer& layer, const std::vector<std::size_t>& input_shape,
                    std::size_t budget = kDbtEntryBudget, std::size_t layer_index = 0);

// Mean absolute pairwise dot product between distinct unit-normalized rows:
// D = (1/(N(N-1))) * sum_i sum_{j != i} |r_i . r_j|. Rows that are
// identically zero cannot be normalized; they are dropped from the sum (and
// from N) with a warning on stderr. rows_used, when given, receives the N
// that was actually used.
double ortho_deviation(const DbtMatrix& dbt, std::size_t* rows_used = nullptr);

struct LayerOrtho {
    std::string name;           // conv0, conv1, ...
    double deviation = 0.0;     // D for the layer as parameterized now
    double chance = 0.0;        // D for the same layer re-initialized from rng
    std::size_t rows_used = 0;  // N after zero-row exclusion (trained weights)
};

// Per-conv-layer deviation for the model's weights plus the chance level from
// a fresh model_init with the supplied rng. Feature-map shapes flow from
// input_shape, which may differ from the training resolution.
std::vector<LayerOrtho> ortho_report(const Model& model,
                                     const std::vector<std::size_t>& input_shape, Rng rng,
                                     std::size_t budget = kDbtEntryBudget);

}  // namespace winconv
