#pragma once

#include <cstddef>
#include <vector>

#include "winconv/nn.hpp"

namespace winconv {

// Rotation by `degrees` about the image center followed by a translation of
// (translate_rows, translate_cols) pixels (continuous offsets allowed), with
// bilinear resampling and zero fill outside the source. Rotation angles that
// are exact multiples of 90 use exact trig values, so those warps move pixels
// without resampling loss; degrees == 0 with zero offsets is the bit-exact
// identity.
Tensor warp_image(const Tensor& x, double degrees, double translate_rows,
                  double translate_cols);

struct DeepfoolConfig {
    std::size_t max_iter = 100;
    double overshoot = 0.02;
};

struct SpatialConfig {
    double max_translate_percent = 12.5;  // of each spatial extent, both axes
    double max_rotate_degrees = 22.5;
    std::size_t grid_steps = 5;  // values per axis; odd so 0 is on the grid
};

enum class AttackKind { deepfool, spatial };

struct AttackConfig {
    AttackKind kind = AttackKind::deepfool;
    DeepfoolConfig deepfool;
    SpatialConfig spatial;
};

struct SampleAttack {
    bool success = false;  // final prediction differs from the label
    bool stalled = false;  // every linearized class difference had zero gradient
    std::size_t iterations = 0;
    double perturbation_norm = 0.0;  // L2 of the applied perturbation (deepfool)
    double translate_rows = 0.0;     // chosen transform, pixels (spatial)
    double translate_cols = 0.0;
    double rotate_degrees = 0.0;
    double loss = 0.0;  // cross entropy at the chosen transform (spatial)
    int clean_prediction = -1;
    int final_prediction = -1;
};

// Iterative minimal-L2 attack: repeatedly linearize the class-score
// differences at the current point, step to the nearest linearized boundary,
// and stop once the prediction flips or max_iter is reached. The accumulated
// perturbation is scaled by (1 + overshoot) at the end and the result is
// judged at that overshot point. A sample the model already misclassifies
// succeeds immediately with zero perturbation.
SampleAttack deepfool(const Model& model, const Tensor& x, int label,
                      const DeepfoolConfig& cfg);

// Enumerates the Cartesian grid of row/column translations in
// [-max_translate_percent, +max_translate_percent] of the spatial extents and
// rotations in [-max_rotate_degrees, +max_rotate_degrees], grid_steps values
// per axis (endpoints and 0 included; a zero budget collapses an axis to {0}).
// Picks a misclassifying transform when one exists (highest cross entropy
// among them), otherwise the highest-cross-entropy transform overall; ties go
// to enumeration order (rows, then cols, then rotation).
SampleAttack spatial_attack(const Model& model, const Tensor& x, int label,
                            const SpatialConfig& cfg);

struct RobustnessReport {
    std::size_t count = 0;
    double clean_accuracy = 0.0;
    double attacked_accuracy = 0.0;
    std::size_t stalled = 0;
    double mean_norm = 0.0;  // deepfool perturbation norms, all samples
    double max_norm = 0.0;
    std::vector<SampleAttack> samples;
};

// Runs the configured attack on every sample, in order. Per-sample stalls are
// counted, not raised.
RobustnessReport evaluate_robustness(const Model& model, const LabeledDataset& ds,
                                     const AttackConfig& cfg);

}  // namespace winconv
