#pragma once

#include <cstddef>
#include <filesystem>

#include "json.hpp"
#include "winconv/nn.hpp"

namespace winconv {

// JSON form of a model architecture, shared by checkpoint manifests and
// experiment configs. Parsing is strict: unknown keys are rejected and the
// resulting spec is validated. Throws ConfigError on any violation.
nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

struct Checkpoint {
    Model model;
    OptimizerState optimizer;  // scalar state only; moment buffers start empty
    std::size_t epoch = 0;
};

// Writes dir/manifest.json plus one raw tensor file per parameter, named by
// the parameter list order (conv0.weight.f64, conv0.bias.f64, ...).
void save_checkpoint(const std::filesystem::path& dir, const Model& model,
                     const OptimizerState& opt, std::size_t epoch);

// Rebuilds the model from a saved directory. Malformed manifests, missing
// tensors, and shape mismatches raise FormatError.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace winconv
