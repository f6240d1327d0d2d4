#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "winconv/attack.hpp"
#include "winconv/nn.hpp"
#include "winconv/ortho.hpp"

namespace winconv {

// Declarative experiment runner. A config is a strict-schema JSON document:
//
//   {
//     "task": "fft_regression" | "classification",
//     "output_dir": "runs/fftreg",
//     "seeds": [0, 1, 2],
//     "scale": {"channel_mult": 1.0, "sample_mult": 1.0, "epoch_mult": 1.0},
//     "dataset": {"kind": "fft", "size": 32, "train": 10000, "val": 1000, ...},
//     "model": {...},
//     "train": {...},
//     "analysis": {"ortho": true, "spectra": true, ...},
//     "attack": {"kind": "deepfool", ...},
//     "variants": [{"name": "baseline", "model": {"placement": "none"}}, ...]
//   }
//
// Unknown keys anywhere are rejected with the offending path, so a typo can
// never silently fall back to a default. Variants shallow-merge their section
// overrides onto the base sections and are validated after merging. The
// `scale` knob multiplies channel counts, sample counts, and epochs so that
// full-scale presets can be shrunk to desk scale without editing variants.

struct ScaleKnob {
    double channel_mult = 1.0;
    double sample_mult = 1.0;
    double epoch_mult = 1.0;
};

// Where window coefficients are applied in the model.
enum class WindowPlacement { none, first, all };

struct DatasetSection {
    std::string kind;  // fft | gratings | cifar10 | mnist | dir
    std::size_t size = 32;       // side length for generated kinds
    std::size_t train = 0;       // 0 = everything available (file-backed kinds)
    std::size_t val = 0;
    std::size_t num_waves = 3;       // fft only
    double frequency_max = 0.5;      // fft only
    std::filesystem::path dir;       // cifar10 | mnist | dir
    std::size_t subsample = 1;       // integer spatial downscale on load
};

struct ModelSection {
    std::size_t k = 7;  // fft_regression kernel size
    std::size_t depth = 2;
    std::size_t k_first = 7;
    std::size_t k_blocks = 3;
    std::size_t h1 = 32;
    std::size_t h2 = 128;
    Downsampling downsampling = Downsampling::strided_conv;
    WindowFamily window = WindowFamily::hamming;
    WindowPlacement placement = WindowPlacement::none;
};

struct TrainSection {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::vector<std::size_t> lr_decay_epochs;
    double lr_decay_factor = 0.1;
    bool shuffle = true;
    bool augmentation = false;
};

struct AnalysisSection {
    bool ortho = false;
    std::size_t ortho_budget = kDbtEntryBudget;
    bool spectra = false;
    std::string spectra_layer = "conv0";
    std::size_t spectra_grid = 64;
};

struct AttackSection {
    bool enabled = false;
    AttackConfig config;
    std::size_t samples = 0;  // 0 = attack the whole validation set
};

// One fully merged, validated variant.
struct VariantConfig {
    std::string name;
    DatasetSection dataset;
    ModelSection model;
    TrainSection train;
    AnalysisSection analysis;
    AttackSection attack;
};

struct ExperimentConfig {
    Task task = Task::classification;
    std::filesystem::path output_dir;
    std::vector<std::uint64_t> seeds{0};
    ScaleKnob scale;
    std::vector<VariantConfig> variants;  // at least one; "default" when none given
    nlohmann::json document;              // normalized source document
};

// Strict parse; throws ConfigError naming the offending key path.
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);

// Reads and parses a config file. Unreadable or syntactically broken files
// are configuration errors too: the config is operator input.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Output roots: relative paths are placed under $WINCONV_OUT_ROOT when that
// variable is set, absolute paths are used as-is.
std::filesystem::path resolve_output_root(const std::filesystem::path& dir);

// FNV-1a 64-bit, used to fingerprint canonicalized config documents.
std::uint64_t fnv1a64(std::string_view bytes);

struct RunReport {
    std::string config_hash;  // 16 hex digits of fnv1a64(config dump)
    double wall_seconds = 0.0;
    // Every file the run wrote, relative to output_dir, sorted; report.json
    // itself is not listed (it indexes the rest).
    std::vector<std::string> artifacts;
    nlohmann::json summary;  // full report.json document
};

// Runs every variant x seed cell: generates or loads the dataset, trains,
// writes <variant>/seed<S>/metrics.csv (epoch, train_loss, val_metric, lr)
// and a checkpoint, plus optional ortho.json / attack.json / spectra dumps,
// then aggregates per-variant means (and sample standard deviations when at
// least two seeds ran) into report.json. Reruns with an identical config
// produce bit-identical CSVs; only wall_seconds varies in report.json.
//
// Per-seed randomness: the dataset comes from Rng(seed) substreams 1 (train)
// and 2 (validation), the model from substream 3, orthogonality chance
// baselines from substream 4, and the training loop from Rng(seed) itself,
// so every variant sees identical data and init draws at equal seeds.
RunReport run_experiment(const ExperimentConfig& cfg);

// Per-epoch and final-metric deltas (b - a) between two report.json
// documents. Reports pair variant-by-variant: by name when both sides have
// the same variant names, or directly when each side has exactly one
// variant. Seed-aligned reports additionally get the spread of per-seed
// deltas. Mismatched metrics, variants, or epoch counts raise FormatError.
nlohmann::json compare_runs(const nlohmann::json& report_a,
                            const nlohmann::json& report_b);

// Comparison table as CSV: variant, metric, epoch, a_mean, b_mean, delta,
// delta_std (blank when seeds are not aligned or fewer than two).
void write_comparison_csv(const std::filesystem::path& path,
                          const nlohmann::json& comparison);

// Writes one PGM per (out-channel, in-channel) slice of the layer's
// effective kernel (min -> 0, max -> 255) plus its frequency response on a
// grid x grid plane (log scale, -80 dB floor). Returns the written paths.
// Unknown layer names raise ConfigError listing the valid ones.
std::vector<std::filesystem::path> dump_kernels(const Model& model,
                                                const std::string& layer,
                                                const std::filesystem::path& out_dir,
                                                std::size_t grid = 64);

// On-disk dataset layout produced by `gen-data` and consumed by the "dir"
// dataset kind and the attack CLI: dataset.json metadata plus raw tensors
// train_images / val_images and either *_targets tensors (fft) or
// *_labels.json arrays (classification).
struct StoredDataset {
    std::string task_tag;  // "fft" | "classification"
    std::size_t size = 0;
    std::size_t classes = 0;  // classification only
    std::uint64_t seed = 0;
    LabeledDataset train;
    LabeledDataset val;
};

std::vector<std::filesystem::path> write_dataset_dir(
    const std::filesystem::path& dir, const StoredDataset& ds);
StoredDataset read_dataset_dir(const std::filesystem::path& dir);

// Dataset materialization shared by run_experiment and the CLI. `base` is
// the per-seed root stream described at run_experiment.
struct PreparedData {
    LabeledDataset train;
    LabeledDataset val;
    std::vector<std::size_t> input_shape;  // [C, H, W]
    std::size_t num_classes = 0;           // classification only
};

PreparedData prepare_dataset(const DatasetSection& section, Task task,
                             double sample_mult, const Rng& base);

// The ModelSpec a variant trains, given the data it will see.
ModelSpec variant_model_spec(const VariantConfig& variant, Task task,
                             const PreparedData& data, double channel_mult);

}  // namespace winconv
