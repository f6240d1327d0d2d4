#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "winconv/tensor.hpp"

namespace winconv {

enum class Split { train, validation };

// Images plus per-sample supervision. Classification sets use `labels`
// (one int per sample, within the class count); regression sets use
// `targets` ([N, n], one row per sample). The unused field stays empty.
struct LabeledDataset {
    Tensor images;  // [N, C, H, W]
    std::vector<int> labels;
    Tensor targets;
    Split split = Split::train;

    std::size_t count() const { return images.rank() == 0 ? 0 : images.extent(0); }
};

struct SineWave {
    double frequency = 0.0;    // cycles/pixel
    double orientation = 0.0;  // radians
    double phase = 0.0;        // radians
};

struct SineImageSpec {
    std::size_t size = 32;       // P, pixels per side
    std::size_t num_waves = 3;
    double frequency_max = 0.5;  // exclusive upper bound; 0.5 is Nyquist
};

struct SineImage {
    Tensor image;  // [1, P, P]; the first spatial axis is the x of the formula
    std::vector<SineWave> waves;
};

// Pixel (x, y) of the rendered plane is sum_i sin(2*pi*(x*cos t_i + y*sin t_i)
// * w_i + p_i) over the given waves, with x the first spatial axis and pixel
// coordinates starting at 0. Values lie in [-num_waves, num_waves].
Tensor render_sine_image(const SineImageSpec& spec, const std::vector<SineWave>& waves);

// Draws spec.num_waves waves, consuming three uniforms per wave in the order
// frequency ~ U[0, frequency_max), orientation ~ U[0, pi), phase ~ U[0, 2pi),
// then renders them.
SineImage gen_sine_image(Rng& rng, const SineImageSpec& spec);

struct FftDataset {
    LabeledDataset train;
    LabeledDataset val;
};

// Regression dataset: images are random sine superpositions, targets the
// row-major flattened 2-D DFT magnitude of each image ([N, P*P]). Sample i
// of the combined set draws from rng.substream(i); train takes indices
// [0, n_train), validation [n_train, n_train + n_val), so the two splits are
// disjoint streams derived only from the seed.
FftDataset gen_fft_dataset(const Rng& rng, std::size_t n_train, std::size_t n_val,
                           const SineImageSpec& spec);

// IDX-format image/label file pair (big-endian headers, magic 0x00000803 for
// images and 0x00000801 for labels). Pixels are scaled to [0, 1] by /255;
// images come back as [N, 1, H, W]. Malformed files raise FormatError naming
// the byte offset of the problem.
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path);

// Inverse of load_idx for datasets with images [N, 1, H, W] in [0, 1] and
// labels in [0, 9]. Pixels are quantized to round(v * 255).
void write_idx(const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path, const LabeledDataset& ds);

// CIFAR-10 binary batches: each record is 1 label byte plus 3 row-major
// 32x32 planes (R, G, B), 3073 bytes total. Images come back as
// [N, 3, 32, 32] scaled by /255.
LabeledDataset load_cifar10(const std::vector<std::filesystem::path>& batch_paths);
void write_cifar10_batch(const std::filesystem::path& path, const LabeledDataset& ds);

// Downscale [C, H, W] by an integer factor. Output pixel (p, q) samples the
// input at continuous coordinates ((p+0.5)*f - 0.5, (q+0.5)*f - 0.5) with
// edge-clamped bilinear weights. H and W must be divisible by the factor.
Tensor bilinear_subsample(const Tensor& x, std::size_t factor = 2);

// Mirror [C, H, W] along its last (width) axis.
Tensor flip_horizontal(const Tensor& x);

// Shift content by integer offsets (rows down, columns right for positive
// values), filling vacated pixels with zero.
Tensor translate_image(const Tensor& x, long long d_rows, long long d_cols);

// Training augmentation: flip horizontally with probability one half, then
// translate by offsets drawn uniformly from {-4, ..., +4} per axis. Consumes
// exactly one unit draw (the coin) and two below(9) draws (row offset then
// column offset), in that order.
Tensor augment(Rng& rng, const Tensor& x);

// Synthetic 10-class stand-in for natural 32x32 RGB images: class c is an
// oriented grating in orientation bin c * pi/10 (with small jitter), summed
// with a weaker random distractor grating, mapped into [0, 1]. Labels cycle
// 0..9 with sample index; sample i draws from rng.substream(i).
LabeledDataset gen_gratings_dataset(const Rng& rng, std::size_t n, std::size_t size = 32,
                                    Split split = Split::train);

// Copy of sample `index` from a [N, ...] tensor, with the leading axis
// dropped ([C, H, W] for image stacks, [n] for target matrices).
Tensor dataset_sample(const Tensor& t, std::size_t index);

// Rows of a [N, ...] tensor gathered into a new leading axis in the given
// order (duplicates allowed).
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> order);

}  // namespace winconv
