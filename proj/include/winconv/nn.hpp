#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "winconv/conv.hpp"
#include "winconv/data.hpp"
#include "winconv/tensor.hpp"
#include "winconv/window.hpp"

namespace winconv {

enum class Task { fft_regression, classification };
enum class Downsampling { strided_conv, max_pool, none };

struct LayerSpec {
    std::size_t k = 3;
    std::size_t out_channels = 16;
    std::size_t stride = 1;  // meaningful for the first layer only
    std::optional<WindowFamily> window;
};

// Architecture description. Every conv layer is followed by ReLU and uses
// symmetric zero padding floor(k/2). The head is global average pooling,
// then (classification only) one fully connected layer. The downsampling
// mode picks how the first layer reduces resolution: its own stride, a 2x2
// max pool after it (stride forced to 1), or nothing (stride forced to 1).
struct ModelSpec {
    Task task = Task::classification;
    std::vector<std::size_t> input_shape;  // [C, H, W]
    LayerSpec first_layer;
    std::vector<LayerSpec> blocks;  // repeated conv blocks after the first layer
    Downsampling downsampling = Downsampling::strided_conv;
    std::size_t num_outputs = 10;

    std::size_t depth() const { return 1 + blocks.size(); }
    void validate() const;
};

// Single conv + ReLU + global average pool regressor whose output channel
// count equals the flattened spectrum length p*p.
ModelSpec fft_regression_spec(std::size_t p, std::size_t k,
                              std::optional<WindowFamily> window);

// Downsampling-first classifier: k_first (stride 2 under strided_conv) into
// h1 channels, then depth-1 blocks of k_blocks into h2 channels, GAP, FC.
ModelSpec classifier_spec(std::vector<std::size_t> input_shape, std::size_t num_classes,
                          std::size_t depth, std::size_t k_first, std::size_t k_blocks,
                          std::size_t h1, std::size_t h2, Downsampling mode,
                          std::optional<WindowFamily> window_first,
                          std::optional<WindowFamily> window_blocks);

struct Model {
    ModelSpec spec;
    std::vector<ConvLayer> convs;
    Tensor fc_weights;  // [F, num_outputs]; empty for fft_regression
    Tensor fc_bias;     // [num_outputs]; empty for fft_regression
};

struct ParamRef {
    std::string name;  // conv0.weight, conv0.bias, ..., fc.weight, fc.bias
    Tensor* tensor;
    bool is_bias;
};

struct ConstParamRef {
    std::string name;
    const Tensor* tensor;
    bool is_bias;
};

std::vector<ParamRef> parameters(Model& model);
std::vector<ConstParamRef> parameters(const Model& model);
std::size_t parameter_count(const Model& model);

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] with fan_in = k*k*C for
// conv weights and the feature width for the FC weight. Weight tensors are
// filled in parameter order; biases are zeroed and consume no draws.
Model model_init(const ModelSpec& spec, Rng rng);

// Input shape [C,H,W] seen by each conv layer when the model is fed an
// image of the given shape (the first layer's pooling, when configured,
// happens before the second layer).
std::vector<std::vector<std::size_t>> conv_input_shapes(
    const ModelSpec& spec, const std::vector<std::size_t>& input_shape);

struct SampleCache {
    Tensor input;              // [C, H, W]
    std::vector<Tensor> post;  // ReLU output of each conv layer
    PoolResult pool;           // set when downsampling == max_pool
    Tensor features;           // pooled feature vector [F]
};

struct BatchCache {
    std::vector<SampleCache> samples;
};

// Run the network on a batch [B,C,H,W], producing [B, num_outputs]. Pass a
// cache to retain the activations backward() needs.
Tensor forward(const Model& model, const Tensor& batch, BatchCache* cache = nullptr);

struct ModelGrads {
    // Aligned one-to-one with parameters(model); empty when parameter
    // gradients were not requested.
    std::vector<Tensor> params;
    Tensor dinput;  // [B, C, H, W]; empty when not requested
};

// Gradients of a scalar loss given dout = dL/doutput for the cached batch.
// Per-parameter gradients accumulate over samples in ascending sample order.
ModelGrads backward(const Model& model, const BatchCache& cache, const Tensor& dout,
                    bool want_dinput = false, bool want_param_grads = true);

struct LossResult {
    double value = 0.0;
    Tensor dpred;
};

// Mean squared error over all B*n entries: L = sum((pred-target)^2)/(B*n),
// dpred = 2*(pred-target)/(B*n).
LossResult loss_mse(const Tensor& pred, const Tensor& target);

// Mean over the batch of -log softmax(logits)[label], computed with
// max-subtraction. dlogits = (softmax - onehot)/B.
LossResult loss_softmax_ce(const Tensor& logits, std::span<const int> labels);

enum class OptimizerKind { sgd_momentum, adam };

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::sgd_momentum;
    double lr = 0.01;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // coupled L2, added to weight gradients only
    std::vector<Tensor> slot1;  // velocity (SGD) or first moment (ADAM)
    std::vector<Tensor> slot2;  // second moment (ADAM)
    std::uint64_t step_count = 0;
};

OptimizerState make_sgd_momentum(double lr, double momentum = 0.9,
                                 double weight_decay = 0.0);
OptimizerState make_adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8, double weight_decay = 0.0);

// One update of every parameter from grads (which must carry parameter
// gradients). Non-finite gradients abort with a NumericError naming the
// parameter. step_count increments by exactly 1.
void optimizer_step(OptimizerState& opt, Model& model, const ModelGrads& grads);

struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    double initial_lr = 0.01;
    std::vector<std::size_t> lr_decay_epochs;  // 1-based, ascending
    double lr_decay_factor = 0.1;
    std::uint64_t seed = 0;
    bool shuffle = true;
    bool augmentation = false;
};

// initial_lr * factor^(number of configured decay epochs <= epoch), with
// epochs numbered from 1.
double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_metric = 0.0;  // MSE for regression, accuracy for classification
    double lr = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
};

// Epochs of shuffled mini-batches. All randomness (shuffle order, then the
// augmentation draws of each epoch in batch order) comes from a single
// stream seeded with cfg.seed, so runs are bit-reproducible. The reported
// train loss is the sample-weighted mean of batch losses; the validation
// metric is computed at each epoch end without augmentation. The schedule
// drives opt.lr; any preset value is overwritten.
TrainReport train(Model& model, const LabeledDataset& train_set,
                  const LabeledDataset& val_set, const TrainConfig& cfg,
                  OptimizerState& opt);

// Mean squared error of model predictions against ds.targets.
double evaluate_mse(const Model& model, const LabeledDataset& ds,
                    std::size_t batch_size = 64);

// Fraction of samples whose argmax logit (first maximum on ties) equals the
// label.
double evaluate_accuracy(const Model& model, const LabeledDataset& ds,
                         std::size_t batch_size = 64);

}  // namespace winconv
