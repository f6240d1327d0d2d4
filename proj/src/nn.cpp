#include "winconv/nn.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

namespace winconv {

namespace {

std::size_t spatial_size(const Tensor& t) { return t.extent(1) * t.extent(2); }

Tensor relu(const Tensor& pre) {
    Tensor out(pre.shape());
    for (std::size_t i = 0; i < pre.size(); ++i) out[i] = pre[i] > 0.0 ? pre[i] : 0.0;
    return out;
}

// dL/dpre from dL/dpost using the cached post-activation as the mask:
// post > 0 exactly where pre > 0.
Tensor relu_backward(const Tensor& dpost, const Tensor& post) {
    Tensor out(dpost.shape());
    for (std::size_t i = 0; i < dpost.size(); ++i) out[i] = post[i] > 0.0 ? dpost[i] : 0.0;
    return out;
}

void acc_add(Tensor& acc, const Tensor& g) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

std::size_t effective_first_stride(const ModelSpec& spec) {
    return spec.downsampling == Downsampling::strided_conv ? spec.first_layer.stride : 1;
}

void check_layer_spec(const LayerSpec& l, bool is_first, std::size_t index) {
    if (l.k == 0) throw ConfigError("layer " + std::to_string(index) + ": kernel size 0");
    if (l.out_channels == 0) {
        throw ConfigError("layer " + std::to_string(index) + ": zero output channels");
    }
    if (l.stride == 0) throw ConfigError("layer " + std::to_string(index) + ": stride 0");
    if (!is_first && l.stride != 1) {
        throw ConfigError("layer " + std::to_string(index) +
                          ": only the first layer may have a stride");
    }
}

const Tensor& gap_input(const SampleCache& sc, const ModelSpec& spec) {
    if (spec.downsampling == Downsampling::max_pool && spec.depth() == 1) return sc.pool.y;
    return sc.post.back();
}

}  // namespace

void ModelSpec::validate() const {
    if (input_shape.size() != 3) {
        throw ConfigError("input_shape must be [C,H,W], got rank " +
                          std::to_string(input_shape.size()));
    }
    for (std::size_t e : input_shape) {
        if (e == 0) throw ConfigError("input_shape has a zero extent");
    }
    if (num_outputs == 0) throw ConfigError("num_outputs must be >= 1");
    check_layer_spec(first_layer, true, 0);
    for (std::size_t i = 0; i < blocks.size(); ++i) check_layer_spec(blocks[i], false, i + 1);

    if (task == Task::fft_regression) {
        if (!blocks.empty()) {
            throw ConfigError("the regression model is a single conv layer; blocks must be empty");
        }
        if (downsampling != Downsampling::none) {
            throw ConfigError("the regression model does not downsample");
        }
        if (first_layer.stride != 1) {
            throw ConfigError("the regression model requires stride 1");
        }
        const std::size_t hw = input_shape[1] * input_shape[2];
        if (num_outputs != hw) {
            throw ConfigError("regression num_outputs " + std::to_string(num_outputs) +
                              " must equal H*W = " + std::to_string(hw));
        }
        if (first_layer.out_channels != num_outputs) {
            throw ConfigError("regression out_channels " +
                              std::to_string(first_layer.out_channels) +
                              " must equal num_outputs " + std::to_string(num_outputs));
        }
    } else {
        if (downsampling != Downsampling::strided_conv && first_layer.stride != 1) {
            throw ConfigError("first-layer stride must be 1 unless downsampling is strided_conv");
        }
    }

    // Confirms the kernels fit and pooling sees even extents.
    conv_input_shapes(*this, input_shape);
}

ModelSpec fft_regression_spec(std::size_t p, std::size_t k,
                              std::optional<WindowFamily> window) {
    ModelSpec spec;
    spec.task = Task::fft_regression;
    spec.input_shape = {1, p, p};
    spec.first_layer = LayerSpec{k, p * p, 1, window};
    spec.downsampling = Downsampling::none;
    spec.num_outputs = p * p;
    spec.validate();
    return spec;
}

ModelSpec classifier_spec(std::vector<std::size_t> input_shape, std::size_t num_classes,
                          std::size_t depth, std::size_t k_first, std::size_t k_blocks,
                          std::size_t h1, std::size_t h2, Downsampling mode,
                          std::optional<WindowFamily> window_first,
                          std::optional<WindowFamily> window_blocks) {
    if (depth == 0) throw ConfigError("classifier depth must be >= 1");
    ModelSpec spec;
    spec.task = Task::classification;
    spec.input_shape = std::move(input_shape);
    spec.first_layer =
        LayerSpec{k_first, h1, mode == Downsampling::strided_conv ? std::size_t{2} : 1,
                  window_first};
    for (std::size_t i = 1; i < depth; ++i) {
        spec.blocks.push_back(LayerSpec{k_blocks, h2, 1, window_blocks});
    }
    spec.downsampling = mode;
    spec.num_outputs = num_classes;
    spec.validate();
    return spec;
}

std::vector<std::vector<std::size_t>> conv_input_shapes(
    const ModelSpec& spec, const std::vector<std::size_t>& input_shape) {
    if (input_shape.size() != 3) throw ShapeError("analysis input must be [C,H,W]");
    if (input_shape[0] != spec.input_shape[0]) {
        throw ShapeError("analysis input has " + std::to_string(input_shape[0]) +
                         " channels, the model expects " +
                         std::to_string(spec.input_shape[0]));
    }
    std::vector<std::vector<std::size_t>> shapes;
    std::vector<std::size_t> cur = input_shape;
    for (std::size_t l = 0; l < spec.depth(); ++l) {
        shapes.push_back(cur);
        const LayerSpec& ls = l == 0 ? spec.first_layer : spec.blocks[l - 1];
        ConvGeometry geom{ls.k, ls.k, l == 0 ? effective_first_stride(spec) : 1, ls.k / 2};
        std::size_t h = geom.out_extent(cur[1], ls.k);
        std::size_t w = geom.out_extent(cur[2], ls.k);
        if (l == 0 && spec.downsampling == Downsampling::max_pool) {
            if (h % 2 != 0 || w % 2 != 0) {
                throw ShapeError("max pooling needs even extents, first layer yields " +
                                 std::to_string(h) + "x" + std::to_string(w));
            }
            h /= 2;
            w /= 2;
        }
        cur = {ls.out_channels, h, w};
    }
    return shapes;
}

std::vector<ParamRef> parameters(Model& model) {
    std::vector<ParamRef> refs;
    for (std::size_t l = 0; l < model.convs.size(); ++l) {
        const std::string base = "conv" + std::to_string(l);
        refs.push_back({base + ".weight", &model.convs[l].weights, false});
        refs.push_back({base + ".bias", &model.convs[l].bias, true});
    }
    if (model.fc_weights.size() > 0) {
        refs.push_back({"fc.weight", &model.fc_weights, false});
        refs.push_back({"fc.bias", &model.fc_bias, true});
    }
    return refs;
}

std::vector<ConstParamRef> parameters(const Model& model) {
    std::vector<ConstParamRef> refs;
    for (const ParamRef& r : parameters(const_cast<Model&>(model))) {
        refs.push_back({r.name, r.tensor, r.is_bias});
    }
    return refs;
}

std::size_t parameter_count(const Model& model) {
    std::size_t total = 0;
    for (const ConstParamRef& r : parameters(model)) total += r.tensor->size();
    return total;
}

Model model_init(const ModelSpec& spec, Rng rng) {
    spec.validate();
    Model model;
    model.spec = spec;

    std::size_t in_channels = spec.input_shape[0];
    for (std::size_t l = 0; l < spec.depth(); ++l) {
        const LayerSpec& ls = l == 0 ? spec.first_layer : spec.blocks[l - 1];
        const std::size_t fan_in = ls.k * ls.k * in_channels;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor weights =
            rng_uniform(rng, -bound, bound, {ls.k, ls.k, in_channels, ls.out_channels});
        Tensor bias({ls.out_channels}, 0.0);
        ConvGeometry geom{ls.k, ls.k, l == 0 ? effective_first_stride(spec) : 1, ls.k / 2};
        std::optional<WindowSpec> wspec;
        if (ls.window) wspec = WindowSpec{*ls.window, ls.k, ls.k};
        model.convs.push_back(make_conv_layer(std::move(weights), std::move(bias), geom, wspec));
        in_channels = ls.out_channels;
    }

    if (spec.task == Task::classification) {
        const std::size_t f = in_channels;
        const double bound = 1.0 / std::sqrt(static_cast<double>(f));
        model.fc_weights = rng_uniform(rng, -bound, bound, {f, spec.num_outputs});
        model.fc_bias = Tensor({spec.num_outputs}, 0.0);
    }
    return model;
}

Tensor forward(const Model& model, const Tensor& batch, BatchCache* cache) {
    const ModelSpec& spec = model.spec;
    if (batch.rank() != 4) {
        throw ShapeError("forward expects a [B,C,H,W] batch, got rank " +
                         std::to_string(batch.rank()));
    }
    for (std::size_t a = 0; a < 3; ++a) {
        if (batch.extent(a + 1) != spec.input_shape[a]) {
            throw ShapeError("batch sample shape [" + std::to_string(batch.extent(1)) + "," +
                             std::to_string(batch.extent(2)) + "," +
                             std::to_string(batch.extent(3)) +
                             "] does not match the model input [" +
                             std::to_string(spec.input_shape[0]) + "," +
                             std::to_string(spec.input_shape[1]) + "," +
                             std::to_string(spec.input_shape[2]) + "]");
        }
    }

    const std::size_t b_count = batch.extent(0);
    Tensor out({b_count, spec.num_outputs});
    if (cache) {
        cache->samples.clear();
        cache->samples.resize(b_count);
    }

    for (std::size_t b = 0; b < b_count; ++b) {
        SampleCache local;
        SampleCache& sc = cache ? cache->samples[b] : local;
        sc.input = dataset_sample(batch, b);
        sc.post.clear();
        sc.post.reserve(model.convs.size());

        const Tensor* cur = &sc.input;
        for (std::size_t l = 0; l < model.convs.size(); ++l) {
            Tensor post = relu(conv2d_forward(*cur, model.convs[l]));
            sc.post.push_back(std::move(post));
            if (l == 0 && spec.downsampling == Downsampling::max_pool) {
                sc.pool = max_pool2x2(sc.post.back());
                cur = &sc.pool.y;
            } else {
                cur = &sc.post.back();
            }
        }

        const Tensor& head = *cur;
        const std::size_t f = head.extent(0);
        const double inv_hw = 1.0 / static_cast<double>(spatial_size(head));
        Tensor feat({f});
        for (std::size_t m = 0; m < f; ++m) {
            const double* plane = head.data() + m * spatial_size(head);
            double sum = 0.0;
            for (std::size_t i = 0; i < spatial_size(head); ++i) sum += plane[i];
            feat[m] = sum * inv_hw;
        }

        double* row = out.data() + b * spec.num_outputs;
        if (spec.task == Task::classification) {
            for (std::size_t o = 0; o < spec.num_outputs; ++o) row[o] = model.fc_bias[o];
            for (std::size_t i = 0; i < f; ++i) {
                const double fv = feat[i];
                const double* wrow = model.fc_weights.data() + i * spec.num_outputs;
                for (std::size_t o = 0; o < spec.num_outputs; ++o) row[o] += fv * wrow[o];
            }
        } else {
            std::memcpy(row, feat.data(), f * sizeof(double));
        }
        sc.features = std::move(feat);
    }
    return out;
}

ModelGrads backward(const Model& model, const BatchCache& cache, const Tensor& dout,
                    bool want_dinput, bool want_param_grads) {
    const ModelSpec& spec = model.spec;
    if (dout.rank() != 2 || dout.extent(1) != spec.num_outputs) {
        throw ShapeError("dout must be [B, num_outputs]");
    }
    const std::size_t b_count = dout.extent(0);
    if (cache.samples.size() != b_count) {
        throw ShapeError("cache holds " + std::to_string(cache.samples.size()) +
                         " samples, dout has " + std::to_string(b_count));
    }

    ModelGrads grads;
    auto refs = parameters(model);
    if (want_param_grads) {
        grads.params.reserve(refs.size());
        for (const ConstParamRef& r : refs) grads.params.emplace_back(r.tensor->shape(), 0.0);
    }
    if (want_dinput) {
        grads.dinput = Tensor({b_count, spec.input_shape[0], spec.input_shape[1],
                               spec.input_shape[2]});
    }
    const std::size_t fc_w_idx = 2 * model.convs.size();

    for (std::size_t b = 0; b < b_count; ++b) {
        const SampleCache& sc = cache.samples[b];
        const double* dout_row = dout.data() + b * spec.num_outputs;

        const Tensor& head = gap_input(sc, spec);
        const std::size_t f = head.extent(0);
        Tensor dfeat({f});
        if (spec.task == Task::classification) {
            if (want_param_grads) {
                Tensor& dfc_w = grads.params[fc_w_idx];
                Tensor& dfc_b = grads.params[fc_w_idx + 1];
                for (std::size_t i = 0; i < f; ++i) {
                    const double fv = sc.features[i];
                    double* wrow = dfc_w.data() + i * spec.num_outputs;
                    for (std::size_t o = 0; o < spec.num_outputs; ++o) {
                        wrow[o] += fv * dout_row[o];
                    }
                }
                for (std::size_t o = 0; o < spec.num_outputs; ++o) dfc_b[o] += dout_row[o];
            }
            for (std::size_t i = 0; i < f; ++i) {
                const double* wrow = model.fc_weights.data() + i * spec.num_outputs;
                double sum = 0.0;
                for (std::size_t o = 0; o < spec.num_outputs; ++o) sum += wrow[o] * dout_row[o];
                dfeat[i] = sum;
            }
        } else {
            std::memcpy(dfeat.data(), dout_row, f * sizeof(double));
        }

        const double inv_hw = 1.0 / static_cast<double>(spatial_size(head));
        Tensor dcur(head.shape());
        for (std::size_t m = 0; m < f; ++m) {
            const double g = dfeat[m] * inv_hw;
            double* plane = dcur.data() + m * spatial_size(head);
            for (std::size_t i = 0; i < spatial_size(head); ++i) plane[i] = g;
        }

        for (std::size_t li = model.convs.size(); li-- > 0;) {
            Tensor dpost;
            if (li == 0 && spec.downsampling == Downsampling::max_pool) {
                dpost = max_pool2x2_backward(sc.pool, dcur, sc.post[0].shape());
            } else {
                dpost = std::move(dcur);
            }
            Tensor dpre = relu_backward(dpost, sc.post[li]);

            const Tensor& layer_in =
                li == 0 ? sc.input
                        : (li == 1 && spec.downsampling == Downsampling::max_pool
                               ? sc.pool.y
                               : sc.post[li - 1]);
            const bool need_dx = li > 0 || want_dinput;
            ConvGrads cg =
                conv2d_backward(layer_in, model.convs[li], dpre, need_dx, want_param_grads);
            if (want_param_grads) {
                acc_add(grads.params[2 * li], cg.dweights);
                acc_add(grads.params[2 * li + 1], cg.dbias);
            }
            dcur = std::move(cg.dx);
        }

        if (want_dinput) {
            std::memcpy(grads.dinput.data() + b * dcur.size(), dcur.data(),
                        dcur.size() * sizeof(double));
        }
    }
    return grads;
}

LossResult loss_mse(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) throw ShapeError("MSE operands differ in shape");
    if (pred.rank() != 2) throw ShapeError("MSE expects [B, n] tensors");
    LossResult res;
    res.dpred = Tensor(pred.shape());
    const double scale = 1.0 / static_cast<double>(pred.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        sum += d * d;
        res.dpred[i] = 2.0 * d * scale;
    }
    res.value = sum * scale;
    return res;
}

LossResult loss_softmax_ce(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2) throw ShapeError("cross entropy expects [B, n] logits");
    const std::size_t b_count = logits.extent(0), n = logits.extent(1);
    if (labels.size() != b_count) {
        throw ShapeError("cross entropy got " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(b_count) + " rows");
    }
    LossResult res;
    res.dpred = Tensor(logits.shape());
    const double inv_b = 1.0 / static_cast<double>(b_count);
    double total = 0.0;
    for (std::size_t b = 0; b < b_count; ++b) {
        const int label = labels[b];
        if (label < 0 || static_cast<std::size_t>(label) >= n) {
            throw RangeError("label " + std::to_string(label) + " outside [0," +
                             std::to_string(n) + ") at row " + std::to_string(b));
        }
        const double* row = logits.data() + b * n;
        double m = row[0];
        for (std::size_t i = 1; i < n; ++i) m = std::max(m, row[i]);
        double sumexp = 0.0;
        for (std::size_t i = 0; i < n; ++i) sumexp += std::exp(row[i] - m);
        total += std::log(sumexp) - (row[label] - m);

        double* drow = res.dpred.data() + b * n;
        for (std::size_t i = 0; i < n; ++i) {
            const double soft = std::exp(row[i] - m) / sumexp;
            drow[i] = (soft - (static_cast<std::size_t>(label) == i ? 1.0 : 0.0)) * inv_b;
        }
    }
    res.value = total * inv_b;
    return res;
}

OptimizerState make_sgd_momentum(double lr, double momentum, double weight_decay) {
    OptimizerState opt;
    opt.kind = OptimizerKind::sgd_momentum;
    opt.lr = lr;
    opt.momentum = momentum;
    opt.weight_decay = weight_decay;
    return opt;
}

OptimizerState make_adam(double lr, double beta1, double beta2, double eps,
                         double weight_decay) {
    OptimizerState opt;
    opt.kind = OptimizerKind::adam;
    opt.lr = lr;
    opt.beta1 = beta1;
    opt.beta2 = beta2;
    opt.eps = eps;
    opt.weight_decay = weight_decay;
    return opt;
}

void optimizer_step(OptimizerState& opt, Model& model, const ModelGrads& grads) {
    auto refs = parameters(model);
    if (grads.params.size() != refs.size()) {
        throw ConfigError("optimizer_step needs parameter gradients (got " +
                          std::to_string(grads.params.size()) + " tensors for " +
                          std::to_string(refs.size()) + " parameters)");
    }
    const bool need_second = opt.kind == OptimizerKind::adam;
    if (opt.slot1.empty()) {
        for (const ParamRef& r : refs) opt.slot1.emplace_back(r.tensor->shape(), 0.0);
        if (need_second) {
            for (const ParamRef& r : refs) opt.slot2.emplace_back(r.tensor->shape(), 0.0);
        }
    }
    if (opt.slot1.size() != refs.size() || (need_second && opt.slot2.size() != refs.size())) {
        throw ConfigError("optimizer state does not match the model's parameter list");
    }

    opt.step_count += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step_count));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step_count));

    for (std::size_t p = 0; p < refs.size(); ++p) {
        Tensor& w = *refs[p].tensor;
        const Tensor& g0 = grads.params[p];
        if (!g0.same_shape(w)) {
            throw ShapeError("gradient shape mismatch for " + refs[p].name);
        }
        const double wd = refs[p].is_bias ? 0.0 : opt.weight_decay;
        Tensor& s1 = opt.slot1[p];
        if (opt.kind == OptimizerKind::sgd_momentum) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double g = g0[i] + wd * w[i];
                if (!std::isfinite(g)) {
                    throw NumericError("non-finite gradient in " + refs[p].name +
                                       " at index " + std::to_string(i));
                }
                s1[i] = opt.momentum * s1[i] + g;
                w[i] -= opt.lr * s1[i];
            }
        } else {
            Tensor& s2 = opt.slot2[p];
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double g = g0[i] + wd * w[i];
                if (!std::isfinite(g)) {
                    throw NumericError("non-finite gradient in " + refs[p].name +
                                       " at index " + std::to_string(i));
                }
                s1[i] = opt.beta1 * s1[i] + (1.0 - opt.beta1) * g;
                s2[i] = opt.beta2 * s2[i] + (1.0 - opt.beta2) * g * g;
                const double m_hat = s1[i] / bc1;
                const double v_hat = s2[i] / bc2;
                w[i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
            }
        }
    }
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
    double lr = cfg.initial_lr;
    for (std::size_t d : cfg.lr_decay_epochs) {
        if (d <= epoch) lr *= cfg.lr_decay_factor;
    }
    return lr;
}

namespace {

void check_train_inputs(const Model& model, const LabeledDataset& ds, const char* split) {
    const ModelSpec& spec = model.spec;
    if (ds.count() == 0) throw SizeError(std::string(split) + " split is empty");
    if (spec.task == Task::fft_regression) {
        if (ds.targets.rank() != 2 || ds.targets.extent(0) != ds.count() ||
            ds.targets.extent(1) != spec.num_outputs) {
            throw ShapeError(std::string(split) +
                             " split needs [N, num_outputs] regression targets");
        }
    } else {
        if (ds.labels.size() != ds.count()) {
            throw ShapeError(std::string(split) + " split needs one label per sample");
        }
        for (std::size_t i = 0; i < ds.labels.size(); ++i) {
            if (ds.labels[i] < 0 ||
                static_cast<std::size_t>(ds.labels[i]) >= spec.num_outputs) {
                throw RangeError("label " + std::to_string(ds.labels[i]) +
                                 " outside [0," + std::to_string(spec.num_outputs) +
                                 ") at sample " + std::to_string(i));
            }
        }
    }
}

}  // namespace

TrainReport train(Model& model, const LabeledDataset& train_set,
                  const LabeledDataset& val_set, const TrainConfig& cfg,
                  OptimizerState& opt) {
    model.spec.validate();
    check_train_inputs(model, train_set, "train");
    check_train_inputs(model, val_set, "validation");
    if (cfg.batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (cfg.lr_decay_factor <= 0.0) throw ConfigError("lr_decay_factor must be positive");
    if (cfg.augmentation && model.spec.task == Task::fft_regression) {
        throw ConfigError("augmentation would break the image-to-spectrum pairing");
    }

    const std::size_t n = train_set.count();
    Rng rng(cfg.seed);
    TrainReport report;

    std::vector<std::size_t> order(n);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        opt.lr = lr_at_epoch(cfg, epoch);
        std::iota(order.begin(), order.end(), std::size_t{0});
        if (cfg.shuffle) {
            for (std::size_t i = n - 1; i >= 1; --i) {
                const std::size_t j = rng.below(i + 1);
                std::swap(order[i], order[j]);
            }
        }

        double weighted_loss = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t bsz = std::min(cfg.batch_size, n - start);
            std::span<const std::size_t> idx(order.data() + start, bsz);
            Tensor images = gather_rows(train_set.images, idx);
            if (cfg.augmentation) {
                for (std::size_t b = 0; b < bsz; ++b) {
                    Tensor sample = augment(rng, dataset_sample(images, b));
                    std::memcpy(images.data() + b * sample.size(), sample.data(),
                                sample.size() * sizeof(double));
                }
            }

            BatchCache cache;
            Tensor pred = forward(model, images, &cache);
            LossResult loss;
            if (model.spec.task == Task::fft_regression) {
                loss = loss_mse(pred, gather_rows(train_set.targets, idx));
            } else {
                std::vector<int> labels(bsz);
                for (std::size_t b = 0; b < bsz; ++b) labels[b] = train_set.labels[idx[b]];
                loss = loss_softmax_ce(pred, labels);
            }
            if (!std::isfinite(loss.value)) {
                throw NumericError("non-finite training loss in epoch " +
                                   std::to_string(epoch) + " at batch offset " +
                                   std::to_string(start));
            }
            ModelGrads grads = backward(model, cache, loss.dpred, false, true);
            optimizer_step(opt, model, grads);
            weighted_loss += loss.value * static_cast<double>(bsz);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = weighted_loss / static_cast<double>(n);
        stats.val_metric = model.spec.task == Task::fft_regression
                               ? evaluate_mse(model, val_set, cfg.batch_size)
                               : evaluate_accuracy(model, val_set, cfg.batch_size);
        stats.lr = opt.lr;
        report.epochs.push_back(stats);
    }
    return report;
}

double evaluate_mse(const Model& model, const LabeledDataset& ds, std::size_t batch_size) {
    check_train_inputs(model, ds, "evaluation");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    const std::size_t n = ds.count();
    double sum = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t bsz = std::min(batch_size, n - start);
        idx.resize(bsz);
        std::iota(idx.begin(), idx.end(), start);
        Tensor pred = forward(model, gather_rows(ds.images, idx));
        Tensor target = gather_rows(ds.targets, idx);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred[i] - target[i];
            sum += d * d;
        }
    }
    return sum / static_cast<double>(n * model.spec.num_outputs);
}

double evaluate_accuracy(const Model& model, const LabeledDataset& ds,
                         std::size_t batch_size) {
    check_train_inputs(model, ds, "evaluation");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    const std::size_t n = ds.count();
    const std::size_t classes = model.spec.num_outputs;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t bsz = std::min(batch_size, n - start);
        idx.resize(bsz);
        std::iota(idx.begin(), idx.end(), start);
        Tensor logits = forward(model, gather_rows(ds.images, idx));
        for (std::size_t b = 0; b < bsz; ++b) {
            const double* row = logits.data() + b * classes;
            std::size_t best = 0;
            for (std::size_t o = 1; o < classes; ++o) {
                if (row[o] > row[best]) best = o;
            }
            if (static_cast<int>(best) == ds.labels[start + b]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace winconv
