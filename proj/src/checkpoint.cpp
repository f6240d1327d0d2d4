#include "winconv/checkpoint.hpp"

#include <fstream>
#include <string>
#include <vector>

#include "winconv/io.hpp"

namespace winconv {

namespace {

using nlohmann::json;

constexpr const char* kFormatTag = "winconv-checkpoint-v1";

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& ctx) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (item.key() == a) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError(ctx + ": unknown key \"" + item.key() + "\"");
    }
}

const json& require_key(const json& j, const char* key, const std::string& ctx) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(ctx + ": missing key \"" + key + "\"");
    return *it;
}

std::size_t as_uint(const json& j, const std::string& ctx) {
    if (j.is_number_unsigned()) return j.get<std::size_t>();
    if (j.is_number_integer()) {
        const auto v = j.get<std::int64_t>();
        if (v >= 0) return static_cast<std::size_t>(v);
    }
    throw ConfigError(ctx + " must be a non-negative integer");
}

std::string window_name(const std::optional<WindowFamily>& w) {
    if (!w) return "none";
    return *w == WindowFamily::hamming ? "hamming" : "rectangular";
}

std::optional<WindowFamily> window_from_name(const std::string& name,
                                             const std::string& ctx) {
    if (name == "none") return std::nullopt;
    if (name == "hamming") return WindowFamily::hamming;
    if (name == "rectangular") return WindowFamily::rectangular;
    throw ConfigError(ctx + ": unknown window \"" + name + "\"");
}

json layer_to_json(const LayerSpec& l) {
    json j;
    j["k"] = l.k;
    j["out_channels"] = l.out_channels;
    j["stride"] = l.stride;
    j["window"] = window_name(l.window);
    return j;
}

LayerSpec layer_from_json(const json& j, const std::string& ctx) {
    if (!j.is_object()) throw ConfigError(ctx + " must be a JSON object");
    reject_unknown_keys(j, {"k", "out_channels", "stride", "window"}, ctx);
    LayerSpec l;
    l.k = as_uint(require_key(j, "k", ctx), ctx + ".k");
    l.out_channels = as_uint(require_key(j, "out_channels", ctx), ctx + ".out_channels");
    l.stride = j.contains("stride") ? as_uint(j["stride"], ctx + ".stride") : 1;
    if (j.contains("window")) {
        const json& w = j["window"];
        if (w.is_null()) {
            l.window = std::nullopt;
        } else if (w.is_string()) {
            l.window = window_from_name(w.get<std::string>(), ctx + ".window");
        } else {
            throw ConfigError(ctx + ".window must be a string or null");
        }
    } else {
        l.window = std::nullopt;
    }
    return l;
}

}  // namespace

json model_spec_to_json(const ModelSpec& spec) {
    json j;
    j["task"] = spec.task == Task::fft_regression ? "fft_regression" : "classification";
    j["input_shape"] = spec.input_shape;
    j["first_layer"] = layer_to_json(spec.first_layer);
    json blocks = json::array();
    for (const LayerSpec& b : spec.blocks) blocks.push_back(layer_to_json(b));
    j["blocks"] = blocks;
    switch (spec.downsampling) {
        case Downsampling::strided_conv: j["downsampling"] = "strided_conv"; break;
        case Downsampling::max_pool: j["downsampling"] = "max_pool"; break;
        case Downsampling::none: j["downsampling"] = "none"; break;
    }
    j["num_outputs"] = spec.num_outputs;
    return j;
}

ModelSpec model_spec_from_json(const json& j) {
    const std::string ctx = "model";
    if (!j.is_object()) throw ConfigError(ctx + " must be a JSON object");
    reject_unknown_keys(
        j, {"task", "input_shape", "first_layer", "blocks", "downsampling", "num_outputs"},
        ctx);

    ModelSpec spec;
    const json& jtask = require_key(j, "task", ctx);
    if (!jtask.is_string()) throw ConfigError(ctx + ".task must be a string");
    const std::string task = jtask.get<std::string>();
    if (task == "fft_regression") {
        spec.task = Task::fft_regression;
    } else if (task == "classification") {
        spec.task = Task::classification;
    } else {
        throw ConfigError(ctx + ".task must be \"fft_regression\" or \"classification\"");
    }

    const json& shape = require_key(j, "input_shape", ctx);
    if (!shape.is_array()) throw ConfigError(ctx + ".input_shape must be an array");
    spec.input_shape.clear();
    for (const json& e : shape) {
        spec.input_shape.push_back(as_uint(e, ctx + ".input_shape entry"));
    }

    spec.first_layer = layer_from_json(require_key(j, "first_layer", ctx),
                                       ctx + ".first_layer");
    spec.blocks.clear();
    if (j.contains("blocks")) {
        const json& blocks = j["blocks"];
        if (!blocks.is_array()) throw ConfigError(ctx + ".blocks must be an array");
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            spec.blocks.push_back(layer_from_json(
                blocks[i], ctx + ".blocks[" + std::to_string(i) + "]"));
        }
    }

    if (j.contains("downsampling")) {
        const json& d = j["downsampling"];
        if (!d.is_string()) throw ConfigError(ctx + ".downsampling must be a string");
        const std::string name = d.get<std::string>();
        if (name == "strided_conv") {
            spec.downsampling = Downsampling::strided_conv;
        } else if (name == "max_pool") {
            spec.downsampling = Downsampling::max_pool;
        } else if (name == "none") {
            spec.downsampling = Downsampling::none;
        } else {
            throw ConfigError(ctx + ".downsampling must be strided_conv, max_pool, or none");
        }
    } else {
        // The regression model never downsamples, so give each task the only
        // default that can validate.
        spec.downsampling = spec.task == Task::fft_regression ? Downsampling::none
                                                              : Downsampling::strided_conv;
    }

    spec.num_outputs = as_uint(require_key(j, "num_outputs", ctx), ctx + ".num_outputs");
    spec.validate();
    return spec;
}

void save_checkpoint(const std::filesystem::path& dir, const Model& model,
                     const OptimizerState& opt, std::size_t epoch) {
    std::filesystem::create_directories(dir);
    auto refs = parameters(model);

    json manifest;
    manifest["format"] = kFormatTag;
    manifest["epoch"] = epoch;
    manifest["model"] = model_spec_to_json(model.spec);
    json jopt;
    jopt["kind"] = opt.kind == OptimizerKind::adam ? "adam" : "sgd_momentum";
    jopt["lr"] = opt.lr;
    jopt["momentum"] = opt.momentum;
    jopt["beta1"] = opt.beta1;
    jopt["beta2"] = opt.beta2;
    jopt["eps"] = opt.eps;
    jopt["weight_decay"] = opt.weight_decay;
    jopt["step_count"] = opt.step_count;
    manifest["optimizer"] = jopt;
    json files = json::array();
    for (const auto& ref : refs) files.push_back(ref.name + ".f64");
    manifest["parameters"] = files;

    for (const auto& ref : refs) save_tensor_raw(*ref.tensor, dir / (ref.name + ".f64"));

    const auto manifest_path = dir / "manifest.json";
    std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + manifest_path.string() + " for writing");
    out << manifest.dump(2) << '\n';
    if (!out) throw FormatError("short write to " + manifest_path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint manifest " + manifest_path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw FormatError("checkpoint manifest " + manifest_path.string() + ": " + e.what());
    }
    if (!manifest.is_object()) {
        throw FormatError("checkpoint manifest " + manifest_path.string() +
                          " is not a JSON object");
    }
    auto fmt = manifest.find("format");
    if (fmt == manifest.end() || !fmt->is_string() ||
        fmt->get<std::string>() != kFormatTag) {
        throw FormatError("checkpoint manifest " + manifest_path.string() +
                          " does not declare format " + kFormatTag);
    }

    Checkpoint ck;
    try {
        ModelSpec spec = model_spec_from_json(require_key(manifest, "model", "checkpoint"));
        ck.model = model_init(spec, Rng(0));
        ck.epoch = as_uint(require_key(manifest, "epoch", "checkpoint"), "checkpoint.epoch");

        const json& jopt = require_key(manifest, "optimizer", "checkpoint");
        if (!jopt.is_object()) throw ConfigError("checkpoint.optimizer must be an object");
        const std::string kind =
            require_key(jopt, "kind", "checkpoint.optimizer").get<std::string>();
        if (kind == "adam") {
            ck.optimizer.kind = OptimizerKind::adam;
        } else if (kind == "sgd_momentum") {
            ck.optimizer.kind = OptimizerKind::sgd_momentum;
        } else {
            throw ConfigError("checkpoint.optimizer.kind \"" + kind + "\" is unknown");
        }
        auto scalar = [&](const char* key) {
            const json& v = require_key(jopt, key, "checkpoint.optimizer");
            if (!v.is_number()) {
                throw ConfigError(std::string("checkpoint.optimizer.") + key +
                                  " must be a number");
            }
            return v.get<double>();
        };
        ck.optimizer.lr = scalar("lr");
        ck.optimizer.momentum = scalar("momentum");
        ck.optimizer.beta1 = scalar("beta1");
        ck.optimizer.beta2 = scalar("beta2");
        ck.optimizer.eps = scalar("eps");
        ck.optimizer.weight_decay = scalar("weight_decay");
        ck.optimizer.step_count = as_uint(
            require_key(jopt, "step_count", "checkpoint.optimizer"),
            "checkpoint.optimizer.step_count");
    } catch (const json::exception& e) {
        throw FormatError("checkpoint manifest " + manifest_path.string() + ": " + e.what());
    } catch (const FormatError&) {
        throw;
    } catch (const Error& e) {
        throw FormatError("checkpoint manifest " + manifest_path.string() + ": " + e.what());
    }

    auto refs = parameters(ck.model);
    const json& files = require_key(manifest, "parameters", "checkpoint");
    if (!files.is_array() || files.size() != refs.size()) {
        throw FormatError("checkpoint lists " + std::to_string(files.size()) +
                          " parameter files, the model has " + std::to_string(refs.size()) +
                          " parameters");
    }
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const std::string expected = refs[i].name + ".f64";
        if (!files[i].is_string() || files[i].get<std::string>() != expected) {
            throw FormatError("checkpoint parameter entry " + std::to_string(i) +
                              " should be \"" + expected + "\"");
        }
        Tensor t = load_tensor_raw(dir / expected);
        if (!t.same_shape(*refs[i].tensor)) {
            throw FormatError("checkpoint tensor " + expected +
                              " does not match the manifest's shape for " + refs[i].name);
        }
        *refs[i].tensor = std::move(t);
    }
    return ck;
}

}  // namespace winconv
