#include "winconv/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

#include "winconv/checkpoint.hpp"
#include "winconv/errors.hpp"
#include "winconv/io.hpp"
#include "winconv/spectral.hpp"

namespace winconv {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string join_key(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) {
        throw ConfigError((path.empty() ? std::string("config") : path) +
                          " must be a JSON object");
    }
}

void reject_unknown(const json& obj, const std::string& prefix,
                    std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("unknown key " + join_key(prefix, item.key()));
    }
}

bool is_uint(const json& j) {
    return j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0);
}

std::size_t get_uint(const json& obj, const std::string& prefix, const char* key,
                     std::size_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& j = obj.at(key);
    if (!is_uint(j)) {
        throw ConfigError(join_key(prefix, key) + " must be a non-negative integer");
    }
    return j.get<std::size_t>();
}

double get_double(const json& obj, const std::string& prefix, const char* key,
                  double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& j = obj.at(key);
    if (!j.is_number()) throw ConfigError(join_key(prefix, key) + " must be a number");
    double v = j.get<double>();
    if (!std::isfinite(v)) throw ConfigError(join_key(prefix, key) + " must be finite");
    return v;
}

bool get_bool(const json& obj, const std::string& prefix, const char* key,
              bool fallback) {
    if (!obj.contains(key)) return fallback;
    const json& j = obj.at(key);
    if (!j.is_boolean()) throw ConfigError(join_key(prefix, key) + " must be a boolean");
    return j.get<bool>();
}

std::string get_string(const json& obj, const std::string& prefix, const char* key,
                       const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& j = obj.at(key);
    if (!j.is_string()) throw ConfigError(join_key(prefix, key) + " must be a string");
    return j.get<std::string>();
}

ScaleKnob parse_scale(const json& obj, const std::string& prefix) {
    require_object(obj, prefix);
    reject_unknown(obj, prefix, {"channel_mult", "sample_mult", "epoch_mult"});
    ScaleKnob s;
    s.channel_mult = get_double(obj, prefix, "channel_mult", 1.0);
    s.sample_mult = get_double(obj, prefix, "sample_mult", 1.0);
    s.epoch_mult = get_double(obj, prefix, "epoch_mult", 1.0);
    if (s.channel_mult <= 0.0 || s.sample_mult <= 0.0 || s.epoch_mult <= 0.0) {
        throw ConfigError(prefix + " multipliers must be positive");
    }
    return s;
}

DatasetSection parse_dataset(const json& obj, const std::string& prefix, Task task) {
    require_object(obj, prefix);
    reject_unknown(obj, prefix,
                   {"kind", "size", "train", "val", "num_waves", "frequency_max", "dir",
                    "subsample"});
    DatasetSection d;
    d.kind = get_string(obj, prefix, "kind", "");
    const bool generated = d.kind == "fft" || d.kind == "gratings";
    const bool file_backed = d.kind == "cifar10" || d.kind == "mnist" || d.kind == "dir";
    if (!generated && !file_backed) {
        throw ConfigError(join_key(prefix, "kind") +
                          " must be one of fft, gratings, cifar10, mnist, dir");
    }
    if (d.kind == "fft" && task != Task::fft_regression) {
        throw ConfigError(join_key(prefix, "kind") + " fft requires task fft_regression");
    }
    if ((d.kind == "gratings" || d.kind == "cifar10" || d.kind == "mnist") &&
        task != Task::classification) {
        throw ConfigError(join_key(prefix, "kind") + " " + d.kind +
                          " requires task classification");
    }
    d.size = get_uint(obj, prefix, "size", 32);
    d.train = get_uint(obj, prefix, "train", 0);
    d.val = get_uint(obj, prefix, "val", 0);
    d.num_waves = get_uint(obj, prefix, "num_waves", 3);
    d.frequency_max = get_double(obj, prefix, "frequency_max", 0.5);
    d.dir = get_string(obj, prefix, "dir", "");
    d.subsample = get_uint(obj, prefix, "subsample", 1);

    if (generated) {
        if (d.size < 2) throw ConfigError(join_key(prefix, "size") + " must be >= 2");
        if (d.train == 0 || d.val == 0) {
            throw ConfigError(prefix + " generated datasets need train >= 1 and val >= 1");
        }
    }
    if (d.kind == "fft") {
        if (d.num_waves == 0) throw ConfigError(join_key(prefix, "num_waves") + " must be >= 1");
        if (d.frequency_max <= 0.0 || d.frequency_max > 0.5) {
            throw ConfigError(join_key(prefix, "frequency_max") + " must be in (0, 0.5]");
        }
    }
    if (file_backed && d.dir.empty()) {
        throw ConfigError(join_key(prefix, "dir") + " is required for kind " + d.kind);
    }
    if (d.subsample == 0) throw ConfigError(join_key(prefix, "subsample") + " must be >= 1");
    return d;
}

WindowFamily parse_window_family(const json& obj, const std::string& prefix) {
    std::string name = get_string(obj, prefix, "window", "hamming");
    if (name == "hamming") return WindowFamily::hamming;
    if (name == "rectangular") return WindowFamily::rectangular;
    throw ConfigError(join_key(prefix, "window") +
                      " must be \"hamming\" or \"rectangular\" (set placement to "
                      "\"none\" to disable windowing)");
}

WindowPlacement parse_placement(const json& obj, const std::string& prefix) {
    std::string name = get_string(obj, prefix, "placement", "none");
    if (name == "none") return WindowPlacement::none;
    if (name == "first") return WindowPlacement::first;
    if (name == "all") return WindowPlacement::all;
    throw ConfigError(join_key(prefix, "placement") +
                      " must be one of none, first, all");
}

Downsampling parse_downsampling(const json& obj, const std::string& prefix) {
    std::string name = get_string(obj, prefix, "downsampling", "strided_conv");
    if (name == "strided_conv") return Downsampling::strided_conv;
    if (name == "max_pool") return Downsampling::max_pool;
    if (name == "none") return Downsampling::none;
    throw ConfigError(join_key(prefix, "downsampling") +
                      " must be one of strided_conv, max_pool, none");
}

void check_odd(std::size_t k, const std::string& path) {
    if (k == 0 || k % 2 == 0) throw ConfigError(path + " must be an odd kernel size");
}

ModelSection parse_model(const json& obj, const std::string& prefix, Task task) {
    require_object(obj, prefix);
    ModelSection m;
    if (task == Task::fft_regression) {
        reject_unknown(obj, prefix, {"k", "window", "placement"});
        m.k = get_uint(obj, prefix, "k", 7);
        check_odd(m.k, join_key(prefix, "k"));
    } else {
        reject_unknown(obj, prefix,
                       {"depth", "k_first", "k_blocks", "h1", "h2", "downsampling",
                        "window", "placement"});
        m.depth = get_uint(obj, prefix, "depth", 2);
        if (m.depth == 0) throw ConfigError(join_key(prefix, "depth") + " must be >= 1");
        m.k_first = get_uint(obj, prefix, "k_first", 7);
        m.k_blocks = get_uint(obj, prefix, "k_blocks", 3);
        check_odd(m.k_first, join_key(prefix, "k_first"));
        check_odd(m.k_blocks, join_key(prefix, "k_blocks"));
        m.h1 = get_uint(obj, prefix, "h1", 32);
        m.h2 = get_uint(obj, prefix, "h2", 128);
        if (m.h1 == 0 || m.h2 == 0) {
            throw ConfigError(prefix + " channel counts must be >= 1");
        }
        m.downsampling = parse_downsampling(obj, prefix);
    }
    m.window = parse_window_family(obj, prefix);
    m.placement = parse_placement(obj, prefix);
    return m;
}

TrainSection parse_train(const json& obj, const std::string& prefix, Task task) {
    require_object(obj, prefix);
    reject_unknown(obj, prefix,
                   {"epochs", "batch_size", "lr", "optimizer", "momentum", "beta1",
                    "beta2", "eps", "weight_decay", "lr_decay_epochs", "lr_decay_factor",
                    "shuffle", "augmentation"});
    TrainSection t;
    t.epochs = get_uint(obj, prefix, "epochs", 10);
    if (t.epochs == 0) throw ConfigError(join_key(prefix, "epochs") + " must be >= 1");
    t.batch_size = get_uint(obj, prefix, "batch_size", 32);
    if (t.batch_size == 0) throw ConfigError(join_key(prefix, "batch_size") + " must be >= 1");
    t.lr = get_double(obj, prefix, "lr", 1e-3);
    if (t.lr <= 0.0) throw ConfigError(join_key(prefix, "lr") + " must be positive");

    std::string opt = get_string(obj, prefix, "optimizer", "adam");
    if (opt == "adam") {
        t.optimizer = OptimizerKind::adam;
    } else if (opt == "sgd_momentum") {
        t.optimizer = OptimizerKind::sgd_momentum;
    } else {
        throw ConfigError(join_key(prefix, "optimizer") +
                          " must be \"adam\" or \"sgd_momentum\"");
    }
    t.momentum = get_double(obj, prefix, "momentum", 0.9);
    t.beta1 = get_double(obj, prefix, "beta1", 0.9);
    t.beta2 = get_double(obj, prefix, "beta2", 0.999);
    t.eps = get_double(obj, prefix, "eps", 1e-8);
    t.weight_decay = get_double(obj, prefix, "weight_decay", 0.0);
    if (t.momentum < 0.0 || t.momentum >= 1.0) {
        throw ConfigError(join_key(prefix, "momentum") + " must be in [0, 1)");
    }
    if (t.beta1 < 0.0 || t.beta1 >= 1.0 || t.beta2 < 0.0 || t.beta2 >= 1.0) {
        throw ConfigError(prefix + " adam betas must be in [0, 1)");
    }
    if (t.eps <= 0.0) throw ConfigError(join_key(prefix, "eps") + " must be positive");
    if (t.weight_decay < 0.0) {
        throw ConfigError(join_key(prefix, "weight_decay") + " must be >= 0");
    }

    if (obj.contains("lr_decay_epochs")) {
        const json& arr = obj.at("lr_decay_epochs");
        if (!arr.is_array()) {
            throw ConfigError(join_key(prefix, "lr_decay_epochs") + " must be an array");
        }
        std::size_t prev = 0;
        for (const json& e : arr) {
            if (!is_uint(e) || e.get<std::size_t>() == 0) {
                throw ConfigError(join_key(prefix, "lr_decay_epochs") +
                                  " entries must be positive integers");
            }
            std::size_t v = e.get<std::size_t>();
            if (v <= prev) {
                throw ConfigError(join_key(prefix, "lr_decay_epochs") +
                                  " must be strictly ascending");
            }
            t.lr_decay_epochs.push_back(v);
            prev = v;
        }
    }
    t.lr_decay_factor = get_double(obj, prefix, "lr_decay_factor", 0.1);
    if (t.lr_decay_factor <= 0.0) {
        throw ConfigError(join_key(prefix, "lr_decay_factor") + " must be positive");
    }
    t.shuffle = get_bool(obj, prefix, "shuffle", true);
    t.augmentation = get_bool(obj, prefix, "augmentation", false);
    if (t.augmentation && task == Task::fft_regression) {
        throw ConfigError(join_key(prefix, "augmentation") +
                          " is only supported for classification");
    }
    return t;
}

AnalysisSection parse_analysis(const json& obj, const std::string& prefix) {
    require_object(obj, prefix);
    reject_unknown(obj, prefix,
                   {"ortho", "ortho_budget", "spectra", "spectra_layer", "spectra_grid"});
    AnalysisSection a;
    a.ortho = get_bool(obj, prefix, "ortho", false);
    a.ortho_budget = get_uint(obj, prefix, "ortho_budget", kDbtEntryBudget);
    if (a.ortho_budget == 0) {
        throw ConfigError(join_key(prefix, "ortho_budget") + " must be >= 1");
    }
    a.spectra = get_bool(obj, prefix, "spectra", false);
    a.spectra_layer = get_string(obj, prefix, "spectra_layer", "conv0");
    a.spectra_grid = get_uint(obj, prefix, "spectra_grid", 64);
    if (a.spectra_grid < 2) {
        throw ConfigError(join_key(prefix, "spectra_grid") + " must be >= 2");
    }
    return a;
}

AttackSection parse_attack(const json& obj, const std::string& prefix, Task task) {
    require_object(obj, prefix);
    if (task != Task::classification) {
        throw ConfigError(prefix + " is only supported for task classification");
    }
    reject_unknown(obj, prefix,
                   {"kind", "max_iter", "overshoot", "max_translate_percent",
                    "max_rotate_degrees", "grid_steps", "samples"});
    AttackSection a;
    a.enabled = true;
    std::string kind = get_string(obj, prefix, "kind", "");
    if (kind == "deepfool") {
        a.config.kind = AttackKind::deepfool;
    } else if (kind == "spatial") {
        a.config.kind = AttackKind::spatial;
    } else {
        throw ConfigError(join_key(prefix, "kind") + " must be \"deepfool\" or \"spatial\"");
    }
    a.config.deepfool.max_iter = get_uint(obj, prefix, "max_iter", 100);
    if (a.config.deepfool.max_iter == 0) {
        throw ConfigError(join_key(prefix, "max_iter") + " must be >= 1");
    }
    a.config.deepfool.overshoot = get_double(obj, prefix, "overshoot", 0.02);
    if (a.config.deepfool.overshoot < 0.0) {
        throw ConfigError(join_key(prefix, "overshoot") + " must be >= 0");
    }
    a.config.spatial.max_translate_percent =
        get_double(obj, prefix, "max_translate_percent", 12.5);
    a.config.spatial.max_rotate_degrees =
        get_double(obj, prefix, "max_rotate_degrees", 22.5);
    if (a.config.spatial.max_translate_percent < 0.0 ||
        a.config.spatial.max_rotate_degrees < 0.0) {
        throw ConfigError(prefix + " spatial budgets must be >= 0");
    }
    a.config.spatial.grid_steps = get_uint(obj, prefix, "grid_steps", 5);
    if (a.config.spatial.grid_steps == 0 || a.config.spatial.grid_steps % 2 == 0) {
        throw ConfigError(join_key(prefix, "grid_steps") + " must be odd");
    }
    a.samples = get_uint(obj, prefix, "samples", 0);
    return a;
}

bool valid_variant_name(const std::string& name) {
    if (name.empty()) return false;
    for (char c : name) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                  (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
        if (!ok) return false;
    }
    return name != "." && name != "..";
}

json merged_section(const json& base, const json* overrides, const char* key,
                    const std::string& prefix) {
    json out = base.contains(key) ? base.at(key) : json::object();
    if (overrides != nullptr && overrides->contains(key)) {
        const json& o = overrides->at(key);
        require_object(o, join_key(prefix, key));
        for (const auto& item : o.items()) out[item.key()] = item.value();
    }
    return out;
}

VariantConfig parse_variant(const json& base, const json* overrides,
                            const std::string& name, const std::string& prefix,
                            Task task) {
    VariantConfig v;
    v.name = name;
    v.dataset = parse_dataset(merged_section(base, overrides, "dataset", prefix),
                              join_key(prefix, "dataset"), task);
    v.model = parse_model(merged_section(base, overrides, "model", prefix),
                          join_key(prefix, "model"), task);
    v.train = parse_train(merged_section(base, overrides, "train", prefix),
                          join_key(prefix, "train"), task);
    json analysis = merged_section(base, overrides, "analysis", prefix);
    if (!analysis.empty() || base.contains("analysis") ||
        (overrides != nullptr && overrides->contains("analysis"))) {
        v.analysis = parse_analysis(analysis, join_key(prefix, "analysis"));
    }
    if (base.contains("attack") || (overrides != nullptr && overrides->contains("attack"))) {
        v.attack = parse_attack(merged_section(base, overrides, "attack", prefix),
                                join_key(prefix, "attack"), task);
    }
    return v;
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw FormatError("cannot write " + path.string());
}

json read_json_file(const fs::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(std::string(what) + " not found: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + " is not valid JSON: " + e.what());
    }
    return doc;
}

std::size_t scaled_count(std::size_t n, double mult) {
    if (n == 0 || mult == 1.0) return n;
    long long r = std::llround(static_cast<double>(n) * mult);
    return r < 1 ? 1 : static_cast<std::size_t>(r);
}

LabeledDataset take_first(const LabeledDataset& ds, std::size_t n, const char* what) {
    const std::size_t have = ds.count();
    if (n == 0 || n == have) return ds;
    if (n > have) {
        throw FormatError(std::string(what) + " holds " + std::to_string(have) +
                          " samples but the config requests " + std::to_string(n));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    LabeledDataset out;
    out.images = gather_rows(ds.images, order);
    if (!ds.labels.empty()) {
        out.labels.assign(ds.labels.begin(),
                          ds.labels.begin() + static_cast<std::ptrdiff_t>(n));
    }
    if (ds.targets.rank() != 0) out.targets = gather_rows(ds.targets, order);
    out.split = ds.split;
    return out;
}

LabeledDataset subsample_dataset(const LabeledDataset& ds, std::size_t factor) {
    if (factor == 1) return ds;
    LabeledDataset out;
    out.labels = ds.labels;
    out.targets = ds.targets;
    out.split = ds.split;
    const std::size_t n = ds.count();
    if (n == 0) return out;
    Tensor first = bilinear_subsample(dataset_sample(ds.images, 0), factor);
    out.images = Tensor({n, first.extent(0), first.extent(1), first.extent(2)});
    const std::size_t per = first.size();
    std::memcpy(out.images.data(), first.data(), per * sizeof(double));
    for (std::size_t i = 1; i < n; ++i) {
        Tensor small = bilinear_subsample(dataset_sample(ds.images, i), factor);
        std::memcpy(out.images.data() + i * per, small.data(), per * sizeof(double));
    }
    return out;
}

void require_file(const fs::path& path, const std::string& hint) {
    if (!fs::exists(path)) {
        throw FormatError("missing dataset file: " + path.string() + " (" + hint + ")");
    }
}

json dataset_section_json(const DatasetSection& d) {
    json j;
    j["kind"] = d.kind;
    j["size"] = d.size;
    j["train"] = d.train;
    j["val"] = d.val;
    j["num_waves"] = d.num_waves;
    j["frequency_max"] = d.frequency_max;
    j["dir"] = d.dir.string();
    j["subsample"] = d.subsample;
    return j;
}

std::vector<int> labels_from_json(const json& arr, std::size_t classes,
                                  const fs::path& path) {
    if (!arr.is_array()) throw FormatError(path.string() + " must hold a JSON array");
    std::vector<int> labels;
    labels.reserve(arr.size());
    for (const json& e : arr) {
        if (!e.is_number_integer() && !e.is_number_unsigned()) {
            throw FormatError(path.string() + " labels must be integers");
        }
        long long v = e.get<long long>();
        if (v < 0 || (classes > 0 && v >= static_cast<long long>(classes))) {
            throw FormatError(path.string() + " label " + std::to_string(v) +
                              " is outside [0, " + std::to_string(classes) + ")");
        }
        labels.push_back(static_cast<int>(v));
    }
    return labels;
}

double sample_std(const std::vector<double>& xs, double mean) {
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& doc) {
    require_object(doc, "");
    reject_unknown(doc, "",
                   {"task", "output_dir", "seeds", "scale", "dataset", "model", "train",
                    "analysis", "attack", "variants"});

    ExperimentConfig cfg;
    std::string task = get_string(doc, "", "task", "");
    if (task == "fft_regression") {
        cfg.task = Task::fft_regression;
    } else if (task == "classification") {
        cfg.task = Task::classification;
    } else {
        throw ConfigError("task must be \"fft_regression\" or \"classification\"");
    }
    cfg.output_dir = get_string(doc, "", "output_dir", "");

    cfg.seeds.clear();
    if (doc.contains("seeds")) {
        const json& arr = doc.at("seeds");
        if (!arr.is_array() || arr.empty()) {
            throw ConfigError("seeds must be a non-empty array");
        }
        std::set<std::uint64_t> seen;
        for (const json& e : arr) {
            if (!is_uint(e)) throw ConfigError("seeds entries must be non-negative integers");
            std::uint64_t s = e.get<std::uint64_t>();
            if (!seen.insert(s).second) {
                throw ConfigError("seeds contains duplicate " + std::to_string(s));
            }
            cfg.seeds.push_back(s);
        }
    } else {
        cfg.seeds.push_back(0);
    }

    if (doc.contains("scale")) cfg.scale = parse_scale(doc.at("scale"), "scale");

    if (!doc.contains("dataset")) throw ConfigError("dataset section is required");
    if (!doc.contains("model")) throw ConfigError("model section is required");
    if (!doc.contains("train")) throw ConfigError("train section is required");

    if (doc.contains("variants")) {
        const json& arr = doc.at("variants");
        if (!arr.is_array() || arr.empty()) {
            throw ConfigError("variants must be a non-empty array");
        }
        std::set<std::string> names;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string prefix = "variants[" + std::to_string(i) + "]";
            const json& v = arr[i];
            require_object(v, prefix);
            reject_unknown(v, prefix,
                           {"name", "dataset", "model", "train", "analysis", "attack"});
            std::string name = get_string(v, prefix, "name", "");
            if (!valid_variant_name(name)) {
                throw ConfigError(prefix + ".name must be a non-empty name using only "
                                  "letters, digits, '_', '-', '.'");
            }
            if (!names.insert(name).second) {
                throw ConfigError(prefix + ".name \"" + name + "\" is duplicated");
            }
            cfg.variants.push_back(parse_variant(doc, &v, name, prefix, cfg.task));
        }
    } else {
        cfg.variants.push_back(parse_variant(doc, nullptr, "default", "", cfg.task));
    }

    cfg.document = doc;
    return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config file not found: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + " is not valid JSON: " + e.what());
    }
    return experiment_config_from_json(doc);
}

fs::path resolve_output_root(const fs::path& dir) {
    if (dir.is_absolute()) return dir;
    const char* root = std::getenv("WINCONV_OUT_ROOT");
    if (root == nullptr || *root == '\0') return dir;
    return fs::path(root) / dir;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

PreparedData prepare_dataset(const DatasetSection& section, Task task,
                             double sample_mult, const Rng& base) {
    const std::size_t n_train = scaled_count(section.train, sample_mult);
    const std::size_t n_val = scaled_count(section.val, sample_mult);

    PreparedData data;
    if (section.kind == "fft") {
        SineImageSpec spec;
        spec.size = section.size;
        spec.num_waves = section.num_waves;
        spec.frequency_max = section.frequency_max;
        FftDataset d = gen_fft_dataset(base.substream(1), n_train, n_val, spec);
        data.train = std::move(d.train);
        data.val = std::move(d.val);
    } else if (section.kind == "gratings") {
        data.train = gen_gratings_dataset(base.substream(1), n_train, section.size,
                                          Split::train);
        data.val = gen_gratings_dataset(base.substream(2), n_val, section.size,
                                        Split::validation);
        data.num_classes = 10;
    } else if (section.kind == "cifar10") {
        const char* hint = "expected CIFAR-10 binary batches data_batch_*.bin and "
                           "test_batch.bin";
        std::size_t batches = 5;
        if (n_train > 0) batches = std::min<std::size_t>(5, (n_train + 9999) / 10000);
        std::vector<fs::path> files;
        for (std::size_t i = 1; i <= batches; ++i) {
            fs::path p = section.dir / ("data_batch_" + std::to_string(i) + ".bin");
            require_file(p, hint);
            files.push_back(p);
        }
        fs::path test = section.dir / "test_batch.bin";
        require_file(test, hint);
        data.train = take_first(load_cifar10(files), n_train, "cifar10 train split");
        data.train.split = Split::train;
        data.val = take_first(load_cifar10({test}), n_val, "cifar10 test split");
        data.val.split = Split::validation;
        data.num_classes = 10;
    } else if (section.kind == "mnist") {
        const char* hint = "expected the four IDX files of the standard MNIST layout";
        fs::path ti = section.dir / "train-images-idx3-ubyte";
        fs::path tl = section.dir / "train-labels-idx1-ubyte";
        fs::path vi = section.dir / "t10k-images-idx3-ubyte";
        fs::path vl = section.dir / "t10k-labels-idx1-ubyte";
        for (const fs::path& p : {ti, tl, vi, vl}) require_file(p, hint);
        data.train = take_first(load_idx(ti, tl), n_train, "mnist train split");
        data.train.split = Split::train;
        data.val = take_first(load_idx(vi, vl), n_val, "mnist test split");
        data.val.split = Split::validation;
        data.num_classes = 10;
    } else if (section.kind == "dir") {
        StoredDataset stored = read_dataset_dir(section.dir);
        const bool stored_fft = stored.task_tag == "fft";
        if (stored_fft != (task == Task::fft_regression)) {
            throw ConfigError("dataset at " + section.dir.string() + " holds " +
                              stored.task_tag + " data but the task is " +
                              (task == Task::fft_regression ? "fft_regression"
                                                            : "classification"));
        }
        data.train = take_first(stored.train, n_train, "stored train split");
        data.val = take_first(stored.val, n_val, "stored validation split");
        data.num_classes = stored.classes;
    } else {
        throw ConfigError("unknown dataset kind " + section.kind);
    }

    if (section.subsample > 1) {
        data.train = subsample_dataset(data.train, section.subsample);
        data.val = subsample_dataset(data.val, section.subsample);
    }
    data.input_shape = {data.train.images.extent(1), data.train.images.extent(2),
                        data.train.images.extent(3)};
    return data;
}

ModelSpec variant_model_spec(const VariantConfig& variant, Task task,
                             const PreparedData& data, double channel_mult) {
    const ModelSection& m = variant.model;
    std::optional<WindowFamily> family;
    if (m.placement != WindowPlacement::none) family = m.window;

    if (task == Task::fft_regression) {
        return fft_regression_spec(data.input_shape[1], m.k, family);
    }
    std::optional<WindowFamily> first = family;
    std::optional<WindowFamily> blocks =
        m.placement == WindowPlacement::all ? family : std::nullopt;
    auto scaled = [&](std::size_t h) {
        long long r = std::llround(static_cast<double>(h) * channel_mult);
        return r < 1 ? std::size_t{1} : static_cast<std::size_t>(r);
    };
    return classifier_spec(data.input_shape, data.num_classes, m.depth, m.k_first,
                           m.k_blocks, scaled(m.h1), scaled(m.h2), m.downsampling, first,
                           blocks);
}

namespace {

json ortho_layers_json(const std::vector<LayerOrtho>& layers) {
    json arr = json::array();
    for (const LayerOrtho& l : layers) {
        json e;
        e["name"] = l.name;
        e["D"] = l.deviation;
        e["chance_D"] = l.chance;
        e["rows_used"] = l.rows_used;
        arr.push_back(e);
    }
    return arr;
}

json attack_summary_json(const RobustnessReport& r, AttackKind kind) {
    json j;
    j["kind"] = kind == AttackKind::deepfool ? "deepfool" : "spatial";
    j["count"] = r.count;
    j["clean_accuracy"] = r.clean_accuracy;
    j["attacked_accuracy"] = r.attacked_accuracy;
    j["stalled"] = r.stalled;
    j["mean_norm"] = r.mean_norm;
    j["max_norm"] = r.max_norm;
    return j;
}

json aggregate_variant(const std::vector<TrainReport>& reports,
                       const std::vector<json>& seed_entries) {
    const std::size_t s_count = reports.size();
    const std::size_t e_count = reports.front().epochs.size();
    json agg;

    auto curves = [&](auto pick, const char* mean_key, const char* std_key) {
        std::vector<double> mean(e_count), stdev(e_count);
        for (std::size_t e = 0; e < e_count; ++e) {
            std::vector<double> xs(s_count);
            for (std::size_t s = 0; s < s_count; ++s) xs[s] = pick(reports[s].epochs[e]);
            double m = std::accumulate(xs.begin(), xs.end(), 0.0) /
                       static_cast<double>(s_count);
            mean[e] = m;
            if (s_count >= 2) stdev[e] = sample_std(xs, m);
        }
        agg[mean_key] = mean;
        if (s_count >= 2) agg[std_key] = stdev;
        agg[std::string("final_") + mean_key] = mean.back();
        if (s_count >= 2) agg[std::string("final_") + std_key] = stdev.back();
    };
    curves([](const EpochStats& e) { return e.val_metric; }, "val_metric_mean",
           "val_metric_std");
    curves([](const EpochStats& e) { return e.train_loss; }, "train_loss_mean",
           "train_loss_std");

    bool have_attack = !seed_entries.empty();
    for (const json& e : seed_entries) have_attack = have_attack && e.contains("attack");
    if (have_attack) {
        std::vector<double> clean(s_count), attacked(s_count);
        for (std::size_t s = 0; s < s_count; ++s) {
            clean[s] = seed_entries[s].at("attack").at("clean_accuracy").get<double>();
            attacked[s] =
                seed_entries[s].at("attack").at("attacked_accuracy").get<double>();
        }
        json a;
        a["clean_accuracy_mean"] = std::accumulate(clean.begin(), clean.end(), 0.0) /
                                   static_cast<double>(s_count);
        a["attacked_accuracy_mean"] =
            std::accumulate(attacked.begin(), attacked.end(), 0.0) /
            static_cast<double>(s_count);
        if (s_count >= 2) {
            a["clean_accuracy_std"] =
                sample_std(clean, a["clean_accuracy_mean"].get<double>());
            a["attacked_accuracy_std"] =
                sample_std(attacked, a["attacked_accuracy_mean"].get<double>());
        }
        agg["attack"] = a;
    }
    return agg;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg) {
    if (cfg.output_dir.empty()) {
        throw ConfigError("output_dir is not set (config key \"output_dir\" or --out)");
    }
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path root = resolve_output_root(cfg.output_dir);
    fs::create_directories(root);

    std::vector<std::string> artifacts;
    const std::string config_text = cfg.document.dump(2) + "\n";
    write_text(root / "config.json", config_text);
    artifacts.push_back("config.json");
    const std::string hash = hex16(fnv1a64(cfg.document.dump()));

    std::map<std::string, PreparedData> data_cache;
    json variants_json = json::array();

    for (const VariantConfig& variant : cfg.variants) {
        std::vector<TrainReport> reports;
        std::vector<json> seed_entries;

        for (std::uint64_t seed : cfg.seeds) {
            Rng base(seed);
            const std::string data_key =
                dataset_section_json(variant.dataset).dump() + "#" + std::to_string(seed);
            auto cached = data_cache.find(data_key);
            if (cached == data_cache.end()) {
                cached = data_cache
                             .emplace(data_key, prepare_dataset(variant.dataset, cfg.task,
                                                                cfg.scale.sample_mult, base))
                             .first;
            }
            const PreparedData& data = cached->second;

            ModelSpec spec =
                variant_model_spec(variant, cfg.task, data, cfg.scale.channel_mult);
            Model model = model_init(spec, base.substream(3));

            const TrainSection& ts = variant.train;
            OptimizerState opt =
                ts.optimizer == OptimizerKind::adam
                    ? make_adam(ts.lr, ts.beta1, ts.beta2, ts.eps, ts.weight_decay)
                    : make_sgd_momentum(ts.lr, ts.momentum, ts.weight_decay);
            TrainConfig tc;
            tc.epochs = scaled_count(ts.epochs, cfg.scale.epoch_mult);
            tc.batch_size = ts.batch_size;
            tc.initial_lr = ts.lr;
            tc.lr_decay_epochs = ts.lr_decay_epochs;
            tc.lr_decay_factor = ts.lr_decay_factor;
            tc.seed = seed;
            tc.shuffle = ts.shuffle;
            tc.augmentation = ts.augmentation;

            std::cerr << "[winconv] " << variant.name << " seed " << seed << ": "
                      << data.train.count() << " train / " << data.val.count()
                      << " val samples, " << tc.epochs << " epochs\n";
            TrainReport report = train(model, data.train, data.val, tc, opt);

            const std::string rel_dir = variant.name + "/seed" + std::to_string(seed);
            const fs::path seed_dir = root / variant.name / ("seed" + std::to_string(seed));
            fs::create_directories(seed_dir);

            std::vector<std::vector<double>> rows;
            rows.reserve(report.epochs.size());
            for (const EpochStats& e : report.epochs) {
                rows.push_back({static_cast<double>(e.epoch), e.train_loss, e.val_metric,
                                e.lr});
            }
            write_csv(seed_dir / "metrics.csv", {"epoch", "train_loss", "val_metric", "lr"},
                      rows);
            artifacts.push_back(rel_dir + "/metrics.csv");

            save_checkpoint(seed_dir / "checkpoint", model, opt, tc.epochs);
            artifacts.push_back(rel_dir + "/checkpoint/manifest.json");
            for (const ConstParamRef& p : parameters(std::as_const(model))) {
                artifacts.push_back(rel_dir + "/checkpoint/" + p.name + ".f64");
                artifacts.push_back(rel_dir + "/checkpoint/" + p.name + ".f64.json");
            }

            json entry;
            entry["seed"] = seed;
            {
                std::vector<double> tl, vm, lr;
                for (const EpochStats& e : report.epochs) {
                    tl.push_back(e.train_loss);
                    vm.push_back(e.val_metric);
                    lr.push_back(e.lr);
                }
                entry["train_loss"] = tl;
                entry["val_metric"] = vm;
                entry["lr"] = lr;
                entry["final_train_loss"] = tl.back();
                entry["final_val_metric"] = vm.back();
            }

            if (variant.analysis.ortho) {
                std::vector<LayerOrtho> layers = ortho_report(
                    model, data.input_shape, base.substream(4), variant.analysis.ortho_budget);
                json doc;
                doc["layers"] = ortho_layers_json(layers);
                write_text(seed_dir / "ortho.json", doc.dump(2) + "\n");
                artifacts.push_back(rel_dir + "/ortho.json");
                entry["ortho"] = doc["layers"];
            }
            if (variant.analysis.spectra) {
                std::vector<fs::path> files =
                    dump_kernels(model, variant.analysis.spectra_layer,
                                 seed_dir / "spectra", variant.analysis.spectra_grid);
                for (const fs::path& f : files) {
                    artifacts.push_back(rel_dir + "/spectra/" + f.filename().string());
                }
            }
            if (variant.attack.enabled) {
                LabeledDataset subset =
                    take_first(data.val, variant.attack.samples, "validation split");
                RobustnessReport rr =
                    evaluate_robustness(model, subset, variant.attack.config);
                json doc = attack_summary_json(rr, variant.attack.config.kind);
                write_text(seed_dir / "attack.json", doc.dump(2) + "\n");
                artifacts.push_back(rel_dir + "/attack.json");
                entry["attack"] = doc;
            }

            std::cerr << "[winconv] " << variant.name << " seed " << seed
                      << ": final val metric " << report.epochs.back().val_metric << "\n";
            reports.push_back(std::move(report));
            seed_entries.push_back(std::move(entry));
        }

        json vj;
        vj["name"] = variant.name;
        vj["seeds"] = seed_entries;
        vj["aggregate"] = aggregate_variant(reports, seed_entries);
        variants_json.push_back(std::move(vj));
    }

    std::sort(artifacts.begin(), artifacts.end());
    artifacts.erase(std::unique(artifacts.begin(), artifacts.end()), artifacts.end());

    const auto t1 = std::chrono::steady_clock::now();
    RunReport out;
    out.config_hash = hash;
    out.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    out.artifacts = artifacts;

    json summary;
    summary["config_hash"] = hash;
    summary["task"] =
        cfg.task == Task::fft_regression ? "fft_regression" : "classification";
    summary["metric"] = cfg.task == Task::fft_regression ? "mse" : "accuracy";
    summary["wall_seconds"] = out.wall_seconds;
    summary["artifacts"] = artifacts;
    summary["variants"] = variants_json;
    out.summary = summary;

    write_text(root / "report.json", summary.dump(2) + "\n");
    return out;
}

namespace {

const json& report_field(const json& report, const char* key) {
    if (!report.is_object() || !report.contains(key)) {
        throw FormatError(std::string("run report is missing \"") + key + "\"");
    }
    return report.at(key);
}

std::vector<double> curve(const json& variant, const char* key) {
    return report_field(variant, "aggregate").at(key).get<std::vector<double>>();
}

std::vector<std::uint64_t> seed_list(const json& variant) {
    std::vector<std::uint64_t> seeds;
    for (const json& s : report_field(variant, "seeds")) {
        seeds.push_back(s.at("seed").get<std::uint64_t>());
    }
    return seeds;
}

}  // namespace

json compare_runs(const json& report_a, const json& report_b) {
    const std::string metric_a = report_field(report_a, "metric").get<std::string>();
    const std::string metric_b = report_field(report_b, "metric").get<std::string>();
    if (metric_a != metric_b) {
        throw FormatError("reports measure different metrics: " + metric_a + " vs " +
                          metric_b);
    }
    const json& va = report_field(report_a, "variants");
    const json& vb = report_field(report_b, "variants");
    if (!va.is_array() || !vb.is_array() || va.empty() || vb.empty()) {
        throw FormatError("run reports must hold a non-empty variants array");
    }

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (va.size() == 1 && vb.size() == 1) {
        pairs.emplace_back(0, 0);
    } else {
        std::map<std::string, std::size_t> index_b;
        for (std::size_t i = 0; i < vb.size(); ++i) {
            index_b[vb[i].at("name").get<std::string>()] = i;
        }
        for (std::size_t i = 0; i < va.size(); ++i) {
            std::string name = va[i].at("name").get<std::string>();
            auto it = index_b.find(name);
            if (it == index_b.end()) {
                throw FormatError("variant \"" + name +
                                  "\" is missing from the second report");
            }
            pairs.emplace_back(i, it->second);
        }
        if (vb.size() != va.size()) {
            throw FormatError("reports hold different variant sets");
        }
    }

    json rows = json::array();
    for (auto [ia, ib] : pairs) {
        const json& A = va[ia];
        const json& B = vb[ib];
        const std::string name = A.at("name").get<std::string>();

        const bool aligned = seed_list(A) == seed_list(B);
        const std::size_t s_count = report_field(A, "seeds").size();

        for (const char* key : {"val_metric", "train_loss"}) {
            std::vector<double> ma = curve(A, (std::string(key) + "_mean").c_str());
            std::vector<double> mb = curve(B, (std::string(key) + "_mean").c_str());
            if (ma.size() != mb.size()) {
                throw FormatError("epoch counts differ for variant \"" + name + "\": " +
                                  std::to_string(ma.size()) + " vs " +
                                  std::to_string(mb.size()));
            }
            for (std::size_t e = 0; e < ma.size(); ++e) {
                json row;
                row["variant"] = name;
                row["metric"] = key;
                row["epoch"] = e + 1;
                row["a_mean"] = ma[e];
                row["b_mean"] = mb[e];
                row["delta"] = mb[e] - ma[e];
                if (aligned && s_count >= 2) {
                    std::vector<double> deltas(s_count);
                    for (std::size_t s = 0; s < s_count; ++s) {
                        double xa = A.at("seeds")[s].at(key)[e].get<double>();
                        double xb = B.at("seeds")[s].at(key)[e].get<double>();
                        deltas[s] = xb - xa;
                    }
                    double m = std::accumulate(deltas.begin(), deltas.end(), 0.0) /
                               static_cast<double>(s_count);
                    row["delta_std"] = sample_std(deltas, m);
                }
                rows.push_back(std::move(row));
            }
        }

        std::vector<double> ma = curve(A, "val_metric_mean");
        std::vector<double> mb = curve(B, "val_metric_mean");
        json final_row;
        final_row["variant"] = name;
        final_row["metric"] = "final_val_metric";
        final_row["epoch"] = ma.size();
        final_row["a_mean"] = ma.back();
        final_row["b_mean"] = mb.back();
        final_row["delta"] = mb.back() - ma.back();
        rows.push_back(std::move(final_row));
    }

    json out;
    out["metric"] = metric_a;
    out["rows"] = rows;
    return out;
}

void write_comparison_csv(const fs::path& path, const json& comparison) {
    std::ostringstream text;
    text << "variant,metric,epoch,a_mean,b_mean,delta,delta_std\n";
    for (const json& row : comparison.at("rows")) {
        text << row.at("variant").get<std::string>() << ','
             << row.at("metric").get<std::string>() << ','
             << row.at("epoch").get<std::size_t>() << ','
             << format_double(row.at("a_mean").get<double>()) << ','
             << format_double(row.at("b_mean").get<double>()) << ','
             << format_double(row.at("delta").get<double>()) << ',';
        if (row.contains("delta_std")) {
            text << format_double(row.at("delta_std").get<double>());
        }
        text << '\n';
    }
    write_text(path, text.str());
}

std::vector<fs::path> dump_kernels(const Model& model, const std::string& layer,
                                   const fs::path& out_dir, std::size_t grid) {
    std::size_t index = model.convs.size();
    for (std::size_t i = 0; i < model.convs.size(); ++i) {
        if (layer == "conv" + std::to_string(i)) {
            index = i;
            break;
        }
    }
    if (index == model.convs.size()) {
        throw ConfigError("unknown layer \"" + layer + "\"; this model has conv0..conv" +
                          std::to_string(model.convs.size() - 1));
    }
    const ConvLayer& conv = model.convs[index];
    const Tensor keff = conv.effective_kernel();
    const std::size_t k_rows = keff.extent(0);
    const std::size_t k_cols = keff.extent(1);
    const std::size_t c_in = keff.extent(2);
    const std::size_t m_out = keff.extent(3);

    fs::create_directories(out_dir);
    std::vector<fs::path> files;
    for (std::size_t m = 0; m < m_out; ++m) {
        for (std::size_t c = 0; c < c_in; ++c) {
            Tensor slice({k_rows, k_cols});
            for (std::size_t i = 0; i < k_rows; ++i) {
                for (std::size_t j = 0; j < k_cols; ++j) {
                    slice.at({i, j}) = keff.at({i, j, c, m});
                }
            }
            const std::string stem =
                layer + "_m" + std::to_string(m) + "_c" + std::to_string(c);
            fs::path kernel_path = out_dir / (stem + "_kernel.pgm");
            write_pgm(kernel_path, slice, PgmScale::minmax);
            files.push_back(kernel_path);

            Spectrum2D response = kernel_frequency_response(slice, grid);
            fs::path spectrum_path = out_dir / (stem + "_spectrum.pgm");
            write_pgm(spectrum_path, response.mag, PgmScale::log_db80);
            files.push_back(spectrum_path);
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<fs::path> write_dataset_dir(const fs::path& dir, const StoredDataset& ds) {
    if (ds.task_tag != "fft" && ds.task_tag != "classification") {
        throw ConfigError("dataset task must be \"fft\" or \"classification\"");
    }
    fs::create_directories(dir);
    std::vector<fs::path> files;

    json meta;
    meta["format"] = "winconv-dataset-v1";
    meta["task"] = ds.task_tag;
    meta["size"] = ds.size;
    meta["seed"] = ds.seed;
    meta["train"] = ds.train.count();
    meta["val"] = ds.val.count();
    if (ds.task_tag == "classification") meta["classes"] = ds.classes;
    write_text(dir / "dataset.json", meta.dump(2) + "\n");
    files.push_back(dir / "dataset.json");

    auto dump_split = [&](const LabeledDataset& split, const std::string& stem) {
        save_tensor_raw(split.images, dir / (stem + "_images.f64"));
        files.push_back(dir / (stem + "_images.f64"));
        files.push_back(dir / (stem + "_images.f64.json"));
        if (ds.task_tag == "fft") {
            save_tensor_raw(split.targets, dir / (stem + "_targets.f64"));
            files.push_back(dir / (stem + "_targets.f64"));
            files.push_back(dir / (stem + "_targets.f64.json"));
        } else {
            write_text(dir / (stem + "_labels.json"), json(split.labels).dump() + "\n");
            files.push_back(dir / (stem + "_labels.json"));
        }
    };
    dump_split(ds.train, "train");
    dump_split(ds.val, "val");
    return files;
}

StoredDataset read_dataset_dir(const fs::path& dir) {
    const fs::path meta_path = dir / "dataset.json";
    json meta = read_json_file(meta_path, "dataset metadata");
    if (!meta.is_object() || meta.value("format", "") != "winconv-dataset-v1") {
        throw FormatError(meta_path.string() + " is not a winconv dataset manifest");
    }

    StoredDataset ds;
    ds.task_tag = meta.value("task", "");
    if (ds.task_tag != "fft" && ds.task_tag != "classification") {
        throw FormatError(meta_path.string() + " has unknown task \"" + ds.task_tag + "\"");
    }
    ds.size = meta.value("size", std::size_t{0});
    ds.seed = meta.value("seed", std::uint64_t{0});
    ds.classes = meta.value("classes", std::size_t{0});
    if (ds.task_tag == "classification" && ds.classes == 0) {
        throw FormatError(meta_path.string() + " is missing a positive \"classes\" count");
    }

    auto load_split = [&](const std::string& stem, Split split) {
        LabeledDataset out;
        out.images = load_tensor_raw(dir / (stem + "_images.f64"));
        if (out.images.rank() != 4) {
            throw FormatError(stem + "_images must be [N,C,H,W], got rank " +
                              std::to_string(out.images.rank()));
        }
        if (ds.task_tag == "fft") {
            out.targets = load_tensor_raw(dir / (stem + "_targets.f64"));
            if (out.targets.rank() != 2 || out.targets.extent(0) != out.images.extent(0)) {
                throw FormatError(stem + "_targets must be [N,n] matching the images");
            }
        } else {
            fs::path labels_path = dir / (stem + "_labels.json");
            out.labels = labels_from_json(read_json_file(labels_path, "label file"),
                                          ds.classes, labels_path);
            if (out.labels.size() != out.images.extent(0)) {
                throw FormatError(labels_path.string() + " holds " +
                                  std::to_string(out.labels.size()) + " labels for " +
                                  std::to_string(out.images.extent(0)) + " images");
            }
        }
        out.split = split;
        return out;
    };
    ds.train = load_split("train", Split::train);
    ds.val = load_split("val", Split::validation);

    const std::size_t want_train = meta.value("train", ds.train.count());
    const std::size_t want_val = meta.value("val", ds.val.count());
    if (want_train != ds.train.count() || want_val != ds.val.count()) {
        throw FormatError(meta_path.string() + " sample counts do not match the tensors");
    }
    return ds;
}

}  // namespace winconv
