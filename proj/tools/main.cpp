// Command-line front end: dataset generation, experiment runs, spectral and
// orthogonality analysis, adversarial evaluation, and artifact dumps. Every
// subcommand accepts --config FILE (JSON keyed by the long flag names,
// underscores for hyphens) with explicit flags taking precedence.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// failure, 1 anything else.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "winconv/attack.hpp"
#include "winconv/checkpoint.hpp"
#include "winconv/experiment.hpp"
#include "winconv/io.hpp"
#include "winconv/ortho.hpp"
#include "winconv/spectral.hpp"

using namespace winconv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& path, const char* what) {
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

void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path, std::ios::binary);
    std::string text = doc.dump(2) + "\n";
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw FormatError("cannot write " + path.string());
}

// Pulls values for unset flags from an optional per-subcommand JSON config.
class Binder {
public:
    template <typename T>
    void bind(CLI::Option* opt, T& target, const std::string& key) {
        allowed_.insert(key);
        pulls_.push_back([this, opt, &target, key] {
            if (opt->count() == 0 && cfg_.contains(key)) {
                try {
                    target = cfg_.at(key).get<T>();
                } catch (const json::exception&) {
                    throw ConfigError("config key " + key + " has the wrong type");
                }
            }
        });
    }

    void apply(const std::string& config_path) {
        if (!config_path.empty()) {
            std::ifstream in(config_path, std::ios::binary);
            if (!in) throw ConfigError("config file not found: " + config_path);
            try {
                in >> cfg_;
            } catch (const json::exception& e) {
                throw ConfigError(config_path + " is not valid JSON: " + e.what());
            }
            if (!cfg_.is_object()) throw ConfigError(config_path + " must hold a JSON object");
            for (const auto& item : cfg_.items()) {
                if (allowed_.count(item.key()) == 0) {
                    throw ConfigError("unknown config key " + item.key() + " in " +
                                      config_path);
                }
            }
        }
        for (const auto& pull : pulls_) pull();
    }

private:
    json cfg_;
    std::set<std::string> allowed_;
    std::vector<std::function<void()>> pulls_;
};

std::vector<std::size_t> parse_shape(const std::string& text) {
    std::vector<std::size_t> shape;
    std::string token;
    for (char c : text + ",") {
        if (c == ',') {
            if (token.empty()) throw ConfigError("input shape must be C,H,W");
            try {
                shape.push_back(std::stoull(token));
            } catch (const std::exception&) {
                throw ConfigError("input shape entry \"" + token + "\" is not a number");
            }
            token.clear();
        } else {
            token += c;
        }
    }
    if (shape.size() != 3) throw ConfigError("input shape must have exactly C,H,W");
    return shape;
}

LabeledDataset first_samples(const LabeledDataset& ds, std::size_t n) {
    if (n == 0 || n >= ds.count()) return ds;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    LabeledDataset out;
    out.images = gather_rows(ds.images, order);
    out.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(n));
    if (ds.targets.rank() != 0) out.targets = gather_rows(ds.targets, order);
    out.split = ds.split;
    return out;
}

json robustness_json(const RobustnessReport& r, AttackKind kind) {
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

struct GenDataArgs {
    std::string config;
    std::string task = "fft";
    std::size_t size = 32;
    std::size_t train = 10000;
    std::size_t val = 1000;
    std::uint64_t seed = 0;
    std::size_t num_waves = 3;
    double frequency_max = 0.5;
    std::string out;
};

void run_gen_data(const GenDataArgs& a) {
    if (a.out.empty()) throw ConfigError("gen-data needs --out DIR");
    if (a.train == 0 || a.val == 0) throw ConfigError("gen-data needs train >= 1 and val >= 1");
    StoredDataset ds;
    ds.size = a.size;
    ds.seed = a.seed;
    if (a.task == "fft") {
        SineImageSpec spec;
        spec.size = a.size;
        spec.num_waves = a.num_waves;
        spec.frequency_max = a.frequency_max;
        if (a.num_waves == 0) throw ConfigError("--num-waves must be >= 1");
        if (a.frequency_max <= 0.0 || a.frequency_max > 0.5) {
            throw ConfigError("--frequency-max must be in (0, 0.5]");
        }
        FftDataset d = gen_fft_dataset(Rng(a.seed), a.train, a.val, spec);
        ds.task_tag = "fft";
        ds.train = std::move(d.train);
        ds.val = std::move(d.val);
    } else if (a.task == "gratings") {
        Rng base(a.seed);
        ds.task_tag = "classification";
        ds.classes = 10;
        ds.train = gen_gratings_dataset(base.substream(1), a.train, a.size, Split::train);
        ds.val = gen_gratings_dataset(base.substream(2), a.val, a.size, Split::validation);
    } else {
        throw ConfigError("--task must be \"fft\" or \"gratings\"");
    }
    fs::path dir = resolve_output_root(a.out);
    std::vector<fs::path> files = write_dataset_dir(dir, ds);
    std::cout << "wrote " << files.size() << " files to " << dir.string() << "\n";
}

struct TrainArgs {
    std::string config;
    std::string out;
    std::vector<std::uint64_t> seeds;
    std::size_t epochs = 0;
    std::size_t batch_size = 0;
    double lr = 0.0;
    double sample_mult = 0.0;
    double channel_mult = 0.0;
    double epoch_mult = 0.0;
};

void run_train(const TrainArgs& a) {
    if (a.config.empty()) throw ConfigError("train needs --config FILE");
    std::ifstream in(a.config, std::ios::binary);
    if (!in) throw ConfigError("config file not found: " + a.config);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError(a.config + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError(a.config + " must hold a JSON object");

    // Overrides land in the document itself so the run's config.json and
    // hash describe what actually executed.
    if (!a.out.empty()) doc["output_dir"] = a.out;
    if (!a.seeds.empty()) doc["seeds"] = a.seeds;
    if (a.epochs > 0) doc["train"]["epochs"] = a.epochs;
    if (a.batch_size > 0) doc["train"]["batch_size"] = a.batch_size;
    if (a.lr > 0.0) doc["train"]["lr"] = a.lr;
    if (a.sample_mult > 0.0) doc["scale"]["sample_mult"] = a.sample_mult;
    if (a.channel_mult > 0.0) doc["scale"]["channel_mult"] = a.channel_mult;
    if (a.epoch_mult > 0.0) doc["scale"]["epoch_mult"] = a.epoch_mult;

    ExperimentConfig cfg = experiment_config_from_json(doc);
    RunReport report = run_experiment(cfg);

    const fs::path root = resolve_output_root(cfg.output_dir);
    std::cout << "report: " << (root / "report.json").string() << "\n";
    std::cout << "config hash: " << report.config_hash << "\n";
    for (const json& v : report.summary.at("variants")) {
        std::cout << v.at("name").get<std::string>() << ": final "
                  << report.summary.at("metric").get<std::string>() << " "
                  << v.at("aggregate").at("final_val_metric_mean").get<double>();
        if (v.at("aggregate").contains("final_val_metric_std")) {
            std::cout << " +- " << v.at("aggregate").at("final_val_metric_std").get<double>();
        }
        std::cout << "\n";
    }
}

struct SpectrumArgs {
    std::string config;
    std::string input;
    std::string out;
    std::size_t grid = 0;
    double threshold_db = -6.0;
};

void run_analyze_spectrum(const SpectrumArgs& a) {
    if (a.input.empty() || a.out.empty()) {
        throw ConfigError("analyze-spectrum needs --input FILE and --out DIR");
    }
    Tensor x = load_tensor_raw(a.input);
    if (x.rank() == 3 && x.extent(0) == 1) {
        Tensor grid({x.extent(1), x.extent(2)});
        for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = x[i];
        x = std::move(grid);
    }
    if (x.rank() != 2) {
        throw FormatError("analyze-spectrum expects a rank-2 grid (or [1,H,W]), got rank " +
                          std::to_string(x.rank()));
    }

    Spectrum2D spectrum;
    if (a.grid == 0) {
        spectrum = dft2_mag(x);
    } else {
        spectrum = kernel_frequency_response(x, a.grid);
    }
    LeakageReport leakage = leakage_metrics(spectrum, a.threshold_db);

    fs::path dir = resolve_output_root(a.out);
    fs::create_directories(dir);
    save_tensor_raw(spectrum.mag, dir / "spectrum.f64");
    write_pgm(dir / "spectrum.pgm", spectrum.mag, PgmScale::log_db80);
    json doc;
    doc["threshold_db"] = a.threshold_db;
    doc["peak_mainlobe"] = leakage.peak_mainlobe;
    doc["peak_sidelobe"] = leakage.peak_sidelobe;
    doc["sidelobe_db"] = leakage.sidelobe_db;
    doc["out_of_band_energy_fraction"] = leakage.out_of_band_energy_fraction;
    write_json(dir / "leakage.json", doc);

    std::cout << "peak sidelobe: " << leakage.sidelobe_db << " dB\n";
    std::cout << "out-of-band energy fraction: " << leakage.out_of_band_energy_fraction
              << "\n";
    std::cout << "wrote " << (dir / "spectrum.pgm").string() << "\n";
}

struct OrthoArgs {
    std::string config;
    std::string checkpoint;
    std::string input_shape;
    std::uint64_t seed = 0;
    std::size_t budget = kDbtEntryBudget;
    std::string out;
};

void run_analyze_ortho(const OrthoArgs& a) {
    if (a.checkpoint.empty() || a.input_shape.empty() || a.out.empty()) {
        throw ConfigError("analyze-ortho needs --checkpoint DIR, --input-shape C,H,W, "
                          "and --out FILE");
    }
    Checkpoint ck = load_checkpoint(a.checkpoint);
    std::vector<std::size_t> shape = parse_shape(a.input_shape);
    std::vector<LayerOrtho> layers = ortho_report(ck.model, shape, Rng(a.seed), a.budget);

    json doc;
    doc["layers"] = json::array();
    for (const LayerOrtho& l : layers) {
        json e;
        e["name"] = l.name;
        e["D"] = l.deviation;
        e["chance_D"] = l.chance;
        e["rows_used"] = l.rows_used;
        doc["layers"].push_back(e);
        std::cout << l.name << ": D " << l.deviation << " (chance " << l.chance << ", "
                  << l.rows_used << " rows)\n";
    }
    fs::path out = resolve_output_root(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_json(out, doc);
}

struct AttackArgs {
    std::string config;
    std::string checkpoint;
    std::string dataset;
    std::string kind = "deepfool";
    std::size_t max_iter = 100;
    double overshoot = 0.02;
    double tr = 12.5;
    double rot = 22.5;
    std::size_t grid_steps = 5;
    std::size_t samples = 0;
    std::string out;
};

void run_attack(const AttackArgs& a) {
    if (a.checkpoint.empty() || a.dataset.empty() || a.out.empty()) {
        throw ConfigError("attack needs --checkpoint DIR, --dataset DIR, and --out FILE");
    }
    AttackConfig cfg;
    if (a.kind == "deepfool") {
        cfg.kind = AttackKind::deepfool;
    } else if (a.kind == "spatial") {
        cfg.kind = AttackKind::spatial;
    } else {
        throw ConfigError("--kind must be \"deepfool\" or \"spatial\"");
    }
    cfg.deepfool.max_iter = a.max_iter;
    cfg.deepfool.overshoot = a.overshoot;
    cfg.spatial.max_translate_percent = a.tr;
    cfg.spatial.max_rotate_degrees = a.rot;
    cfg.spatial.grid_steps = a.grid_steps;

    Checkpoint ck = load_checkpoint(a.checkpoint);
    StoredDataset stored = read_dataset_dir(a.dataset);
    if (stored.task_tag != "classification") {
        throw ConfigError("attack evaluation needs a classification dataset; " +
                          a.dataset + " holds " + stored.task_tag + " data");
    }
    LabeledDataset subset = first_samples(stored.val, a.samples);
    RobustnessReport report = evaluate_robustness(ck.model, subset, cfg);

    fs::path out = resolve_output_root(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_json(out, robustness_json(report, cfg.kind));

    std::cout << "clean accuracy: " << report.clean_accuracy << "\n";
    std::cout << "attacked accuracy: " << report.attacked_accuracy << "\n";
    std::cout << "mean perturbation norm: " << report.mean_norm << "\n";
    if (report.stalled > 0) std::cout << "stalled samples: " << report.stalled << "\n";
}

struct CompareArgs {
    std::string config;
    std::string a;
    std::string b;
    std::string out;
};

void run_compare(const CompareArgs& args) {
    if (args.a.empty() || args.b.empty() || args.out.empty()) {
        throw ConfigError("compare needs --a REPORT, --b REPORT, and --out FILE");
    }
    json ra = read_json(args.a, "run report");
    json rb = read_json(args.b, "run report");
    json cmp = compare_runs(ra, rb);
    fs::path out = resolve_output_root(args.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_comparison_csv(out, cmp);
    std::cout << "wrote " << cmp.at("rows").size() << " comparison rows to "
              << out.string() << "\n";
    for (const json& row : cmp.at("rows")) {
        if (row.at("metric") == "final_val_metric") {
            std::cout << row.at("variant").get<std::string>() << ": final delta "
                      << row.at("delta").get<double>() << "\n";
        }
    }
}

struct DumpKernelArgs {
    std::string config;
    std::string checkpoint;
    std::string layer = "conv0";
    std::size_t grid = 64;
    std::string out;
};

void run_dump_kernels(const DumpKernelArgs& a) {
    if (a.checkpoint.empty() || a.out.empty()) {
        throw ConfigError("dump-kernels needs --checkpoint DIR and --out DIR");
    }
    Checkpoint ck = load_checkpoint(a.checkpoint);
    fs::path dir = resolve_output_root(a.out);
    std::vector<fs::path> files = dump_kernels(ck.model, a.layer, dir, a.grid);
    std::cout << "wrote " << files.size() << " images to " << dir.string() << "\n";
}

struct DumpWindowArgs {
    std::string config;
    std::string family = "hamming";
    std::size_t size = 11;
    std::string out;
};

void run_dump_window(const DumpWindowArgs& a) {
    if (a.out.empty()) throw ConfigError("dump-window needs --out DIR");
    WindowSpec spec;
    if (a.family == "hamming") {
        spec.family = WindowFamily::hamming;
    } else if (a.family == "rectangular") {
        spec.family = WindowFamily::rectangular;
    } else {
        throw ConfigError("--family must be \"hamming\" or \"rectangular\"");
    }
    spec.k_rows = a.size;
    spec.k_cols = a.size;
    Window window = make_window(spec);

    fs::path dir = resolve_output_root(a.out);
    fs::create_directories(dir);
    save_tensor_raw(window.coeffs, dir / "window2d.f64");
    write_pgm(dir / "window2d.pgm", window.coeffs, PgmScale::fixed01);
    std::vector<double> curve = spec.family == WindowFamily::hamming
                                    ? hamming_1d(a.size)
                                    : std::vector<double>(a.size, 1.0);
    Tensor curve_t({a.size});
    for (std::size_t i = 0; i < a.size; ++i) curve_t[i] = curve[i];
    save_tensor_raw(curve_t, dir / "window1d.f64");

    std::cout << "center " << curve[a.size / 2] << ", edge " << curve[0] << "\n";
    std::cout << "wrote " << (dir / "window2d.pgm").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"windowed-convolution experiment toolkit"};
    app.require_subcommand(1);

    auto gen = std::make_shared<GenDataArgs>();
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a dataset directory");
    {
        auto binder = std::make_shared<Binder>();
        binder->bind(gen_cmd->add_option("--task", gen->task, "fft | gratings")
                         ->capture_default_str(),
                     gen->task, "task");
        binder->bind(gen_cmd->add_option("--size", gen->size, "image side length")
                         ->capture_default_str(),
                     gen->size, "size");
        binder->bind(gen_cmd->add_option("--train", gen->train, "training samples")
                         ->capture_default_str(),
                     gen->train, "train");
        binder->bind(gen_cmd->add_option("--val", gen->val, "validation samples")
                         ->capture_default_str(),
                     gen->val, "val");
        binder->bind(gen_cmd->add_option("--seed", gen->seed, "generator seed")
                         ->capture_default_str(),
                     gen->seed, "seed");
        binder->bind(gen_cmd->add_option("--num-waves", gen->num_waves,
                                         "sine components per image (fft)")
                         ->capture_default_str(),
                     gen->num_waves, "num_waves");
        binder->bind(gen_cmd->add_option("--frequency-max", gen->frequency_max,
                                         "frequency bound in cycles/pixel (fft)")
                         ->capture_default_str(),
                     gen->frequency_max, "frequency_max");
        binder->bind(gen_cmd->add_option("--out", gen->out, "output directory"),
                     gen->out, "out");
        gen_cmd->add_option("--config", gen->config, "JSON config for these flags");
        gen_cmd->callback([gen, binder] {
            binder->apply(gen->config);
            run_gen_data(*gen);
        });
    }

    auto tr = std::make_shared<TrainArgs>();
    auto* tr_cmd = app.add_subcommand("train", "Run a declarative experiment config");
    tr_cmd->add_option("--config", tr->config, "experiment config JSON")->required();
    tr_cmd->add_option("--out", tr->out, "override output_dir");
    tr_cmd->add_option("--seeds", tr->seeds, "override seeds (comma separated)")
        ->delimiter(',');
    tr_cmd->add_option("--epochs", tr->epochs, "override train.epochs");
    tr_cmd->add_option("--batch-size", tr->batch_size, "override train.batch_size");
    tr_cmd->add_option("--lr", tr->lr, "override train.lr");
    tr_cmd->add_option("--sample-mult", tr->sample_mult, "override scale.sample_mult");
    tr_cmd->add_option("--channel-mult", tr->channel_mult, "override scale.channel_mult");
    tr_cmd->add_option("--epoch-mult", tr->epoch_mult, "override scale.epoch_mult");
    tr_cmd->callback([tr] { run_train(*tr); });

    auto sp = std::make_shared<SpectrumArgs>();
    auto* sp_cmd = app.add_subcommand("analyze-spectrum",
                                      "DFT magnitude and leakage of a stored grid");
    {
        auto binder = std::make_shared<Binder>();
        binder->bind(sp_cmd->add_option("--input", sp->input, "raw tensor file"),
                     sp->input, "input");
        binder->bind(sp_cmd->add_option("--grid", sp->grid,
                                        "zero-embed into grid x grid (0 = direct DFT)")
                         ->capture_default_str(),
                     sp->grid, "grid");
        binder->bind(sp_cmd->add_option("--threshold-db", sp->threshold_db,
                                        "main-lobe threshold in dB")
                         ->capture_default_str(),
                     sp->threshold_db, "threshold_db");
        binder->bind(sp_cmd->add_option("--out", sp->out, "output directory"),
                     sp->out, "out");
        sp_cmd->add_option("--config", sp->config, "JSON config for these flags");
        sp_cmd->callback([sp, binder] {
            binder->apply(sp->config);
            run_analyze_spectrum(*sp);
        });
    }

    auto ortho = std::make_shared<OrthoArgs>();
    auto* ortho_cmd = app.add_subcommand("analyze-ortho",
                                         "Row-orthogonality deviation of a checkpoint");
    {
        auto binder = std::make_shared<Binder>();
        binder->bind(ortho_cmd->add_option("--checkpoint", ortho->checkpoint,
                                           "checkpoint directory"),
                     ortho->checkpoint, "checkpoint");
        binder->bind(ortho_cmd->add_option("--input-shape", ortho->input_shape,
                                           "analysis input as C,H,W"),
                     ortho->input_shape, "input_shape");
        binder->bind(ortho_cmd->add_option("--seed", ortho->seed,
                                           "seed for the chance baseline")
                         ->capture_default_str(),
                     ortho->seed, "seed");
        binder->bind(ortho_cmd->add_option("--budget", ortho->budget,
                                           "max matrix entries per layer")
                         ->capture_default_str(),
                     ortho->budget, "budget");
        binder->bind(ortho_cmd->add_option("--out", ortho->out, "report JSON path"),
                     ortho->out, "out");
        ortho_cmd->add_option("--config", ortho->config, "JSON config for these flags");
        ortho_cmd->callback([ortho, binder] {
            binder->apply(ortho->config);
            run_analyze_ortho(*ortho);
        });
    }

    auto atk = std::make_shared<AttackArgs>();
    auto* atk_cmd = app.add_subcommand("attack",
                                       "Adversarial robustness of a checkpoint on a "
                                       "stored dataset's validation split");
    {
        auto binder = std::make_shared<Binder>();
        binder->bind(atk_cmd->add_option("--checkpoint", atk->checkpoint,
                                         "checkpoint directory"),
                     atk->checkpoint, "checkpoint");
        binder->bind(atk_cmd->add_option("--dataset", atk->dataset, "dataset directory"),
                     atk->dataset, "dataset");
        binder->bind(atk_cmd->add_option("--kind", atk->kind, "deepfool | spatial")
                         ->capture_default_str(),
                     atk->kind, "kind");
        binder->bind(atk_cmd->add_option("--max-iter", atk->max_iter,
                                         "deepfool iteration cap")
                         ->capture_default_str(),
                     atk->max_iter, "max_iter");
        binder->bind(atk_cmd->add_option("--overshoot", atk->overshoot,
                                         "deepfool overshoot")
                         ->capture_default_str(),
                     atk->overshoot, "overshoot");
        binder->bind(atk_cmd->add_option("--tr", atk->tr,
                                         "max translation, percent of extent")
                         ->capture_default_str(),
                     atk->tr, "tr");
        binder->bind(atk_cmd->add_option("--rot", atk->rot, "max rotation, degrees")
                         ->capture_default_str(),
                     atk->rot, "rot");
        binder->bind(atk_cmd->add_option("--grid-steps", atk->grid_steps,
                                         "odd steps per spatial axis")
                         ->capture_default_str(),
                     atk->grid_steps, "grid_steps");
        binder->bind(atk_cmd->add_option("--samples", atk->samples,
                                         "validation samples to attack (0 = all)")
                         ->capture_default_str(),
                     atk->samples, "samples");
        binder->bind(atk_cmd->add_option("--out", atk->out, "result JSON path"),
                     atk->out, "out");
        atk_cmd->add_option("--config", atk->config, "JSON config for these flags");
        atk_cmd->callback([atk, binder] {
            binder->apply(atk->config);
            run_attack(*atk);
        });
    }

    auto cmp = std::make_shared<CompareArgs>();
    auto* cmp_cmd = app.add_subcommand("compare", "Delta table between two run reports");
    {
        auto binder = std::make_shared<Binder>();
        binder->bind(cmp_cmd->add_option("--a", cmp->a, "first report.json"), cmp->a, "a");
        binder->bind(cmp_cmd->add_option("--b", cmp->b, "second report.json"), cmp->b, "b");
        binder->bind(cmp_cmd->add_option("--out", cmp->out, "comparison CSV path"),
                     cmp->out, "out");
        cmp_cmd->add_option("--config", cmp->config, "JSON config for these flags");
        cmp_cmd->callback([cmp, binder] {
            binder->apply(cmp->config);
            run_compare(*cmp);
        });
    }

    auto dk = std::make_shared<DumpKernelArgs>();
    auto* dk_cmd = app.add_subcommand("dump-kernels",
                                      "Kernel slices and frequency responses as PGM");
    {
        auto binder = std::make_shared<Binder>();
        binder->bind(dk_cmd->add_option("--checkpoint", dk->checkpoint,
                                        "checkpoint directory"),
                     dk->checkpoint, "checkpoint");
        binder->bind(dk_cmd->add_option("--layer", dk->layer, "layer name, e.g. conv0")
                         ->capture_default_str(),
                     dk->layer, "layer");
        binder->bind(dk_cmd->add_option("--grid", dk->grid, "spectrum grid size")
                         ->capture_default_str(),
                     dk->grid, "grid");
        binder->bind(dk_cmd->add_option("--out", dk->out, "output directory"),
                     dk->out, "out");
        dk_cmd->add_option("--config", dk->config, "JSON config for these flags");
        dk_cmd->callback([dk, binder] {
            binder->apply(dk->config);
            run_dump_kernels(*dk);
        });
    }

    auto dw = std::make_shared<DumpWindowArgs>();
    auto* dw_cmd = app.add_subcommand("dump-window", "Window coefficient grids");
    {
        auto binder = std::make_shared<Binder>();
        binder->bind(dw_cmd->add_option("--family", dw->family, "hamming | rectangular")
                         ->capture_default_str(),
                     dw->family, "family");
        binder->bind(dw_cmd->add_option("--size", dw->size, "taps per side")
                         ->capture_default_str(),
                     dw->size, "size");
        binder->bind(dw_cmd->add_option("--out", dw->out, "output directory"),
                     dw->out, "out");
        dw_cmd->add_option("--config", dw->config, "JSON config for these flags");
        dw_cmd->callback([dw, binder] {
            binder->apply(dw->config);
            run_dump_window(*dw);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
