#include "winconv/attack.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

namespace winconv {

namespace {

double bilinear_zero(const Tensor& x, std::size_t ch, double row, double col) {
    const std::size_t h = x.extent(1), w = x.extent(2);
    const double fr = std::floor(row), fc = std::floor(col);
    const std::ptrdiff_t r0 = static_cast<std::ptrdiff_t>(fr);
    const std::ptrdiff_t c0 = static_cast<std::ptrdiff_t>(fc);
    const double wr = row - fr, wc = col - fc;
    auto fetch = [&](std::ptrdiff_t r, std::ptrdiff_t c) -> double {
        if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(h) ||
            c >= static_cast<std::ptrdiff_t>(w)) {
            return 0.0;
        }
        return x.at({ch, static_cast<std::size_t>(r), static_cast<std::size_t>(c)});
    };
    const double top = (1.0 - wc) * fetch(r0, c0) + wc * fetch(r0, c0 + 1);
    const double bottom = (1.0 - wc) * fetch(r0 + 1, c0) + wc * fetch(r0 + 1, c0 + 1);
    return (1.0 - wr) * top + wr * bottom;
}

int argmax_row(const double* row, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (row[i] > row[best]) best = i;
    }
    return static_cast<int>(best);
}

double row_cross_entropy(const double* row, std::size_t n, int label) {
    double m = row[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, row[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::exp(row[i] - m);
    return std::log(sum) - (row[static_cast<std::size_t>(label)] - m);
}

Tensor replicate(const Tensor& x, std::size_t copies) {
    std::vector<std::size_t> shape = {copies};
    for (std::size_t a = 0; a < x.rank(); ++a) shape.push_back(x.extent(a));
    Tensor batch(shape);
    for (std::size_t i = 0; i < copies; ++i) {
        std::memcpy(batch.data() + i * x.size(), x.data(), x.size() * sizeof(double));
    }
    return batch;
}

void check_classifier_sample(const Model& model, const Tensor& x, int label,
                             const char* who) {
    if (model.spec.task != Task::classification) {
        throw ConfigError(std::string(who) + " attacks classification models only");
    }
    if (model.spec.num_outputs < 2) {
        throw ConfigError(std::string(who) + " needs at least two classes");
    }
    if (x.rank() != 3) throw ShapeError(std::string(who) + " expects one [C,H,W] image");
    if (label < 0 || static_cast<std::size_t>(label) >= model.spec.num_outputs) {
        throw RangeError(std::string(who) + ": label " + std::to_string(label) +
                         " outside [0," + std::to_string(model.spec.num_outputs) + ")");
    }
}

// grid_steps values spanning [-bound, +bound] with the endpoints and an exact
// 0 in the middle; a zero bound collapses to just {0}.
std::vector<double> axis_values(double bound, std::size_t steps) {
    if (bound == 0.0 || steps == 1) return {0.0};
    const std::size_t mid = (steps - 1) / 2;
    std::vector<double> values(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        values[i] = bound * (static_cast<double>(i) - static_cast<double>(mid)) /
                    static_cast<double>(mid);
    }
    return values;
}

}  // namespace

Tensor warp_image(const Tensor& x, double degrees, double translate_rows,
                  double translate_cols) {
    if (x.rank() != 3) throw ShapeError("warp_image expects [C,H,W]");
    if (degrees == 0.0 && translate_rows == 0.0 && translate_cols == 0.0) return x;

    double cs, sn;
    const double quarter = degrees / 90.0;
    if (quarter == std::floor(quarter)) {
        static constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
        static constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
        const int q = static_cast<int>(std::fmod(std::fmod(quarter, 4.0) + 4.0, 4.0));
        cs = kCos[q];
        sn = kSin[q];
    } else {
        const double rad = degrees * std::numbers::pi / 180.0;
        cs = std::cos(rad);
        sn = std::sin(rad);
    }

    const std::size_t c_n = x.extent(0), h = x.extent(1), w = x.extent(2);
    const double cr = static_cast<double>(h - 1) / 2.0;
    const double cc = static_cast<double>(w - 1) / 2.0;
    Tensor out(x.shape());
    for (std::size_t ch = 0; ch < c_n; ++ch) {
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t q = 0; q < w; ++q) {
                const double dy = static_cast<double>(r) - cr - translate_rows;
                const double dx = static_cast<double>(q) - cc - translate_cols;
                const double in_col = cs * dx + sn * dy + cc;
                const double in_row = -sn * dx + cs * dy + cr;
                out.at({ch, r, q}) = bilinear_zero(x, ch, in_row, in_col);
            }
        }
    }
    return out;
}

SampleAttack deepfool(const Model& model, const Tensor& x, int label,
                      const DeepfoolConfig& cfg) {
    check_classifier_sample(model, x, label, "deepfool");
    if (cfg.max_iter == 0) throw ConfigError("deepfool max_iter must be >= 1");
    if (cfg.overshoot < 0.0) throw ConfigError("deepfool overshoot must be >= 0");
    const std::size_t classes = model.spec.num_outputs;
    const std::size_t plane = x.size();

    SampleAttack res;
    Tensor clean_logits = forward(model, replicate(x, 1));
    res.clean_prediction = argmax_row(clean_logits.data(), classes);
    if (res.clean_prediction != label) {
        res.success = true;
        res.final_prediction = res.clean_prediction;
        return res;
    }
    const int orig = res.clean_prediction;

    Tensor identity({classes, classes});
    for (std::size_t k = 0; k < classes; ++k) identity.at({k, k}) = 1.0;

    Tensor r_total(x.shape());
    Tensor current = x;
    while (res.iterations < cfg.max_iter) {
        BatchCache cache;
        Tensor logits = forward(model, replicate(current, classes), &cache);
        const double* f = logits.data();  // every row is the same image
        if (argmax_row(f, classes) != orig) break;

        ModelGrads grads = backward(model, cache, identity, true, false);
        const double* g = grads.dinput.data();
        const double* g_orig = g + static_cast<std::size_t>(orig) * plane;

        double best_ratio = std::numeric_limits<double>::infinity();
        std::size_t best_k = classes;
        double best_diff = 0.0, best_norm2 = 0.0;
        for (std::size_t k = 0; k < classes; ++k) {
            if (static_cast<int>(k) == orig) continue;
            const double* gk = g + k * plane;
            double norm2 = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = gk[i] - g_orig[i];
                norm2 += d * d;
            }
            if (norm2 == 0.0) continue;
            const double diff = std::abs(f[k] - f[static_cast<std::size_t>(orig)]);
            const double ratio = diff / std::sqrt(norm2);
            if (ratio < best_ratio) {
                best_ratio = ratio;
                best_k = k;
                best_diff = diff;
                best_norm2 = norm2;
            }
        }
        if (best_k == classes) {
            res.stalled = true;
            break;
        }

        const double* gk = g + best_k * plane;
        const double scale = best_diff / best_norm2;
        for (std::size_t i = 0; i < plane; ++i) {
            r_total[i] += scale * (gk[i] - g_orig[i]);
            current[i] = x[i] + r_total[i];
        }
        ++res.iterations;
    }

    const double boost = 1.0 + cfg.overshoot;
    Tensor adv(x.shape());
    double norm2 = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
        const double p = boost * r_total[i];
        adv[i] = x[i] + p;
        norm2 += p * p;
    }
    res.perturbation_norm = std::sqrt(norm2);

    Tensor final_logits = forward(model, replicate(adv, 1));
    res.final_prediction = argmax_row(final_logits.data(), classes);
    res.success = res.final_prediction != label;
    return res;
}

SampleAttack spatial_attack(const Model& model, const Tensor& x, int label,
                            const SpatialConfig& cfg) {
    check_classifier_sample(model, x, label, "spatial attack");
    if (cfg.grid_steps == 0) throw ConfigError("grid_steps must be >= 1");
    if (cfg.grid_steps % 2 == 0) {
        throw ConfigError("grid_steps must be odd so the identity transform is on the grid");
    }
    if (cfg.max_translate_percent < 0.0 || cfg.max_rotate_degrees < 0.0) {
        throw ConfigError("spatial attack budgets must be >= 0");
    }

    const std::size_t h = x.extent(1), w = x.extent(2);
    const std::vector<double> rows =
        axis_values(cfg.max_translate_percent / 100.0 * static_cast<double>(h),
                    cfg.grid_steps);
    const std::vector<double> cols =
        axis_values(cfg.max_translate_percent / 100.0 * static_cast<double>(w),
                    cfg.grid_steps);
    const std::vector<double> angles = axis_values(cfg.max_rotate_degrees, cfg.grid_steps);

    struct Transform {
        double dr, dc, deg;
    };
    std::vector<Transform> grid;
    grid.reserve(rows.size() * cols.size() * angles.size());
    for (double dr : rows) {
        for (double dc : cols) {
            for (double deg : angles) grid.push_back({dr, dc, deg});
        }
    }

    std::vector<std::size_t> shape = {grid.size()};
    for (std::size_t a = 0; a < x.rank(); ++a) shape.push_back(x.extent(a));
    Tensor batch(shape);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        Tensor warped = warp_image(x, grid[i].deg, grid[i].dr, grid[i].dc);
        std::memcpy(batch.data() + i * x.size(), warped.data(), x.size() * sizeof(double));
    }

    const std::size_t classes = model.spec.num_outputs;
    Tensor logits = forward(model, batch);

    SampleAttack res;
    std::size_t best = 0;
    bool best_mis = false;
    double best_ce = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double* row = logits.data() + i * classes;
        const int pred = argmax_row(row, classes);
        const bool mis = pred != label;
        const double ce = row_cross_entropy(row, classes, label);
        const bool better = (mis && !best_mis) || (mis == best_mis && ce > best_ce);
        if (better) {
            best = i;
            best_mis = mis;
            best_ce = ce;
        }
        if (grid[i].dr == 0.0 && grid[i].dc == 0.0 && grid[i].deg == 0.0) {
            res.clean_prediction = pred;
        }
    }

    const double* chosen = logits.data() + best * classes;
    res.final_prediction = argmax_row(chosen, classes);
    res.success = best_mis;
    res.loss = best_ce;
    res.translate_rows = grid[best].dr;
    res.translate_cols = grid[best].dc;
    res.rotate_degrees = grid[best].deg;
    return res;
}

RobustnessReport evaluate_robustness(const Model& model, const LabeledDataset& ds,
                                     const AttackConfig& cfg) {
    const std::size_t n = ds.count();
    if (n == 0) throw SizeError("robustness evaluation needs at least one sample");

    RobustnessReport report;
    report.count = n;
    report.clean_accuracy = evaluate_accuracy(model, ds);

    std::size_t attacked_correct = 0;
    double norm_sum = 0.0;
    report.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor xi = dataset_sample(ds.images, i);
        SampleAttack sa = cfg.kind == AttackKind::deepfool
                              ? deepfool(model, xi, ds.labels[i], cfg.deepfool)
                              : spatial_attack(model, xi, ds.labels[i], cfg.spatial);
        if (sa.final_prediction == ds.labels[i]) ++attacked_correct;
        if (sa.stalled) ++report.stalled;
        norm_sum += sa.perturbation_norm;
        report.max_norm = std::max(report.max_norm, sa.perturbation_norm);
        report.samples.push_back(sa);
    }
    report.attacked_accuracy = static_cast<double>(attacked_correct) /
                               static_cast<double>(n);
    report.mean_norm = norm_sum / static_cast<double>(n);
    return report;
}

}  // namespace winconv
