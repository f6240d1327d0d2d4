#include "winconv/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "winconv/spectral.hpp"

namespace winconv {

namespace {

constexpr double kPi = std::numbers::pi;

void require_chw(const Tensor& x, const char* what) {
    if (x.rank() != 3) {
        throw ShapeError(std::string(what) + " expects a [C,H,W] tensor, got rank " +
                         std::to_string(x.rank()));
    }
}

std::vector<unsigned char> read_all_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    f.seekg(0, std::ios::end);
    const auto end = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(end));
    f.read(reinterpret_cast<char*>(bytes.data()), end);
    if (!f) throw FormatError("failed reading " + path.string());
    return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
    if (offset + 4 > bytes.size()) {
        throw FormatError(path.string() + " truncated: need 4 bytes at offset " +
                          std::to_string(offset) + ", file has " +
                          std::to_string(bytes.size()));
    }
    return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
           (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

void write_be32(std::ofstream& f, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

unsigned char quantize_unit(double v) {
    const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<unsigned char>(std::lround(clamped * 255.0));
}

}  // namespace

Tensor render_sine_image(const SineImageSpec& spec, const std::vector<SineWave>& waves) {
    const std::size_t p = spec.size;
    if (p == 0) throw SizeError("sine image size must be positive");
    Tensor img({1, p, p});
    double* out = img.data();
    for (const SineWave& w : waves) {
        const double c = std::cos(w.orientation), s = std::sin(w.orientation);
        for (std::size_t x = 0; x < p; ++x) {
            const double xc = static_cast<double>(x) * c;
            for (std::size_t y = 0; y < p; ++y) {
                const double proj = xc + static_cast<double>(y) * s;
                out[x * p + y] += std::sin(2.0 * kPi * proj * w.frequency + w.phase);
            }
        }
    }
    return img;
}

SineImage gen_sine_image(Rng& rng, const SineImageSpec& spec) {
    SineImage result;
    result.waves.reserve(spec.num_waves);
    for (std::size_t i = 0; i < spec.num_waves; ++i) {
        SineWave w;
        w.frequency = rng.uniform(0.0, spec.frequency_max);
        w.orientation = rng.uniform(0.0, kPi);
        w.phase = rng.uniform(0.0, 2.0 * kPi);
        result.waves.push_back(w);
    }
    result.image = render_sine_image(spec, result.waves);
    return result;
}

namespace {

LabeledDataset gen_fft_split(const Rng& rng, std::size_t first, std::size_t n,
                             const SineImageSpec& spec, Split split) {
    const std::size_t p = spec.size;
    LabeledDataset ds;
    ds.split = split;
    ds.images = Tensor({n, 1, p, p});
    ds.targets = Tensor({n, p * p});
    for (std::size_t i = 0; i < n; ++i) {
        Rng sub = rng.substream(first + i);
        SineImage sample = gen_sine_image(sub, spec);

        std::memcpy(ds.images.data() + i * p * p, sample.image.data(),
                    p * p * sizeof(double));

        Tensor plane({p, p});
        std::memcpy(plane.data(), sample.image.data(), p * p * sizeof(double));
        Tensor target = flatten_spectrum(dft2_mag(plane));
        std::memcpy(ds.targets.data() + i * p * p, target.data(), p * p * sizeof(double));
    }
    return ds;
}

}  // namespace

FftDataset gen_fft_dataset(const Rng& rng, std::size_t n_train, std::size_t n_val,
                           const SineImageSpec& spec) {
    if (n_train == 0 || n_val == 0) throw SizeError("dataset split counts must be >= 1");
    FftDataset out;
    out.train = gen_fft_split(rng, 0, n_train, spec, Split::train);
    out.val = gen_fft_split(rng, n_train, n_val, spec, Split::validation);
    return out;
}

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
    const auto img_bytes = read_all_bytes(images_path);
    const std::uint32_t img_magic = read_be32(img_bytes, 0, images_path);
    if (img_magic != 0x00000803u) {
        throw FormatError(images_path.string() + ": bad image magic 0x" +
                          [&] {
                              char buf[16];
                              std::snprintf(buf, sizeof(buf), "%08x", img_magic);
                              return std::string(buf);
                          }() +
                          " at byte 0 (expected 0x00000803)");
    }
    const std::uint32_t n = read_be32(img_bytes, 4, images_path);
    const std::uint32_t h = read_be32(img_bytes, 8, images_path);
    const std::uint32_t w = read_be32(img_bytes, 12, images_path);
    const std::size_t pixel_count = std::size_t(n) * h * w;
    if (img_bytes.size() != 16 + pixel_count) {
        throw FormatError(images_path.string() + ": expected " +
                          std::to_string(16 + pixel_count) + " bytes for " +
                          std::to_string(n) + " images of " + std::to_string(h) + "x" +
                          std::to_string(w) + ", file has " +
                          std::to_string(img_bytes.size()));
    }

    const auto lbl_bytes = read_all_bytes(labels_path);
    const std::uint32_t lbl_magic = read_be32(lbl_bytes, 0, labels_path);
    if (lbl_magic != 0x00000801u) {
        throw FormatError(labels_path.string() + ": bad label magic at byte 0 (expected 0x00000801)");
    }
    const std::uint32_t n_labels = read_be32(lbl_bytes, 4, labels_path);
    if (n_labels != n) {
        throw FormatError(labels_path.string() + ": label count " + std::to_string(n_labels) +
                          " does not match image count " + std::to_string(n));
    }
    if (lbl_bytes.size() != 8 + std::size_t(n)) {
        throw FormatError(labels_path.string() + ": expected " + std::to_string(8 + n) +
                          " bytes, file has " + std::to_string(lbl_bytes.size()));
    }

    LabeledDataset ds;
    ds.images = Tensor({n, 1, h, w});
    double* out = ds.images.data();
    for (std::size_t i = 0; i < pixel_count; ++i) {
        out[i] = static_cast<double>(img_bytes[16 + i]) / 255.0;
    }
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char label = lbl_bytes[8 + i];
        if (label > 9) {
            throw FormatError(labels_path.string() + ": label " + std::to_string(label) +
                              " out of range [0,9] at byte " + std::to_string(8 + i));
        }
        ds.labels[i] = label;
    }
    return ds;
}

void write_idx(const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path, const LabeledDataset& ds) {
    if (ds.images.rank() != 4 || ds.images.extent(1) != 1) {
        throw ShapeError("IDX output expects images shaped [N,1,H,W]");
    }
    const std::size_t n = ds.images.extent(0);
    const std::size_t h = ds.images.extent(2);
    const std::size_t w = ds.images.extent(3);
    if (ds.labels.size() != n) {
        throw ShapeError("IDX output: " + std::to_string(ds.labels.size()) + " labels for " +
                         std::to_string(n) + " images");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (ds.labels[i] < 0 || ds.labels[i] > 9) {
            throw RangeError("IDX labels must lie in [0,9], sample " + std::to_string(i) +
                             " has " + std::to_string(ds.labels[i]));
        }
    }

    if (images_path.has_parent_path()) std::filesystem::create_directories(images_path.parent_path());
    std::ofstream fi(images_path, std::ios::binary);
    if (!fi) throw FormatError("cannot open " + images_path.string() + " for writing");
    write_be32(fi, 0x00000803u);
    write_be32(fi, static_cast<std::uint32_t>(n));
    write_be32(fi, static_cast<std::uint32_t>(h));
    write_be32(fi, static_cast<std::uint32_t>(w));
    std::vector<unsigned char> pixels(n * h * w);
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = quantize_unit(ds.images[i]);
    fi.write(reinterpret_cast<const char*>(pixels.data()),
             static_cast<std::streamsize>(pixels.size()));
    if (!fi) throw FormatError("short write to " + images_path.string());

    if (labels_path.has_parent_path()) std::filesystem::create_directories(labels_path.parent_path());
    std::ofstream fl(labels_path, std::ios::binary);
    if (!fl) throw FormatError("cannot open " + labels_path.string() + " for writing");
    write_be32(fl, 0x00000801u);
    write_be32(fl, static_cast<std::uint32_t>(n));
    std::vector<unsigned char> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<unsigned char>(ds.labels[i]);
    fl.write(reinterpret_cast<const char*>(labels.data()),
             static_cast<std::streamsize>(labels.size()));
    if (!fl) throw FormatError("short write to " + labels_path.string());
}

LabeledDataset load_cifar10(const std::vector<std::filesystem::path>& batch_paths) {
    constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
    if (batch_paths.empty()) throw FormatError("no CIFAR-10 batch files given");

    std::size_t total = 0;
    std::vector<std::vector<unsigned char>> raw;
    raw.reserve(batch_paths.size());
    for (const auto& path : batch_paths) {
        auto bytes = read_all_bytes(path);
        if (bytes.empty() || bytes.size() % kRecord != 0) {
            throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) +
                              " is not a positive multiple of the " + std::to_string(kRecord) +
                              "-byte record");
        }
        total += bytes.size() / kRecord;
        raw.push_back(std::move(bytes));
    }

    LabeledDataset ds;
    ds.images = Tensor({total, 3, 32, 32});
    ds.labels.reserve(total);
    double* out = ds.images.data();
    std::size_t sample = 0;
    for (std::size_t b = 0; b < raw.size(); ++b) {
        const auto& bytes = raw[b];
        for (std::size_t rec = 0; rec * kRecord < bytes.size(); ++rec, ++sample) {
            const unsigned char* src = bytes.data() + rec * kRecord;
            if (src[0] > 9) {
                throw FormatError(batch_paths[b].string() + ": label " +
                                  std::to_string(src[0]) + " out of range at byte " +
                                  std::to_string(rec * kRecord));
            }
            ds.labels.push_back(src[0]);
            double* dst = out + sample * 3 * 32 * 32;
            for (std::size_t i = 0; i < 3 * 32 * 32; ++i) {
                dst[i] = static_cast<double>(src[1 + i]) / 255.0;
            }
        }
    }
    return ds;
}

void write_cifar10_batch(const std::filesystem::path& path, const LabeledDataset& ds) {
    if (ds.images.rank() != 4 || ds.images.extent(1) != 3 || ds.images.extent(2) != 32 ||
        ds.images.extent(3) != 32) {
        throw ShapeError("CIFAR-10 output expects images shaped [N,3,32,32]");
    }
    const std::size_t n = ds.images.extent(0);
    if (ds.labels.size() != n) {
        throw ShapeError("CIFAR-10 output: " + std::to_string(ds.labels.size()) +
                         " labels for " + std::to_string(n) + " images");
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string() + " for writing");
    std::vector<unsigned char> record(1 + 3 * 32 * 32);
    for (std::size_t i = 0; i < n; ++i) {
        if (ds.labels[i] < 0 || ds.labels[i] > 9) {
            throw RangeError("CIFAR-10 labels must lie in [0,9], sample " + std::to_string(i) +
                             " has " + std::to_string(ds.labels[i]));
        }
        record[0] = static_cast<unsigned char>(ds.labels[i]);
        const double* src = ds.images.data() + i * 3 * 32 * 32;
        for (std::size_t j = 0; j < 3 * 32 * 32; ++j) record[1 + j] = quantize_unit(src[j]);
        f.write(reinterpret_cast<const char*>(record.data()),
                static_cast<std::streamsize>(record.size()));
    }
    if (!f) throw FormatError("short write to " + path.string());
}

Tensor bilinear_subsample(const Tensor& x, std::size_t factor) {
    require_chw(x, "bilinear_subsample");
    if (factor == 0) throw RangeError("subsample factor must be >= 1");
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (h % factor != 0 || w % factor != 0) {
        throw ShapeError("bilinear_subsample: extents " + std::to_string(h) + "x" +
                         std::to_string(w) + " not divisible by factor " +
                         std::to_string(factor));
    }
    const std::size_t oh = h / factor, ow = w / factor;
    Tensor out({c, oh, ow});

    auto clamp_idx = [](long long v, std::size_t n) {
        if (v < 0) return std::size_t{0};
        if (v >= static_cast<long long>(n)) return n - 1;
        return static_cast<std::size_t>(v);
    };

    const double f = static_cast<double>(factor);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* plane = x.data() + ch * h * w;
        double* oplane = out.data() + ch * oh * ow;
        for (std::size_t p = 0; p < oh; ++p) {
            const double sr = (static_cast<double>(p) + 0.5) * f - 0.5;
            const double fr = std::floor(sr);
            const double ar = sr - fr;
            const std::size_t r0 = clamp_idx(static_cast<long long>(fr), h);
            const std::size_t r1 = clamp_idx(static_cast<long long>(fr) + 1, h);
            for (std::size_t q = 0; q < ow; ++q) {
                const double sc = (static_cast<double>(q) + 0.5) * f - 0.5;
                const double fc = std::floor(sc);
                const double ac = sc - fc;
                const std::size_t c0 = clamp_idx(static_cast<long long>(fc), w);
                const std::size_t c1 = clamp_idx(static_cast<long long>(fc) + 1, w);
                oplane[p * ow + q] = (1.0 - ar) * ((1.0 - ac) * plane[r0 * w + c0] +
                                                   ac * plane[r0 * w + c1]) +
                                     ar * ((1.0 - ac) * plane[r1 * w + c0] +
                                           ac * plane[r1 * w + c1]);
            }
        }
    }
    return out;
}

Tensor flip_horizontal(const Tensor& x) {
    require_chw(x, "flip_horizontal");
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    Tensor out({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t r = 0; r < h; ++r) {
            const double* src = x.data() + (ch * h + r) * w;
            double* dst = out.data() + (ch * h + r) * w;
            for (std::size_t q = 0; q < w; ++q) dst[q] = src[w - 1 - q];
        }
    }
    return out;
}

Tensor translate_image(const Tensor& x, long long d_rows, long long d_cols) {
    require_chw(x, "translate_image");
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    Tensor out({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t r = 0; r < h; ++r) {
            const long long sr = static_cast<long long>(r) - d_rows;
            if (sr < 0 || sr >= static_cast<long long>(h)) continue;
            const double* src = x.data() + (ch * h + static_cast<std::size_t>(sr)) * w;
            double* dst = out.data() + (ch * h + r) * w;
            for (std::size_t q = 0; q < w; ++q) {
                const long long sc = static_cast<long long>(q) - d_cols;
                if (sc >= 0 && sc < static_cast<long long>(w)) {
                    dst[q] = src[static_cast<std::size_t>(sc)];
                }
            }
        }
    }
    return out;
}

Tensor augment(Rng& rng, const Tensor& x) {
    require_chw(x, "augment");
    const bool flip = rng.next_unit() < 0.5;
    const long long d_rows = static_cast<long long>(rng.below(9)) - 4;
    const long long d_cols = static_cast<long long>(rng.below(9)) - 4;
    if (flip) {
        return translate_image(flip_horizontal(x), d_rows, d_cols);
    }
    return translate_image(x, d_rows, d_cols);
}

LabeledDataset gen_gratings_dataset(const Rng& rng, std::size_t n, std::size_t size,
                                    Split split) {
    if (n == 0) throw SizeError("dataset size must be >= 1");
    if (size == 0) throw SizeError("image size must be >= 1");
    LabeledDataset ds;
    ds.split = split;
    ds.images = Tensor({n, 3, size, size});
    ds.labels.resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 10);
        ds.labels[i] = label;
        Rng sub = rng.substream(i);
        const double freq = sub.uniform(0.08, 0.25);
        const double jitter = sub.uniform(-0.15, 0.15);
        const double theta = (static_cast<double>(label) + jitter) * kPi / 10.0;
        const double phase = sub.uniform(0.0, 2.0 * kPi);
        const double d_theta = sub.uniform(0.0, kPi);
        const double d_freq = sub.uniform(0.08, 0.25);
        const double d_phase = sub.uniform(0.0, 2.0 * kPi);

        const double ct = std::cos(theta), st = std::sin(theta);
        const double cd = std::cos(d_theta), sd = std::sin(d_theta);
        double* base = ds.images.data() + i * 3 * size * size;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            const double channel_phase = phase + static_cast<double>(ch) * 2.0 * kPi / 3.0;
            double* plane = base + ch * size * size;
            for (std::size_t r = 0; r < size; ++r) {
                for (std::size_t q = 0; q < size; ++q) {
                    const double pr = static_cast<double>(r), pq = static_cast<double>(q);
                    const double v =
                        std::sin(2.0 * kPi * freq * (pr * ct + pq * st) + channel_phase) +
                        0.6 * std::sin(2.0 * kPi * d_freq * (pr * cd + pq * sd) + d_phase);
                    plane[r * size + q] = 0.5 + v / 3.2;
                }
            }
        }
    }
    return ds;
}

Tensor dataset_sample(const Tensor& t, std::size_t index) {
    if (t.rank() < 2) throw ShapeError("dataset_sample expects a [N,...] tensor");
    const std::size_t n = t.extent(0);
    if (index >= n) {
        throw RangeError("sample index " + std::to_string(index) + " out of range [0," +
                         std::to_string(n) + ")");
    }
    std::vector<std::size_t> shape(t.shape().begin() + 1, t.shape().end());
    Tensor out(shape);
    const std::size_t stride = t.size() / n;
    std::memcpy(out.data(), t.data() + index * stride, stride * sizeof(double));
    return out;
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> order) {
    if (t.rank() < 2) throw ShapeError("gather_rows expects a [N,...] tensor");
    if (order.empty()) throw SizeError("gather_rows needs at least one row");
    const std::size_t n = t.extent(0);
    const std::size_t stride = t.size() / n;
    std::vector<std::size_t> shape = t.shape();
    shape[0] = order.size();
    Tensor out(shape);
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (order[i] >= n) {
            throw RangeError("gather_rows index " + std::to_string(order[i]) +
                             " out of range [0," + std::to_string(n) + ")");
        }
        std::memcpy(out.data() + i * stride, t.data() + order[i] * stride,
                    stride * sizeof(double));
    }
    return out;
}

}  // namespace winconv
