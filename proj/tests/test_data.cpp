#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "doctest.h"
#include "winconv/data.hpp"
#include "winconv/spectral.hpp"

using namespace winconv;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() /
                   ("winconv_data_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Tensor channel_plane(const Tensor& img) {
    REQUIRE(img.rank() == 3);
    REQUIRE(img.extent(0) == 1);
    Tensor plane({img.extent(1), img.extent(2)});
    std::memcpy(plane.data(), img.data(), plane.size() * sizeof(double));
    return plane;
}

// Strict 4-neighbor local maxima (torus) above half the global peak.
std::size_t dominant_peak_count(const Tensor& mag) {
    const std::size_t p = mag.extent(0);
    double peak = 0.0;
    for (std::size_t i = 0; i < mag.size(); ++i) peak = std::max(peak, mag[i]);
    std::size_t count = 0;
    for (std::size_t u = 0; u < p; ++u) {
        for (std::size_t v = 0; v < p; ++v) {
            const double m = mag.at({u, v});
            if (m <= 0.5 * peak) continue;
            const double up = mag.at({(u + p - 1) % p, v});
            const double dn = mag.at({(u + 1) % p, v});
            const double lf = mag.at({u, (v + p - 1) % p});
            const double rt = mag.at({u, (v + 1) % p});
            if (m > up && m > dn && m > lf && m > rt) ++count;
        }
    }
    return count;
}

}  // namespace

TEST_CASE("zero-frequency waves render a constant image") {
    SineImageSpec spec;
    spec.size = 8;
    std::vector<SineWave> waves = {{0.0, 0.3, 0.7}, {0.0, 1.1, 2.0}, {0.0, 2.2, 4.5}};
    Tensor img = render_sine_image(spec, waves);
    const double expected = std::sin(0.7) + std::sin(2.0) + std::sin(4.5);
    for (std::size_t i = 0; i < img.size(); ++i) {
        CHECK(img[i] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("sine images stay within [-3, 3]") {
    SineImageSpec spec;
    spec.size = 16;
    Rng rng(5);
    for (int trial = 0; trial < 8; ++trial) {
        SineImage s = gen_sine_image(rng, spec);
        REQUIRE(s.image.shape() == std::vector<std::size_t>{1, 16, 16});
        REQUIRE(s.waves.size() == 3);
        for (std::size_t i = 0; i < s.image.size(); ++i) {
            CHECK(s.image[i] >= -3.0);
            CHECK(s.image[i] <= 3.0);
        }
        for (const SineWave& w : s.waves) {
            CHECK(w.frequency >= 0.0);
            CHECK(w.frequency < 0.5);
            CHECK(w.orientation >= 0.0);
            CHECK(w.orientation < std::numbers::pi);
            CHECK(w.phase >= 0.0);
            CHECK(w.phase < 2.0 * std::numbers::pi);
        }
    }
}

TEST_CASE("on-bin axis-aligned wave peaks at its frequency bins") {
    const std::size_t p = 32;
    SineImageSpec spec;
    spec.size = p;
    Tensor img = render_sine_image(spec, {{4.0 / p, 0.0, 0.0}});
    Spectrum2D s = dft2_mag(channel_plane(img));

    const double bin_energy = double(p) * double(p) / 2.0;
    CHECK(s.mag.at({4, 0}) == doctest::Approx(bin_energy).epsilon(1e-9));
    CHECK(s.mag.at({p - 4, 0}) == doctest::Approx(bin_energy).epsilon(1e-9));
    for (std::size_t u = 0; u < p; ++u) {
        for (std::size_t v = 0; v < p; ++v) {
            if ((u == 4 || u == p - 4) && v == 0) continue;
            CHECK(s.mag.at({u, v}) < 1e-8 * bin_energy);
        }
    }
}

TEST_CASE("three distinct on-bin waves give exactly six dominant peaks") {
    const std::size_t p = 16;
    SineImageSpec spec;
    spec.size = p;
    Tensor img = render_sine_image(
        spec, {{2.0 / p, 0.0, 0.4}, {4.0 / p, 0.0, 1.3}, {7.0 / p, 0.0, 2.9}});
    Spectrum2D s = dft2_mag(channel_plane(img));
    CHECK(dominant_peak_count(s.mag) == 6);
}

TEST_CASE("random sine spectra have at most six dominant peaks") {
    SineImageSpec spec;
    spec.size = 16;
    Rng rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        SineImage s = gen_sine_image(rng, spec);
        Spectrum2D spect = dft2_mag(channel_plane(s.image));
        CHECK(dominant_peak_count(spect.mag) <= 6);
    }
}

TEST_CASE("regression dataset pairs each image with its flattened spectrum") {
    SineImageSpec spec;
    spec.size = 16;
    FftDataset ds = gen_fft_dataset(Rng(1234), 4, 3, spec);

    REQUIRE(ds.train.images.shape() == std::vector<std::size_t>{4, 1, 16, 16});
    REQUIRE(ds.train.targets.shape() == std::vector<std::size_t>{4, 256});
    REQUIRE(ds.val.images.shape() == std::vector<std::size_t>{3, 1, 16, 16});
    CHECK(ds.train.split == Split::train);
    CHECK(ds.val.split == Split::validation);
    CHECK(ds.train.labels.empty());

    for (std::size_t i = 0; i < 4; ++i) {
        Tensor img = dataset_sample(ds.train.images, i);
        Tensor expected = flatten_spectrum(dft2_mag(channel_plane(img)));
        Tensor actual = dataset_sample(ds.train.targets, i);
        CHECK(bit_equal(expected, actual));
    }
}

TEST_CASE("dataset sample i reproduces substream i exactly") {
    SineImageSpec spec;
    spec.size = 8;
    const Rng base(555);
    FftDataset ds = gen_fft_dataset(base, 3, 2, spec);

    for (std::size_t i = 0; i < 3; ++i) {
        Rng sub = base.substream(i);
        SineImage s = gen_sine_image(sub, spec);
        CHECK(bit_equal(s.image, dataset_sample(ds.train.images, i)));
    }
    for (std::size_t j = 0; j < 2; ++j) {
        Rng sub = base.substream(3 + j);
        SineImage s = gen_sine_image(sub, spec);
        CHECK(bit_equal(s.image, dataset_sample(ds.val.images, j)));
    }
}

TEST_CASE("dataset generation is bit-deterministic under seed") {
    SineImageSpec spec;
    spec.size = 8;
    FftDataset a = gen_fft_dataset(Rng(42), 3, 2, spec);
    FftDataset b = gen_fft_dataset(Rng(42), 3, 2, spec);
    FftDataset c = gen_fft_dataset(Rng(43), 3, 2, spec);
    CHECK(bit_equal(a.train.images, b.train.images));
    CHECK(bit_equal(a.train.targets, b.train.targets));
    CHECK(bit_equal(a.val.images, b.val.images));
    CHECK_FALSE(bit_equal(a.train.images, c.train.images));
}

TEST_CASE("size 32 gives target vectors of length 1024") {
    SineImageSpec spec;
    spec.size = 32;
    FftDataset ds = gen_fft_dataset(Rng(7), 1, 1, spec);
    CHECK(ds.train.targets.shape() == std::vector<std::size_t>{1, 1024});
}

TEST_CASE("targets keep the conjugate symmetry of real-input spectra") {
    SineImageSpec spec;
    spec.size = 16;
    FftDataset ds = gen_fft_dataset(Rng(21), 2, 1, spec);
    for (std::size_t i = 0; i < 2; ++i) {
        Spectrum2D s = unflatten_spectrum(dataset_sample(ds.train.targets, i), 16);
        for (std::size_t u = 0; u < 16; ++u) {
            for (std::size_t v = 0; v < 16; ++v) {
                const double a = s.mag.at({u, v});
                const double b = s.mag.at({(16 - u) % 16, (16 - v) % 16});
                CHECK(a == doctest::Approx(b).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("idx round trip preserves quantized pixels and labels") {
    const fs::path dir = temp_dir();
    LabeledDataset ds;
    ds.images = Tensor({3, 1, 5, 4});
    Rng rng(11);
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        ds.images[i] = static_cast<double>(rng.below(256)) / 255.0;
    }
    ds.labels = {0, 7, 9};
    write_idx(dir / "imgs.idx", dir / "lbls.idx", ds);

    LabeledDataset back = load_idx(dir / "imgs.idx", dir / "lbls.idx");
    CHECK(bit_equal(back.images, ds.images));
    CHECK(back.labels == ds.labels);
    for (std::size_t i = 0; i < back.images.size(); ++i) {
        CHECK(back.images[i] >= 0.0);
        CHECK(back.images[i] <= 1.0);
    }
}

TEST_CASE("idx loader rejects malformed files") {
    const fs::path dir = temp_dir();
    LabeledDataset ds;
    ds.images = Tensor({2, 1, 3, 3}, 0.5);
    ds.labels = {1, 2};
    write_idx(dir / "imgs.idx", dir / "lbls.idx", ds);

    auto corrupt_byte = [&](const fs::path& path, std::size_t offset, unsigned char value) {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(static_cast<std::streamoff>(offset));
        f.write(reinterpret_cast<const char*>(&value), 1);
    };

    SUBCASE("bad image magic") {
        corrupt_byte(dir / "imgs.idx", 3, 0x05);
        CHECK_THROWS_AS(load_idx(dir / "imgs.idx", dir / "lbls.idx"), FormatError);
    }
    SUBCASE("bad label magic") {
        corrupt_byte(dir / "lbls.idx", 3, 0x05);
        CHECK_THROWS_AS(load_idx(dir / "imgs.idx", dir / "lbls.idx"), FormatError);
    }
    SUBCASE("truncated image payload") {
        fs::resize_file(dir / "imgs.idx", 16 + 17);
        CHECK_THROWS_AS(load_idx(dir / "imgs.idx", dir / "lbls.idx"), FormatError);
    }
    SUBCASE("count mismatch") {
        corrupt_byte(dir / "lbls.idx", 7, 9);
        CHECK_THROWS_AS(load_idx(dir / "imgs.idx", dir / "lbls.idx"), FormatError);
    }
    SUBCASE("label out of range") {
        corrupt_byte(dir / "lbls.idx", 8, 10);
        CHECK_THROWS_AS(load_idx(dir / "imgs.idx", dir / "lbls.idx"), FormatError);
    }
}

TEST_CASE("write_idx validates shapes and label range") {
    const fs::path dir = temp_dir();
    LabeledDataset bad_shape;
    bad_shape.images = Tensor({2, 3, 4, 4}, 0.1);
    bad_shape.labels = {0, 1};
    CHECK_THROWS_AS(write_idx(dir / "i", dir / "l", bad_shape), ShapeError);

    LabeledDataset bad_label;
    bad_label.images = Tensor({1, 1, 2, 2}, 0.1);
    bad_label.labels = {12};
    CHECK_THROWS_AS(write_idx(dir / "i", dir / "l", bad_label), RangeError);
}

TEST_CASE("cifar batch round trip preserves pixels and concatenates batches") {
    const fs::path dir = temp_dir();
    LabeledDataset a;
    a.images = Tensor({2, 3, 32, 32});
    Rng rng(3);
    for (std::size_t i = 0; i < a.images.size(); ++i) {
        a.images[i] = static_cast<double>(rng.below(256)) / 255.0;
    }
    a.labels = {4, 9};
    write_cifar10_batch(dir / "b1.bin", a);

    LabeledDataset b;
    b.images = Tensor({1, 3, 32, 32}, 200.0 / 255.0);
    b.labels = {0};
    write_cifar10_batch(dir / "b2.bin", b);

    LabeledDataset all = load_cifar10({dir / "b1.bin", dir / "b2.bin"});
    REQUIRE(all.images.shape() == std::vector<std::size_t>{3, 3, 32, 32});
    CHECK(all.labels == std::vector<int>{4, 9, 0});
    Tensor first = dataset_sample(all.images, 0);
    Tensor orig = dataset_sample(a.images, 0);
    CHECK(bit_equal(first, orig));
    CHECK(dataset_sample(all.images, 2)[0] == doctest::Approx(200.0 / 255.0).epsilon(1e-15));
}

TEST_CASE("cifar loader rejects bad record sizes and labels") {
    const fs::path dir = temp_dir();
    {
        std::ofstream f(dir / "short.bin", std::ios::binary);
        std::vector<char> junk(3072, 0);
        f.write(junk.data(), static_cast<std::streamsize>(junk.size()));
    }
    CHECK_THROWS_AS(load_cifar10({dir / "short.bin"}), FormatError);

    {
        std::ofstream f(dir / "badlabel.bin", std::ios::binary);
        std::vector<char> rec(3073, 0);
        rec[0] = 11;
        f.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    }
    CHECK_THROWS_AS(load_cifar10({dir / "badlabel.bin"}), FormatError);
    CHECK_THROWS_AS(load_cifar10({}), FormatError);
}

TEST_CASE("bilinear subsample of a constant image is the same constant") {
    Tensor x({2, 6, 8}, 3.75);
    Tensor y = bilinear_subsample(x);
    REQUIRE(y.shape() == std::vector<std::size_t>{2, 3, 4});
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 3.75);
}

TEST_CASE("bilinear subsample maps 28x28 to 14x14") {
    Tensor x({1, 28, 28}, 0.5);
    CHECK(bilinear_subsample(x).shape() == std::vector<std::size_t>{1, 14, 14});
}

TEST_CASE("bilinear subsample reproduces linear ramps at the sample points") {
    const std::size_t h = 10, w = 12;
    Tensor x({1, h, w});
    const double a = 0.7, b = -0.3, d = 2.0;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            x.at({0, r, c}) = a * double(r) + b * double(c) + d;
        }
    }
    Tensor y = bilinear_subsample(x);
    for (std::size_t p = 0; p < h / 2; ++p) {
        for (std::size_t q = 0; q < w / 2; ++q) {
            const double sr = (double(p) + 0.5) * 2.0 - 0.5;
            const double sc = (double(q) + 0.5) * 2.0 - 0.5;
            CHECK(y.at({0, p, q}) == doctest::Approx(a * sr + b * sc + d).epsilon(1e-12));
        }
    }
}

TEST_CASE("bilinear subsample rejects odd extents") {
    CHECK_THROWS_AS(bilinear_subsample(Tensor({1, 7, 8})), ShapeError);
    CHECK_THROWS_AS(bilinear_subsample(Tensor({1, 8, 7})), ShapeError);
}

TEST_CASE("double horizontal flip is the identity") {
    Rng rng(8);
    Tensor x = rng_uniform(rng, 0.0, 1.0, {3, 5, 7});
    CHECK(bit_equal(flip_horizontal(flip_horizontal(x)), x));
    Tensor f = flip_horizontal(x);
    CHECK(f.at({1, 2, 0}) == x.at({1, 2, 6}));
}

TEST_CASE("translate by zero is the identity and opposite shifts cancel inside") {
    Rng rng(9);
    Tensor x = rng_uniform(rng, 0.0, 1.0, {1, 8, 8});
    CHECK(bit_equal(translate_image(x, 0, 0), x));

    Tensor t = translate_image(translate_image(x, 2, 0), -2, 0);
    for (std::size_t r = 0; r < 8; ++r) {
        for (std::size_t c = 0; c < 8; ++c) {
            const double expected = (r < 6) ? x.at({0, r, c}) : 0.0;
            CHECK(t.at({0, r, c}) == expected);
        }
    }
}

TEST_CASE("translation shifts content and zero-fills vacated pixels") {
    Tensor x({1, 4, 4});
    x.at({0, 1, 1}) = 5.0;
    Tensor t = translate_image(x, 2, 1);
    CHECK(t.at({0, 3, 2}) == 5.0);
    double total = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) total += t[i];
    CHECK(total == 5.0);
}

TEST_CASE("augment consumes one coin and two offsets in a fixed order") {
    Rng rng_img(31);
    Tensor x = rng_uniform(rng_img, 0.0, 1.0, {3, 10, 10});

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng a(seed);
        Tensor got = augment(a, x);
        CHECK(a.draws() == 3);

        Rng m(seed);
        const bool flip = m.next_unit() < 0.5;
        const long long dr = static_cast<long long>(m.below(9)) - 4;
        const long long dc = static_cast<long long>(m.below(9)) - 4;
        CHECK(dr >= -4);
        CHECK(dr <= 4);
        Tensor manual = translate_image(flip ? flip_horizontal(x) : x, dr, dc);
        CHECK(bit_equal(got, manual));
    }
}

TEST_CASE("augment with a no-op draw sequence returns the image unchanged") {
    Rng rng_img(32);
    Tensor x = rng_uniform(rng_img, 0.0, 1.0, {1, 6, 6});

    // Find a seed whose first three draws are (no flip, offset 0, offset 0);
    // the search is deterministic, so the found seed is stable.
    bool found = false;
    for (std::uint64_t seed = 0; seed < 200000 && !found; ++seed) {
        Rng probe(seed);
        if (probe.next_unit() < 0.5) continue;
        if (probe.below(9) != 4) continue;
        if (probe.below(9) != 4) continue;
        Rng a(seed);
        CHECK(bit_equal(augment(a, x), x));
        found = true;
    }
    CHECK(found);
}

TEST_CASE("gratings dataset cycles labels and stays in [0,1]") {
    LabeledDataset ds = gen_gratings_dataset(Rng(17), 23, 16);
    REQUIRE(ds.images.shape() == std::vector<std::size_t>{23, 3, 16, 16});
    REQUIRE(ds.labels.size() == 23);
    for (std::size_t i = 0; i < 23; ++i) CHECK(ds.labels[i] == static_cast<int>(i % 10));
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        CHECK(ds.images[i] >= 0.0);
        CHECK(ds.images[i] <= 1.0);
    }

    LabeledDataset again = gen_gratings_dataset(Rng(17), 23, 16);
    CHECK(bit_equal(ds.images, again.images));
    LabeledDataset other = gen_gratings_dataset(Rng(18), 23, 16);
    CHECK_FALSE(bit_equal(ds.images, other.images));
}

TEST_CASE("gratings classes differ by orientation") {
    // Same substream position but different labels must give visibly
    // different images; two samples of the same class from different
    // substreams share orientation structure. Cheap proxy: class 0 and
    // class 5 of the same dataset correlate less with each other than a
    // sample does with itself.
    LabeledDataset ds = gen_gratings_dataset(Rng(4), 20, 16);
    Tensor c0 = dataset_sample(ds.images, 0);
    Tensor c5 = dataset_sample(ds.images, 5);
    CHECK_FALSE(bit_equal(c0, c5));
}

TEST_CASE("dataset_sample and gather_rows slice the leading axis") {
    Tensor t({3, 2, 2});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
    Tensor s1 = dataset_sample(t, 1);
    REQUIRE(s1.shape() == std::vector<std::size_t>{2, 2});
    CHECK(s1[0] == 4.0);
    CHECK(s1[3] == 7.0);
    CHECK_THROWS_AS(dataset_sample(t, 3), RangeError);

    const std::size_t order[] = {2, 0, 2};
    Tensor g = gather_rows(t, order);
    REQUIRE(g.shape() == std::vector<std::size_t>{3, 2, 2});
    CHECK(g[0] == 8.0);
    CHECK(g.at({1, 0, 0}) == 0.0);
    CHECK(g.at({2, 1, 1}) == 11.0);
    const std::size_t bad[] = {5};
    CHECK_THROWS_AS(gather_rows(t, bad), RangeError);
}
