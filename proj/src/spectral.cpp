#include "winconv/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace winconv {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, twiddles computed per index so rounding
// does not accumulate across a stage.
void fft_pow2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t j = 0; j < half; ++j) {
                const double ang =
                    -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(len);
                const std::complex<double> w(std::cos(ang), std::sin(ang));
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + half] * w;
                a[i + j] = u + v;
                a[i + j + half] = u - v;
            }
        }
    }
}

std::vector<std::complex<double>> dft_direct(std::span<const std::complex<double>> x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t u = 0; u < n; ++u) {
        std::complex<double> acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(u) *
                               static_cast<double>(t) / static_cast<double>(n);
            acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[u] = acc;
    }
    return out;
}

}  // namespace

std::vector<std::complex<double>> dft1(std::span<const std::complex<double>> x) {
    if (x.empty()) throw SizeError("DFT of an empty sequence");
    if (is_pow2(x.size())) {
        std::vector<std::complex<double>> a(x.begin(), x.end());
        fft_pow2(a);
        return a;
    }
    return dft_direct(x);
}

std::vector<double> dft1_mag(std::span<const double> x, std::size_t n_fft) {
    if (n_fft < x.size()) throw SizeError("n_fft smaller than the input length");
    std::vector<std::complex<double>> buf(n_fft, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) buf[i] = x[i];
    const auto spec = dft1(buf);
    std::vector<double> mag(n_fft);
    for (std::size_t i = 0; i < n_fft; ++i) mag[i] = std::abs(spec[i]);
    return mag;
}

Spectrum2D dft2_mag(const Tensor& x) {
    if (x.rank() != 2 || x.extent(0) != x.extent(1)) {
        throw ShapeError("dft2_mag expects a square rank-2 grid");
    }
    const std::size_t p = x.extent(0);
    std::vector<std::complex<double>> grid(p * p);
    for (std::size_t i = 0; i < p * p; ++i) grid[i] = x[i];

    std::vector<std::complex<double>> line(p);
    // transform along the second axis
    for (std::size_t r = 0; r < p; ++r) {
        std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(r * p), p, line.begin());
        auto out = dft1(line);
        std::copy_n(out.begin(), p, grid.begin() + static_cast<std::ptrdiff_t>(r * p));
    }
    // transform along the first axis
    for (std::size_t c = 0; c < p; ++c) {
        for (std::size_t r = 0; r < p; ++r) line[r] = grid[r * p + c];
        auto out = dft1(line);
        for (std::size_t r = 0; r < p; ++r) grid[r * p + c] = out[r];
    }

    Spectrum2D s{Tensor({p, p})};
    double* m = s.mag.data();
    for (std::size_t i = 0; i < p * p; ++i) m[i] = std::abs(grid[i]);
    return s;
}

Tensor flatten_spectrum(const Spectrum2D& s) {
    Tensor flat({s.mag.size()});
    std::copy_n(s.mag.data(), s.mag.size(), flat.data());
    return flat;
}

Spectrum2D unflatten_spectrum(const Tensor& flat, std::size_t p) {
    if (flat.rank() != 1 || flat.size() != p * p) {
        throw ShapeError("flat spectrum length does not match " + std::to_string(p) + "^2");
    }
    Spectrum2D s{Tensor({p, p})};
    std::copy_n(flat.data(), flat.size(), s.mag.data());
    return s;
}

Spectrum2D kernel_frequency_response(const Tensor& kernel, std::size_t grid) {
    if (kernel.rank() != 2) throw ShapeError("kernel must be a rank-2 slice");
    if (grid < kernel.extent(0) || grid < kernel.extent(1)) {
        throw SizeError("frequency grid " + std::to_string(grid) +
                        " cannot hold a " + std::to_string(kernel.extent(0)) + "x" +
                        std::to_string(kernel.extent(1)) + " kernel");
    }
    Tensor plane({grid, grid}, 0.0);
    for (std::size_t i = 0; i < kernel.extent(0); ++i) {
        for (std::size_t j = 0; j < kernel.extent(1); ++j) {
            plane.at({i, j}) = kernel.at({i, j});
        }
    }
    return dft2_mag(plane);
}

LeakageReport leakage_metrics(const Spectrum2D& s, double threshold_db) {
    if (!(threshold_db < 0.0)) {
        throw RangeError("main-lobe threshold must be negative (dB)");
    }
    const Tensor& mag = s.mag;
    const std::size_t rows = mag.extent(0);
    const std::size_t cols = mag.extent(1);
    const double* m = mag.data();

    std::size_t peak_idx = 0;
    double peak = 0.0;
    double energy = 0.0;
    for (std::size_t i = 0; i < mag.size(); ++i) {
        energy += m[i] * m[i];
        if (m[i] > peak) {
            peak = m[i];
            peak_idx = i;
        }
    }
    if (peak == 0.0) throw UndefinedError("all-zero spectrum has no lobes");

    // Flood-fill the main lobe on the torus.
    const double cutoff = peak * std::pow(10.0, threshold_db / 20.0);
    std::vector<char> in_lobe(mag.size(), 0);
    std::vector<std::size_t> stack{peak_idx};
    in_lobe[peak_idx] = 1;
    auto push = [&](std::size_t r, std::size_t c) {
        const std::size_t i = r * cols + c;
        if (!in_lobe[i] && m[i] >= cutoff) {
            in_lobe[i] = 1;
            stack.push_back(i);
        }
    };
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        const std::size_t r = i / cols;
        const std::size_t c = i % cols;
        push((r + 1) % rows, c);
        push((r + rows - 1) % rows, c);
        push(r, (c + 1) % cols);
        push(r, (c + cols - 1) % cols);
    }

    double out_energy = 0.0;
    double sidelobe = 0.0;
    for (std::size_t i = 0; i < mag.size(); ++i) {
        if (in_lobe[i]) continue;
        out_energy += m[i] * m[i];
        const std::size_t r = i / cols;
        const std::size_t c = i % cols;
        const bool local_max = m[i] >= m[((r + 1) % rows) * cols + c] &&
                               m[i] >= m[((r + rows - 1) % rows) * cols + c] &&
                               m[i] >= m[r * cols + (c + 1) % cols] &&
                               m[i] >= m[r * cols + (c + cols - 1) % cols];
        if (local_max) sidelobe = std::max(sidelobe, m[i]);
    }

    LeakageReport rep;
    rep.peak_mainlobe = peak;
    rep.peak_sidelobe = sidelobe;
    rep.sidelobe_db = sidelobe > 0.0 ? 20.0 * std::log10(sidelobe / peak)
                                     : -std::numeric_limits<double>::infinity();
    rep.out_of_band_energy_fraction = energy > 0.0 ? out_energy / energy : 0.0;
    return rep;
}

double peak_sidelobe_db_1d(std::span<const double> mag) {
    const std::size_t n = mag.size();
    if (n == 0) throw SizeError("empty spectrum");
    std::size_t g = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (mag[i] > mag[g]) g = i;
    }
    if (mag[g] <= 0.0) throw UndefinedError("all-zero spectrum has no lobes");

    // Walk down both skirts of the peak to the first local minimum.
    std::vector<char> lobe(n, 0);
    lobe[g] = 1;
    std::size_t i = g;
    while (true) {
        const std::size_t nxt = (i + 1) % n;
        if (nxt == g || mag[nxt] >= mag[i]) break;
        lobe[nxt] = 1;
        i = nxt;
    }
    i = g;
    while (true) {
        const std::size_t prv = (i + n - 1) % n;
        if (prv == g || mag[prv] >= mag[i]) break;
        lobe[prv] = 1;
        i = prv;
    }

    double side = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (lobe[j]) continue;
        const double l = mag[(j + n - 1) % n];
        const double r = mag[(j + 1) % n];
        if (mag[j] >= l && mag[j] >= r) side = std::max(side, mag[j]);
    }
    return side > 0.0 ? 20.0 * std::log10(side / mag[g])
                      : -std::numeric_limits<double>::infinity();
}

}  // namespace winconv
