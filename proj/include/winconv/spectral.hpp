#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "winconv/tensor.hpp"

namespace winconv {

// Magnitudes of the unnormalized forward DFT of a 2-D real grid, in standard
// bin order (DC at [0,0], no center shift).
struct Spectrum2D {
    Tensor mag;  // [P, P]
};

// Unnormalized 1-D forward DFT: X[u] = sum_n x[n] * exp(-2*pi*i*u*n / N).
// Radix-2 when the length is a power of two, direct O(n^2) otherwise.
std::vector<std::complex<double>> dft1(std::span<const std::complex<double>> x);

// Real input zero-embedded to n_fft samples, then |DFT|.
std::vector<double> dft1_mag(std::span<const double> x, std::size_t n_fft);

// Row-column 2-D DFT magnitude of a square grid [P, P].
Spectrum2D dft2_mag(const Tensor& x);

// Row-major flattening of the magnitude grid, and its inverse.
Tensor flatten_spectrum(const Spectrum2D& s);
Spectrum2D unflatten_spectrum(const Tensor& flat, std::size_t p);

// Spectrum of a small kernel zero-embedded top-left into a grid x grid
// plane. grid must cover the kernel.
Spectrum2D kernel_frequency_response(const Tensor& kernel, std::size_t grid = 64);

struct LeakageReport {
    double peak_mainlobe = 0.0;             // global peak magnitude
    double peak_sidelobe = 0.0;             // largest off-lobe local max
    double sidelobe_db = 0.0;               // 20*log10(sidelobe / mainlobe)
    double out_of_band_energy_fraction = 0.0;  // sum mag^2 outside / total
};

// Main lobe: the 4-connected region (torus topology) around the global peak
// where mag >= peak * 10^(threshold_db / 20). The sidelobe level is taken
// over local maxima outside that region; a spectrum with no cell outside
// (or no off-lobe local max) reports sidelobe_db = -inf. threshold_db must
// be negative; an all-zero spectrum has no defined lobes.
LeakageReport leakage_metrics(const Spectrum2D& s, double threshold_db = -6.0);

// Peak sidelobe of a 1-D magnitude spectrum relative to its global peak, in
// dB. The main lobe extends from the peak to the first local minimum on
// each side (with wraparound); the level is the largest local max beyond
// it, -inf when the spectrum has no sidelobe structure.
double peak_sidelobe_db_1d(std::span<const double> mag);

}  // namespace winconv
