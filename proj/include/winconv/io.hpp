#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "winconv/tensor.hpp"

namespace winconv {

// Raw tensor container: flat row-major little-endian f64 payload in `path`,
// plus a JSON sidecar at `path + ".json"` holding {"shape":[...],"dtype":"f64"}.
void save_tensor_raw(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor_raw(const std::filesystem::path& path);

enum class PgmScale {
    fixed01,   // clamp to [0,1], then linear to [0,255]
    minmax,    // linear min->0, max->255 (constant grids map to 128)
    log_db80,  // 20*log10(v/max) clipped at -80 dB, linear to [0,255]
};

// 8-bit binary PGM (P5) of a rank-2 grid.
void write_pgm(const std::filesystem::path& path, const Tensor& grid, PgmScale scale);

// Shortest round-trip decimal formatting, locale-independent.
std::string format_double(double v);

// CSV with a header row, '.' decimal separator, '\n' line endings.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

}  // namespace winconv
