#include "winconv/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "raw tensor files are little-endian; add byte swapping for this platform");

namespace winconv {

void save_tensor_raw(const Tensor& t, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw FormatError("cannot open " + path.string() + " for writing");
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!f) throw FormatError("short write to " + path.string());
    }
    nlohmann::json sidecar;
    sidecar["shape"] = t.shape();
    sidecar["dtype"] = "f64";
    std::ofstream s(path.string() + ".json");
    if (!s) throw FormatError("cannot open " + path.string() + ".json for writing");
    s << sidecar.dump() << "\n";
}

Tensor load_tensor_raw(const std::filesystem::path& path) {
    const std::filesystem::path sidecar_path = path.string() + ".json";
    nlohmann::json sidecar;
    {
        std::ifstream s(sidecar_path);
        if (!s) throw FormatError("missing tensor sidecar " + sidecar_path.string());
        try {
            s >> sidecar;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("bad tensor sidecar " + sidecar_path.string() + ": " + e.what());
        }
    }
    if (!sidecar.contains("dtype") || sidecar["dtype"] != "f64") {
        throw FormatError("tensor sidecar " + sidecar_path.string() + " is not dtype f64");
    }
    if (!sidecar.contains("shape") || !sidecar["shape"].is_array()) {
        throw FormatError("tensor sidecar " + sidecar_path.string() + " has no shape");
    }
    std::vector<std::size_t> shape;
    for (const auto& e : sidecar["shape"]) {
        if (!e.is_number_unsigned()) {
            throw FormatError("tensor sidecar " + sidecar_path.string() +
                              " has a non-integer extent");
        }
        shape.push_back(e.get<std::size_t>());
    }

    Tensor t(shape);
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("missing tensor file " + path.string());
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (static_cast<std::size_t>(f.gcount()) != t.size() * sizeof(double)) {
        throw FormatError("tensor file " + path.string() + " truncated: expected " +
                          std::to_string(t.size() * sizeof(double)) + " bytes, got " +
                          std::to_string(f.gcount()));
    }
    char extra;
    if (f.read(&extra, 1)) {
        throw FormatError("tensor file " + path.string() + " has trailing bytes beyond " +
                          std::to_string(t.size() * sizeof(double)));
    }
    return t;
}

void write_pgm(const std::filesystem::path& path, const Tensor& grid, PgmScale scale) {
    if (grid.rank() != 2) throw ShapeError("PGM output expects a rank-2 grid");
    const std::size_t rows = grid.extent(0), cols = grid.extent(1);

    double lo = grid[0], hi = grid[0];
    for (std::size_t i = 0; i < grid.size(); ++i) {
        lo = std::min(lo, grid[i]);
        hi = std::max(hi, grid[i]);
    }

    std::vector<unsigned char> bytes(grid.size());
    auto to_byte = [](double unit) {
        const double v = std::clamp(unit, 0.0, 1.0);
        return static_cast<unsigned char>(std::lround(v * 255.0));
    };
    for (std::size_t i = 0; i < grid.size(); ++i) {
        switch (scale) {
            case PgmScale::fixed01:
                bytes[i] = to_byte(grid[i]);
                break;
            case PgmScale::minmax:
                bytes[i] = (hi > lo) ? to_byte((grid[i] - lo) / (hi - lo))
                                     : static_cast<unsigned char>(128);
                break;
            case PgmScale::log_db80: {
                if (hi <= 0.0 || grid[i] <= 0.0) {
                    bytes[i] = 0;
                } else {
                    const double db = std::max(-80.0, 20.0 * std::log10(grid[i] / hi));
                    bytes[i] = to_byte((db + 80.0) / 80.0);
                }
                break;
            }
        }
    }

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string() + " for writing");
    f << "P5\n" << cols << " " << rows << "\n255\n";
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("short write to " + path.string());
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw FormatError("cannot open " + path.string() + " for writing");
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) f << ",";
        f << header[i];
    }
    f << "\n";
    for (const auto& row : rows) {
        if (row.size() != header.size()) {
            throw ShapeError("CSV row width " + std::to_string(row.size()) +
                             " does not match header width " + std::to_string(header.size()));
        }
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) f << ",";
            f << format_double(row[i]);
        }
        f << "\n";
    }
    if (!f) throw FormatError("short write to " + path.string());
}

}  // namespace winconv
