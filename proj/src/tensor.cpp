#include "winconv/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace winconv {

namespace {

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace

std::size_t Tensor::checked_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) {
            throw SizeError("tensor shape " + shape_string(shape) + " has a zero extent");
        }
        if (e > std::numeric_limits<std::size_t>::max() / n) {
            throw SizeError("tensor shape " + shape_string(shape) + " overflows size_t");
        }
        n *= e;
    }
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw AxisError("axis " + std::to_string(axis) + " out of range for rank " +
                        std::to_string(shape_.size()) + " tensor");
    }
    return shape_[axis];
}

std::size_t Tensor::offset_of(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) {
        throw ShapeError("index of rank " + std::to_string(idx.size()) +
                         " used on tensor of rank " + std::to_string(shape_.size()));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
        if (i >= shape_[axis]) {
            throw RangeError("index " + std::to_string(i) + " exceeds extent " +
                             std::to_string(shape_[axis]) + " on axis " + std::to_string(axis));
        }
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

double Tensor::at(std::initializer_list<std::size_t> idx) const { return data_[offset_of(idx)]; }
double& Tensor::at(std::initializer_list<std::size_t> idx) { return data_[offset_of(idx)]; }

std::size_t flat_index(const std::vector<std::size_t>& shape, std::span<const std::size_t> idx) {
    if (idx.size() != shape.size()) {
        throw ShapeError("index rank " + std::to_string(idx.size()) + " vs shape rank " +
                         std::to_string(shape.size()));
    }
    std::size_t off = 0;
    for (std::size_t a = 0; a < shape.size(); ++a) {
        if (idx[a] >= shape[a]) {
            throw RangeError("index " + std::to_string(idx[a]) + " exceeds extent " +
                             std::to_string(shape[a]) + " on axis " + std::to_string(a));
        }
        off = off * shape[a] + idx[a];
    }
    return off;
}

std::vector<std::size_t> unflatten_index(const std::vector<std::size_t>& shape, std::size_t flat) {
    std::vector<std::size_t> idx(shape.size());
    for (std::size_t a = shape.size(); a-- > 0;) {
        idx[a] = flat % shape[a];
        flat /= shape[a];
    }
    if (flat != 0) {
        throw RangeError("flat index out of range for shape " + shape_string(shape));
    }
    return idx;
}

Tensor elementwise(const Tensor& a, const Tensor& b, BinaryOp op) {
    if (!a.same_shape(b)) {
        throw ShapeError("elementwise operands differ in shape: " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
    }
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::size_t n = a.size();
    switch (op) {
        case BinaryOp::add:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
            break;
        case BinaryOp::sub:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
            break;
        case BinaryOp::mul:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
            break;
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryOp::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryOp::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryOp::mul); }

Tensor reduce(const Tensor& a, ReduceOp op, std::span<const std::size_t> axes) {
    const auto& shape = a.shape();
    std::vector<bool> reduced(shape.size(), false);
    for (std::size_t ax : axes) {
        if (ax >= shape.size()) {
            throw AxisError("reduce axis " + std::to_string(ax) + " out of range for rank " +
                            std::to_string(shape.size()));
        }
        if (reduced[ax]) {
            throw AxisError("reduce axis " + std::to_string(ax) + " named twice");
        }
        reduced[ax] = true;
    }

    std::vector<std::size_t> out_shape;
    std::size_t group = 1;  // elements folded into each output slot
    for (std::size_t a2 = 0; a2 < shape.size(); ++a2) {
        if (reduced[a2]) {
            group *= shape[a2];
        } else {
            out_shape.push_back(shape[a2]);
        }
    }
    if (group == 0) {
        // Unreachable while construction bans zero extents; kept defensive.
        throw UndefinedError("reduction over an empty extent");
    }

    Tensor out(out_shape, op == ReduceOp::max ? -std::numeric_limits<double>::infinity() : 0.0);

    // Walk the input in ascending flat order, maintaining the output offset
    // incrementally. This fixes the accumulation order regardless of which
    // axes are reduced.
    const std::size_t rank = shape.size();
    std::vector<std::size_t> idx(rank, 0);
    std::vector<std::size_t> out_stride(rank, 0);
    {
        std::size_t stride = 1;
        for (std::size_t a2 = rank; a2-- > 0;) {
            if (!reduced[a2]) {
                out_stride[a2] = stride;
                stride *= shape[a2];
            }
        }
    }
    const double* pa = a.data();
    double* po = out.data();
    std::size_t out_off = 0;
    for (std::size_t flat = 0; flat < a.size(); ++flat) {
        if (op == ReduceOp::max) {
            if (pa[flat] > po[out_off]) po[out_off] = pa[flat];
        } else {
            po[out_off] += pa[flat];
        }
        // increment multi-index
        for (std::size_t a2 = rank; a2-- > 0;) {
            idx[a2]++;
            out_off += out_stride[a2];
            if (idx[a2] < shape[a2]) break;
            idx[a2] = 0;
            out_off -= out_stride[a2] * shape[a2];
        }
    }
    if (op == ReduceOp::mean) {
        const double inv = 1.0 / static_cast<double>(group);
        for (std::size_t i = 0; i < out.size(); ++i) po[i] *= inv;
    }
    return out;
}

double reduce_sum(const Tensor& a) {
    double s = 0.0;
    const double* p = a.data();
    for (std::size_t i = 0; i < a.size(); ++i) s += p[i];
    return s;
}

double reduce_max(const Tensor& a) {
    double m = -std::numeric_limits<double>::infinity();
    const double* p = a.data();
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, p[i]);
    return m;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& s) {
    s += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t s = seed;
    bool all_zero = true;
    for (auto& w : state_) {
        w = splitmix64(s);
        all_zero = all_zero && w == 0;
    }
    if (all_zero) state_[0] = 1;  // xoshiro forbids the all-zero state
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = std::rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = std::rotl(state_[3], 45);
    ++draws_;
    return result;
}

double Rng::next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
        throw RangeError("uniform bounds must be finite with lo < hi");
    }
    double v = lo + next_unit() * (hi - lo);
    if (v >= hi) v = std::nextafter(hi, lo);  // guard the rounded-up edge case
    return v;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw RangeError("below(0) is undefined");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

Rng Rng::substream(std::uint64_t stream_id) const {
    std::uint64_t s = seed_ ^ (0xD1B54A32D192ED03ULL * (stream_id + 1));
    return Rng(splitmix64(s));
}

Tensor rng_uniform(Rng& rng, double lo, double hi, std::vector<std::size_t> shape) {
    Tensor out(std::move(shape));
    double* p = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) p[i] = rng.uniform(lo, hi);
    return out;
}

}  // namespace winconv
