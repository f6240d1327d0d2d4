#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "winconv/errors.hpp"

namespace winconv {

// Dense row-major tensor of doubles. The public operations are value
// semantic: they take tensors by const reference and return fresh ones.
// Code that exclusively owns a tensor (initializers, gradient buffers)
// may write through data() while building it.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

    // Total element count implied by a shape; throws SizeError on zero
    // extents or overflow. A rank-0 shape is a scalar (size 1).
    static std::size_t checked_size(const std::vector<std::size_t>& shape);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double operator[](std::size_t flat) const { return data_[flat]; }
    double& operator[](std::size_t flat) { return data_[flat]; }

    // Multi-index access with bounds checking, e.g. t.at({i, j, k}).
    double at(std::initializer_list<std::size_t> idx) const;
    double& at(std::initializer_list<std::size_t> idx);

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::size_t offset_of(std::initializer_list<std::size_t> idx) const;

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// Row-major flattening of a multi-index, and its inverse.
std::size_t flat_index(const std::vector<std::size_t>& shape,
                       std::span<const std::size_t> idx);
std::vector<std::size_t> unflatten_index(const std::vector<std::size_t>& shape,
                                         std::size_t flat);

enum class BinaryOp { add, sub, mul };

// Elementwise combination of two tensors of identical shape.
Tensor elementwise(const Tensor& a, const Tensor& b, BinaryOp op);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

enum class ReduceOp { sum, mean, max };

// Reduce over the given axes (each named once). Reduced axes are removed
// from the shape; reducing every axis yields a rank-0 scalar. Accumulation
// visits elements in ascending flat-index order, so a full sum reduction is
// bit-identical to a sequential left fold over the flat data.
Tensor reduce(const Tensor& a, ReduceOp op, std::span<const std::size_t> axes);

// Convenience scalar forms.
double reduce_sum(const Tensor& a);
double reduce_max(const Tensor& a);

// Deterministic PRNG: xoshiro256++ state seeded with splitmix64, uniform
// doubles formed from the top 53 bits ((x >> 11) * 2^-53). The generator,
// the seeding procedure, and the substream derivation are part of the
// artifact contract: identical seeds must reproduce identical streams, and
// re-implementations elsewhere need the exact recipe spelled out here.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double next_unit();

    // Uniform in [lo, hi); requires lo < hi, both finite.
    double uniform(double lo, double hi);

    // Uniform integer in [0, n) via the 128-bit multiply-shift reduction
    // of next_u64(); requires n >= 1.
    std::uint64_t below(std::uint64_t n);

    // Independent child stream: a fresh generator seeded with
    // splitmix64(seed ^ (0xD1B54A32D192ED03 * (stream_id + 1))).
    // Children depend only on the parent's seed, not on how many draws
    // the parent has made.
    Rng substream(std::uint64_t stream_id) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t draws() const { return draws_; }

private:
    std::uint64_t seed_ = 0;
    std::array<std::uint64_t, 4> state_{};
    std::uint64_t draws_ = 0;
};

// Tensor filled with rng.uniform(lo, hi) samples in flat (row-major) order.
Tensor rng_uniform(Rng& rng, double lo, double hi, std::vector<std::size_t> shape);

}  // namespace winconv
