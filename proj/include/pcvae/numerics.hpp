#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcvae/errors.hpp"

namespace pcvae {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of doubles.
///
/// Extents are always positive and the element count always matches the
/// shape. A default-constructed tensor is empty (rank 0, no data) and is
/// only used as a placeholder.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_, 0.0); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-D access; the tensor must have rank 2.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Same data, new shape with the same element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

  // Bitwise equality of shape and contents.
  bool identical(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

void require_finite(const Tensor& t, const char* what);

/// Fixed left-to-right sum; the order never depends on threading.
double ordered_sum(std::span<const double> values);

/// FNV-1a over the raw little-endian bytes of shape and data.
std::uint64_t content_hash(const Tensor& t);

/// Deterministic generator: xoshiro256** seeded through splitmix64, with
/// Gaussian variates from the Box-Muller transform (both variates of each
/// pair are used, cosine branch first).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double gaussian();
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  /// Independent child generator for `key`; does not advance this one.
  Rng child(std::uint64_t key) const { return Rng(derive_seed(seed_, key)); }

  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key);

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// rows x cols matrix of i.i.d. standard normal draws, filled row by row.
Tensor gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng);
Tensor gaussian_vector(std::size_t n, Rng& rng);

}  // namespace pcvae
