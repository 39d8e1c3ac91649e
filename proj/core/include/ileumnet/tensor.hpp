#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ileumnet/errors.hpp"

namespace ileumnet {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape);

// Derives an independent stream seed from a base seed and a list of tags
// (epoch, sample index, ...). Used wherever work may run out of order.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

/// Dense row-major array. Feature maps are laid out [C, D, H, W]; convolution
/// kernels [O, I, kD, kH, kW].
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(numel(shape_), fill) {
    validate_extents();
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_extents();
    require(data_.size() == numel(shape_), ErrorCode::kShapeMismatch,
            "data length " + std::to_string(data_.size()) + " does not match shape " +
                to_string(shape_));
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-4 [C, D, H, W] accessors.
  T& at(std::size_t c, std::size_t z, std::size_t y, std::size_t x) noexcept {
    return data_[((c * shape_[1] + z) * shape_[2] + y) * shape_[3] + x];
  }
  const T& at(std::size_t c, std::size_t z, std::size_t y, std::size_t x) const noexcept {
    return data_[((c * shape_[1] + z) * shape_[2] + y) * shape_[3] + x];
  }

  Tensor reshaped(Shape shape) const& {
    Tensor out(std::move(shape), data_);
    return out;
  }
  Tensor reshaped(Shape shape) && {
    Tensor out(std::move(shape), std::move(data_));
    return out;
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  void add_(const Tensor& other) {
    require(other.shape_ == shape_, ErrorCode::kShapeMismatch,
            "add_: " + to_string(shape_) + " vs " + to_string(other.shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  }

  void scale_(T factor) {
    for (auto& v : data_) v *= factor;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_extents() const {
    for (auto e : shape_) {
      require(e > 0, ErrorCode::kShapeMismatch, "tensor extents must be positive: " + to_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

}  // namespace ileumnet
