// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "resprune/error.hpp"

namespace resprune {

using Shape = std::vector<std::size_t>;

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                "tensors hold float or double");
  return std::is_same_v<T, float> ? DType::kFloat32 : DType::kFloat64;
}

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor. The buffer length always equals the product of the
/// extents (a rank-0 tensor holds one scalar).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor: buffer of " + std::to_string(data_.size()) +
                       " elements does not match shape " + shape_str(shape_));
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }
  static constexpr DType dtype() { return dtype_of<T>(); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T item() const {
    if (data_.size() != 1) throw ShapeError("tensor: item() on shape " + shape_str(shape_));
    return data_[0];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw ShapeError("reshape: " + shape_str(shape_) + " -> " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Trainable value plus its accumulated gradient. `velocity` is the momentum
/// buffer owned by sgd_step.
template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> velocity;
  bool trainable = true;

  Parameter() = default;
  explicit Parameter(Tensor<T> v) : value(std::move(v)), grad(value.shape()) {}

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    else grad.fill(T{0});
  }
};

// Tensor wire format: dtype tag (u8), rank (u8), extents (u32 LE each), then
// the row-major payload in little-endian IEEE-754.
template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t);

template <typename T>
Tensor<T> read_tensor(std::istream& in);

DType peek_dtype(std::istream& in);

}  // namespace resprune
