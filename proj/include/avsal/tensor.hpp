// Copyright 2026 The avsal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace avsal {

using Shape = std::vector<int64_t>;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles. Value semantics; copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  size_t rank() const noexcept { return shape_.size(); }
  int64_t dim(size_t axis) const { return shape_.at(axis); }
  int64_t numel() const noexcept { return static_cast<int64_t>(data_.size()); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  /// Multi-index element access, bounds-checked. Intended for tests and
  /// non-hot code.
  double& at(std::initializer_list<int64_t> index);
  double at(std::initializer_list<int64_t> index) const;

  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(double v);
  double sum() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  int64_t offset(std::initializer_list<int64_t> index) const;

  Shape shape_;
  std::vector<double> data_;
};

}  // namespace avsal
