#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace lbt {

/// Dense row-major tensor of 64-bit reals. Invariant: numel(shape) == data.size().
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);
  static Tensor scalar(double value) { return from({1}, {value}); }

  std::size_t numel() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  // 2-D access, row-major.
  double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double l2_norm() const;
  bool all_finite() const;
  /// Throws lbt::Error mentioning `what` if any entry is NaN/Inf.
  void require_finite(const std::string& what) const;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

}  // namespace lbt
