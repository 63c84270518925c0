// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxfuse/errors.hpp"

namespace voxfuse {

/// Dense row-major tensor of rank 1..3. `grad`, when present, has the same
/// number of elements as `values`.
template <typename T>
struct BasicTensor {
  std::vector<int> dims;
  std::vector<T> values;
  std::optional<std::vector<T>> grad;

  BasicTensor() = default;

  explicit BasicTensor(std::vector<int> shape) : dims(std::move(shape)) {
    validate_dims();
    values.assign(element_count(dims), T(0));
  }

  BasicTensor(std::vector<int> shape, std::vector<T> data)
      : dims(std::move(shape)), values(std::move(data)) {
    validate_dims();
    if (values.size() != element_count(dims)) {
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill dims " +
                       dims_string(dims));
    }
  }

  static BasicTensor matrix(int rows, int cols, std::initializer_list<T> data) {
    return BasicTensor({rows, cols}, std::vector<T>(data));
  }

  [[nodiscard]] std::size_t size() const { return values.size(); }
  [[nodiscard]] int rank() const { return static_cast<int>(dims.size()); }
  [[nodiscard]] int rows() const { return dims.empty() ? 0 : dims.front(); }
  [[nodiscard]] int cols() const { return dims.empty() ? 0 : dims.back(); }

  T& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols() + c]; }
  const T& at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols() + c]; }

  std::span<T> row(int r) {
    return {values.data() + static_cast<std::size_t>(r) * cols(), static_cast<std::size_t>(cols())};
  }
  std::span<const T> row(int r) const {
    return {values.data() + static_cast<std::size_t>(r) * cols(), static_cast<std::size_t>(cols())};
  }

  /// Rows [begin, end) of a rank-2 tensor.
  [[nodiscard]] BasicTensor slice_rows(int begin, int end) const {
    if (rank() != 2 || begin < 0 || end > rows() || begin > end) {
      throw IndexError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                       ") out of range for " + dims_string(dims));
    }
    const auto c = static_cast<std::size_t>(cols());
    return BasicTensor({end - begin, cols()},
                       std::vector<T>(values.begin() + begin * c, values.begin() + end * c));
  }

  template <typename U>
  [[nodiscard]] BasicTensor<U> cast() const {
    BasicTensor<U> out;
    out.dims = dims;
    out.values.assign(values.begin(), values.end());
    return out;
  }

  static std::size_t element_count(const std::vector<int>& d) {
    return std::accumulate(d.begin(), d.end(), std::size_t{1},
                           [](std::size_t acc, int x) { return acc * static_cast<std::size_t>(x); });
  }

  static std::string dims_string(const std::vector<int>& d) {
    std::string s = "[";
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(d[i]);
    }
    return s + "]";
  }

 private:
  void validate_dims() const {
    if (dims.empty() || dims.size() > 3) {
      throw ShapeError("tensor: rank must be 1..3, got " + std::to_string(dims.size()));
    }
    for (int d : dims) {
      if (d <= 0) throw ShapeError("tensor: non-positive dim in " + dims_string(dims));
    }
  }
};

using Tensor = BasicTensor<float>;

/// A model weight plus its leaf marker. Frozen parameters never receive a
/// gradient buffer.
template <typename T>
struct Param {
  BasicTensor<T> value;
  bool trainable = true;

  template <typename U>
  [[nodiscard]] Param<U> cast() const {
    return Param<U>{value.template cast<U>(), trainable};
  }
};

template <typename T>
using ParamVisitor = std::function<void(const std::string& name, Param<T>& param)>;

}  // namespace voxfuse
