// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace vspp {

using Scalar = double;
using Shape = std::vector<std::int64_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array. Clips are (C, T, H, W); batches prepend B.
struct Tensor {
  Shape shape;
  std::vector<Scalar> data;

  Tensor() = default;
  explicit Tensor(Shape s, Scalar fill = 0) : shape(std::move(s)), data(count(shape), fill) {}

  static std::size_t count(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           [](std::size_t a, std::int64_t b) { return a * static_cast<std::size_t>(b); });
  }

  std::size_t size() const noexcept { return data.size(); }
  std::int64_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const noexcept { return shape.size(); }
  bool empty() const noexcept { return data.empty(); }

  Scalar* ptr() noexcept { return data.data(); }
  const Scalar* ptr() const noexcept { return data.data(); }
  std::span<Scalar> span() noexcept { return data; }
  std::span<const Scalar> span() const noexcept { return data; }

  Scalar& operator[](std::size_t i) { return data[i]; }
  Scalar operator[](std::size_t i) const { return data[i]; }

  void fill(Scalar v) { std::fill(data.begin(), data.end(), v); }

  bool operator==(const Tensor&) const = default;
};

/// Throws ShapeMismatch unless `t.shape == expected`.
void require_shape(const Tensor& t, const Shape& expected, const char* what);

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

/// Row `i` of a (B, ...) tensor as a standalone tensor.
Tensor slice_row(const Tensor& t, std::int64_t i);

}  // namespace vspp
