// SPDX-License-Identifier: Apache-2.0
#include "vspp/tensor.hpp"

#include <algorithm>

#include "vspp/error.hpp"

namespace vspp {

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape != expected)
    throw Error(Errc::ShapeMismatch,
                std::string(what) + ": expected " + shape_string(expected) + ", got " + shape_string(t.shape));
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw Error(Errc::ShapeMismatch, "stack: no tensors");
  Shape shape = items.front().shape;
  shape.insert(shape.begin(), static_cast<std::int64_t>(items.size()));
  Tensor out(shape);
  const std::size_t n = items.front().size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    require_shape(items[i], items.front().shape, "stack");
    std::copy(items[i].data.begin(), items[i].data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return out;
}

Tensor slice_row(const Tensor& t, std::int64_t i) {
  if (t.rank() < 1 || i < 0 || i >= t.dim(0)) throw Error(Errc::OutOfRange, "slice_row: index out of range");
  Shape shape(t.shape.begin() + 1, t.shape.end());
  Tensor out(shape);
  const std::size_t n = out.size();
  std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(i) * n), n, out.data.begin());
  return out;
}

}  // namespace vspp
