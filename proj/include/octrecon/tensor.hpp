#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "octrecon/errors.hpp"

namespace octrecon::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

/// Dense row-major array. Network activations use [batch, channels, height, width].
template <typename T>
struct BasicTensor {
  Shape shape;
  std::vector<T> data;

  BasicTensor() = default;
  explicit BasicTensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(element_count(shape), fill) {
    for (auto d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_string(shape));
    }
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  // NCHW accessors; only valid on rank-4 tensors.
  std::size_t n() const { return shape[0]; }
  std::size_t c() const { return shape[1]; }
  std::size_t h() const { return shape[2]; }
  std::size_t w() const { return shape[3]; }
  T& at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) {
    return data[((b * shape[1] + ch) * shape[2] + y) * shape[3] + x];
  }
  const T& at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const {
    return data[((b * shape[1] + ch) * shape[2] + y) * shape[3] + x];
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Trainable parameter with its gradient and Adam moment state.
template <typename T>
struct Param {
  BasicTensor<T> value;
  BasicTensor<T> grad;
  BasicTensor<T> adam_m;
  BasicTensor<T> adam_v;
  long step_count = 0;

  Param() = default;
  explicit Param(BasicTensor<T> v)
      : value(std::move(v)), grad(value.shape), adam_m(value.shape), adam_v(value.shape) {}

  void zero_grad() { grad.fill(T(0)); }
};

/// Throws NumericError naming `what` when any element is NaN or infinite.
template <typename T>
void require_finite(const BasicTensor<T>& t, const std::string& what);

}  // namespace octrecon::nn
