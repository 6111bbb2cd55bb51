/*
 * Copyright 2026 The nerfmae Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef NERFMAE_DIFFCORE_NDARRAY_HPP_
#define NERFMAE_DIFFCORE_NDARRAY_HPP_

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "nerfmae/errors.hpp"

namespace nerfmae::diff {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major array, last axis fastest.
template <typename T>
class NdArray {
 public:
  using value_type = T;

  NdArray() = default;

  explicit NdArray(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    check_extents();
    values_.assign(shape_numel(shape_), fill);
  }

  NdArray(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_extents();
    if (shape_numel(shape_) != values_.size()) {
      throw DimensionError("NdArray: shape " + shape_str(shape_) + " holds " +
                           std::to_string(shape_numel(shape_)) + " values, got " +
                           std::to_string(values_.size()));
    }
  }

  /// Checked construction: rejects NaN/Inf values.
  static NdArray checked(Shape shape, std::vector<T> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(static_cast<double>(values[i]))) {
        throw DomainError("NdArray: non-finite value at flat index " + std::to_string(i));
      }
    }
    return NdArray(std::move(shape), std::move(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::vector<T>& storage() { return values_; }
  const std::vector<T>& storage() const { return values_; }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::size_t offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) throw DimensionError("NdArray: index rank mismatch");
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) off = off * shape_[axis++] + i;
    return off;
  }
  T& at(std::initializer_list<std::size_t> index) { return values_[offset(index)]; }
  const T& at(std::initializer_list<std::size_t> index) const { return values_[offset(index)]; }

  NdArray reshaped(Shape shape) const {
    if (shape_numel(shape) != values_.size()) {
      throw DimensionError("reshape: " + shape_str(shape_) + " -> " + shape_str(shape));
    }
    return NdArray(std::move(shape), values_);
  }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  bool all_finite() const {
    for (T v : values_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <typename U>
  NdArray<U> cast() const {
    std::vector<U> out(values_.begin(), values_.end());
    return NdArray<U>(shape_, std::move(out));
  }

  friend bool operator==(const NdArray& a, const NdArray& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  void check_extents() const {
    for (std::size_t e : shape_) {
      if (e == 0) throw DimensionError("NdArray: zero extent in shape " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<T> values_;
};

template <typename T>
T dot(const NdArray<T>& a, const NdArray<T>& b) {
  if (a.size() != b.size()) throw DimensionError("dot: size mismatch");
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace nerfmae::diff

#endif  // NERFMAE_DIFFCORE_NDARRAY_HPP_
