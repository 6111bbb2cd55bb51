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

#ifndef NERFMAE_DIFFCORE_OPS_ELEMENTWISE_HPP_
#define NERFMAE_DIFFCORE_OPS_ELEMENTWISE_HPP_

#include <algorithm>
#include <cmath>
#include <numbers>
#include <type_traits>

#include "nerfmae/diffcore/autograd.hpp"

namespace nerfmae::diff {

namespace detail {

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <typename T>
T stable_softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// Elementwise map y = f(x) with dy/dx = df(x, y).
template <typename T, typename F, typename DF>
Var<T> unary(const Var<T>& x, F f, DF df) {
  NdArray<T> out(x.shape());
  const auto& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result<T>(std::move(out), {x}, [df](Node<T>& self) {
    const auto& xin = self.inputs[0]->value;
    auto& gx = input_grad(self, 0);
    for (std::size_t i = 0; i < xin.size(); ++i) gx[i] += self.grad[i] * df(xin[i], self.value[i]);
  });
}

}  // namespace detail

/// a + b, where b's shape equals a's or is a trailing suffix of it (broadcast
/// over leading axes).
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (!detail::is_suffix(bv.shape(), av.shape())) {
    throw DimensionError("add: cannot broadcast " + shape_str(bv.shape()) + " onto " +
                         shape_str(av.shape()));
  }
  const std::size_t inner = bv.size();
  const std::size_t outer = av.size() / inner;
  NdArray<T> out = av;
  for (std::size_t o = 0; o < outer; ++o) {
    T* row = out.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) row[i] += bv[i];
  }
  return make_result<T>(std::move(out), {a, b}, [inner, outer](Node<T>& self) {
    if (wants_grad(self, 0)) {
      auto& ga = input_grad(self, 0);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    }
    if (wants_grad(self, 1)) {
      auto& gb = input_grad(self, 1);
      for (std::size_t o = 0; o < outer; ++o) {
        const T* row = self.grad.data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) gb[i] += row[i];
      }
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) throw DimensionError("sub: shape mismatch");
  NdArray<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (wants_grad(self, 0)) {
      auto& g = input_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(self, 1)) {
      auto& g = input_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) throw DimensionError("mul: shape mismatch");
  NdArray<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (wants_grad(self, 0)) {
      auto& g = input_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants_grad(self, 1)) {
      auto& g = input_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, std::type_identity_t<T> factor) {
  return detail::unary(x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, std::type_identity_t<T> c) {
  return detail::unary(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return detail::unary(x, [](T v) { return v > T(0) ? v : T(0); },
                       [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

/// Exact GELU: x * Phi(x).
template <typename T>
Var<T> gelu(const Var<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return detail::unary(
      x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        return cdf + v * inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return detail::unary(x, [](T v) { return detail::stable_sigmoid(v); },
                       [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> softplus(const Var<T>& x) {
  return detail::unary(x, [](T v) { return detail::stable_softplus(v); },
                       [](T v, T) { return detail::stable_sigmoid(v); });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  return detail::unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return detail::unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T s = 0;
  for (T v : x.value().values()) s += v;
  return make_result<T>(NdArray<T>({1}, s), {x}, [](Node<T>& self) {
    auto& g = input_grad(self, 0);
    const T gs = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gs;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

/// Copy with a new shape of the same element count.
template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  NdArray<T> out = x.value().reshaped(std::move(shape));
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& g = input_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

}  // namespace nerfmae::diff

#endif  // NERFMAE_DIFFCORE_OPS_ELEMENTWISE_HPP_
