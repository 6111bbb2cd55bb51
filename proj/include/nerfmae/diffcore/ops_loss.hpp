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

#ifndef NERFMAE_DIFFCORE_OPS_LOSS_HPP_
#define NERFMAE_DIFFCORE_OPS_LOSS_HPP_

#include <cstdint>
#include <type_traits>

#include "nerfmae/diffcore/ops_elementwise.hpp"

namespace nerfmae::diff {

template <typename T>
using ConstArrayPtr = std::shared_ptr<const NdArray<std::type_identity_t<T>>>;
template <typename T>
using ConstVecPtr = std::shared_ptr<const std::vector<std::type_identity_t<T>>>;

/// sum_i w_i (p_i - t_i)^2 with constant target and weights.
template <typename T>
Var<T> weighted_sq_error(const Var<T>& pred, ConstArrayPtr<T> target,
                         ConstArrayPtr<T> weights) {
  if (pred.shape() != target->shape() || pred.shape() != weights->shape()) {
    throw DimensionError("weighted_sq_error: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target->shape()));
  }
  const auto& p = pred.value();
  T s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T w = (*weights)[i];
    if (w != T(0)) {
      const T d = p[i] - (*target)[i];
      s += w * d * d;
    }
  }
  return make_result<T>(NdArray<T>({1}, s), {pred}, [target, weights](Node<T>& self) {
    const auto& pv = self.inputs[0]->value;
    auto& g = input_grad(self, 0);
    const T gs = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T w = (*weights)[i];
      if (w != T(0)) g[i] += gs * T(2) * w * (pv[i] - (*target)[i]);
    }
  });
}

/// sum_i w_i * (-log softmax(logits_i)[label_i]) over rows of logits [N, C].
/// Rows with label < 0 or zero weight are skipped.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, std::shared_ptr<const std::vector<std::int32_t>> labels,
                             ConstVecPtr<T> weights) {
  if (logits.value().rank() != 2 || labels->size() != logits.shape()[0] || weights->size() != labels->size()) {
    throw DimensionError("softmax_cross_entropy: expected logits [N,C] with N labels and weights");
  }
  const std::size_t n = logits.shape()[0];
  const std::size_t c = logits.shape()[1];
  const T* x = logits.value().data();
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t y = (*labels)[i];
    const T w = (*weights)[i];
    if (y < 0 || w == T(0)) continue;
    if (static_cast<std::size_t>(y) >= c) throw DomainError("softmax_cross_entropy: label out of range");
    const T* row = x + i * c;
    T mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T s = 0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
    total += w * (mx + std::log(s) - row[y]);
  }
  return make_result<T>(NdArray<T>({1}, total), {logits}, [labels, weights, n, c](Node<T>& self) {
    const T* xv = self.inputs[0]->value.data();
    T* g = input_grad(self, 0).data();
    const T gs = self.grad[0];
    for (std::size_t i = 0; i < n; ++i) {
      const std::int32_t y = (*labels)[i];
      const T w = (*weights)[i];
      if (y < 0 || w == T(0)) continue;
      const T* row = xv + i * c;
      T mx = row[0];
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
      T s = 0;
      for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
      for (std::size_t j = 0; j < c; ++j) {
        const T p = std::exp(row[j] - mx) / s;
        g[i * c + j] += gs * w * (p - (static_cast<std::int32_t>(j) == y ? T(1) : T(0)));
      }
    }
  });
}

/// Sigmoid focal loss summed over elements with 0/1 targets. alpha < 0
/// disables the class-balancing factor; gamma = 0 then gives plain BCE.
template <typename T>
Var<T> sigmoid_focal_loss(const Var<T>& logits, ConstArrayPtr<T> targets, std::type_identity_t<T> alpha,
                          std::type_identity_t<T> gamma,
                          ConstArrayPtr<T> weights = nullptr) {
  if (logits.shape() != targets->shape() || (weights && weights->shape() != logits.shape())) {
    throw DimensionError("sigmoid_focal_loss: shape mismatch");
  }
  auto term = [alpha, gamma](T x, T t, T* grad) {
    const bool pos = t > T(0.5);
    const T a = alpha < T(0) ? T(1) : (pos ? alpha : T(1) - alpha);
    const T p = detail::stable_sigmoid(x);
    const T q = T(1) - p;
    if (pos) {
      const T logp = -detail::stable_softplus(-x);
      const T qg = gamma == T(0) ? T(1) : std::pow(q, gamma);
      if (grad) *grad = a * (gamma * qg * p * logp - qg * q);
      return -a * qg * logp;
    }
    const T logq = -detail::stable_softplus(x);
    const T pg = gamma == T(0) ? T(1) : std::pow(p, gamma);
    if (grad) *grad = a * (-gamma * pg * q * logq + pg * p);
    return -a * pg * logq;
  };
  const auto& xv = logits.value();
  T total = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T w = weights ? (*weights)[i] : T(1);
    if (w != T(0)) total += w * term(xv[i], (*targets)[i], nullptr);
  }
  return make_result<T>(NdArray<T>({1}, total), {logits}, [term, targets, weights](Node<T>& self) {
    const auto& x = self.inputs[0]->value;
    auto& g = input_grad(self, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T w = weights ? (*weights)[i] : T(1);
      if (w == T(0)) continue;
      T d = 0;
      term(x[i], (*targets)[i], &d);
      g[i] += self.grad[0] * w * d;
    }
  });
}

/// sum_i w_i * (softplus(x_i) - t_i x_i): binary cross-entropy on logits.
template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, ConstArrayPtr<T> targets,
                       ConstArrayPtr<T> weights = nullptr) {
  if (logits.shape() != targets->shape() || (weights && weights->shape() != logits.shape())) {
    throw DimensionError("bce_with_logits: shape mismatch");
  }
  const auto& xv = logits.value();
  T total = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T w = weights ? (*weights)[i] : T(1);
    total += w * (detail::stable_softplus(xv[i]) - (*targets)[i] * xv[i]);
  }
  return make_result<T>(NdArray<T>({1}, total), {logits}, [targets, weights](Node<T>& self) {
    const auto& x = self.inputs[0]->value;
    auto& g = input_grad(self, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T w = weights ? (*weights)[i] : T(1);
      g[i] += self.grad[0] * w * (detail::stable_sigmoid(x[i]) - (*targets)[i]);
    }
  });
}

/// sum_i w_i (1 - IoU(pred_i, target_i)) for boxes given as six non-negative
/// face distances (x0,y0,z0,x1,y1,z1) from a shared anchor point.
template <typename T>
Var<T> offset_iou_loss(const Var<T>& pred, ConstArrayPtr<T> target,
                       ConstVecPtr<T> weights) {
  if (pred.value().rank() != 2 || pred.shape()[1] != 6 || target->shape() != pred.shape() ||
      weights->size() != pred.shape()[0]) {
    throw DimensionError("offset_iou_loss: expected [N,6] predictions, targets and N weights");
  }
  const std::size_t n = pred.shape()[0];
  // Returns IoU, and when `grad` is set, dIoU/dpred for the six entries.
  auto iou = [](const T* p, const T* t, T* grad) {
    T ext_p[3], ext_t[3], ext_i[3];
    for (int a = 0; a < 3; ++a) {
      ext_p[a] = p[a] + p[a + 3];
      ext_t[a] = t[a] + t[a + 3];
      ext_i[a] = std::min(p[a], t[a]) + std::min(p[a + 3], t[a + 3]);
    }
    const T vp = ext_p[0] * ext_p[1] * ext_p[2];
    const T vt = ext_t[0] * ext_t[1] * ext_t[2];
    const T inter = ext_i[0] * ext_i[1] * ext_i[2];
    const T uni = vp + vt - inter;
    const T value = inter / uni;
    if (grad) {
      for (int a = 0; a < 3; ++a) {
        const T other_i = ext_i[(a + 1) % 3] * ext_i[(a + 2) % 3];
        const T other_p = ext_p[(a + 1) % 3] * ext_p[(a + 2) % 3];
        for (int side = 0; side < 2; ++side) {
          const int j = a + 3 * side;
          const T di = p[j] < t[j] ? other_i : T(0);
          const T dv = other_p;
          grad[j] = (di * (uni + inter) - inter * dv) / (uni * uni);
        }
      }
    }
    return value;
  };
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T w = (*weights)[i];
    if (w != T(0)) total += w * (T(1) - iou(pred.value().data() + 6 * i, target->data() + 6 * i, nullptr));
  }
  return make_result<T>(NdArray<T>({1}, total), {pred}, [iou, target, weights, n](Node<T>& self) {
    T* g = input_grad(self, 0).data();
    T d[6];
    for (std::size_t i = 0; i < n; ++i) {
      const T w = (*weights)[i];
      if (w == T(0)) continue;
      iou(self.inputs[0]->value.data() + 6 * i, target->data() + 6 * i, d);
      for (int j = 0; j < 6; ++j) g[6 * i + j] -= self.grad[0] * w * d[j];
    }
  });
}

}  // namespace nerfmae::diff

#endif  // NERFMAE_DIFFCORE_OPS_LOSS_HPP_
