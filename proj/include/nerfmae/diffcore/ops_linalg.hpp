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

#ifndef NERFMAE_DIFFCORE_OPS_LINALG_HPP_
#define NERFMAE_DIFFCORE_OPS_LINALG_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <limits>

#include "nerfmae/diffcore/ops_elementwise.hpp"

namespace nerfmae::diff {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// C(M,N) += op(A) * op(B). A is stored (M,K) or (K,M) when `ta`; B is stored
/// (K,N) or (N,K) when `tb`. All row-major and contiguous except C, which may
/// carry an outer stride `ldc`.
template <typename T>
void gemm_acc(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
              T* c, std::size_t ldc = 0) {
  using CMap = Eigen::Map<const RowMat<T>>;
  using Out = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  Out cm(c, M, N, Eigen::OuterStride<>(ldc ? static_cast<Eigen::Index>(ldc) : N));
  if (!ta && !tb) {
    cm.noalias() += CMap(a, M, K) * CMap(b, K, N);
  } else if (ta && !tb) {
    cm.noalias() += CMap(a, K, M).transpose() * CMap(b, K, N);
  } else if (!ta && tb) {
    cm.noalias() += CMap(a, M, K) * CMap(b, N, K).transpose();
  } else {
    cm.noalias() += CMap(a, K, M).transpose() * CMap(b, N, K).transpose();
  }
}

inline std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

/// out[permuted index] = in[index]; out shape[i] = in shape[perm[i]].
template <typename T>
void permute_into(const T* in, const Shape& in_shape, const std::vector<std::size_t>& perm, T* out,
                  bool accumulate) {
  const std::size_t rank = in_shape.size();
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[perm[i]];
  const auto in_strides = strides_of(in_shape);
  std::vector<std::size_t> src_stride(rank);
  for (std::size_t i = 0; i < rank; ++i) src_stride[i] = in_strides[perm[i]];
  const std::size_t total = shape_numel(in_shape);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  // Innermost axis handled in a tight loop.
  const std::size_t inner = out_shape[rank - 1];
  const std::size_t inner_stride = src_stride[rank - 1];
  for (std::size_t o = 0; o < total; o += inner) {
    if (accumulate) {
      for (std::size_t i = 0; i < inner; ++i) out[o + i] += in[src + i * inner_stride];
    } else {
      for (std::size_t i = 0; i < inner; ++i) out[o + i] = in[src + i * inner_stride];
    }
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      src += src_stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      src -= src_stride[ax] * out_shape[ax];
      idx[ax] = 0;
    }
  }
}

}  // namespace detail

/// Batched matrix product: a [B,M,K] (or [B,K,M] if trans_a) times
/// b [B,K,N] (or [B,N,K] if trans_b) -> [B,M,N].
template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool trans_a = false, bool trans_b = false) {
  if (a.value().rank() != 3 || b.value().rank() != 3 || a.shape()[0] != b.shape()[0]) {
    throw DimensionError("bmm: expected [B,*,*] operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t batch = a.shape()[0];
  const std::size_t m = trans_a ? a.shape()[2] : a.shape()[1];
  const std::size_t k = trans_a ? a.shape()[1] : a.shape()[2];
  const std::size_t kb = trans_b ? b.shape()[2] : b.shape()[1];
  const std::size_t n = trans_b ? b.shape()[1] : b.shape()[2];
  if (k != kb) throw DimensionError("bmm: inner dimension mismatch");
  NdArray<T> out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    detail::gemm_acc(trans_a, trans_b, m, n, k, a.value().data() + i * m * k,
                     b.value().data() + i * k * n, out.data() + i * m * n);
  }
  return make_result<T>(std::move(out), {a, b}, [=](Node<T>& self) {
    const T* av = self.inputs[0]->value.data();
    const T* bv = self.inputs[1]->value.data();
    const T* g = self.grad.data();
    if (wants_grad(self, 0)) {
      T* ga = input_grad(self, 0).data();
      for (std::size_t i = 0; i < batch; ++i) {
        const T* gi = g + i * m * n;
        const T* bi = bv + i * k * n;
        if (!trans_a) {
          // dA(M,K) = dC(M,N) op(B)^T
          detail::gemm_acc(false, !trans_b, m, k, n, gi, bi, ga + i * m * k);
        } else {
          // dA(K,M) = op(B)(K,N) dC^T
          detail::gemm_acc(trans_b, true, k, m, n, bi, gi, ga + i * m * k);
        }
      }
    }
    if (wants_grad(self, 1)) {
      T* gb = input_grad(self, 1).data();
      for (std::size_t i = 0; i < batch; ++i) {
        const T* gi = g + i * m * n;
        const T* ai = av + i * m * k;
        if (!trans_b) {
          // dB(K,N) = op(A)^T dC
          detail::gemm_acc(!trans_a, false, k, n, m, ai, gi, gb + i * k * n);
        } else {
          // dB(N,K) = dC^T op(A)
          detail::gemm_acc(true, trans_a, n, k, m, gi, ai, gb + i * k * n);
        }
      }
    }
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2) throw DimensionError("matmul: rank-2 only");
  auto out = bmm(reshape(a, {1, a.shape()[0], a.shape()[1]}), reshape(b, {1, b.shape()[0], b.shape()[1]}));
  return reshape(out, {a.shape()[0], b.shape()[1]});
}

/// y = x W^T + b over the last axis of x. W is [out, in]; bias may be empty.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias = Var<T>()) {
  const auto& xs = x.shape();
  const std::size_t in = xs.back();
  if (weight.value().rank() != 2 || weight.shape()[1] != in) {
    throw DimensionError("linear: weight " + shape_str(weight.shape()) + " incompatible with input " +
                         shape_str(xs));
  }
  const std::size_t out_f = weight.shape()[0];
  const std::size_t rows = x.size() / in;
  Shape out_shape = xs;
  out_shape.back() = out_f;
  NdArray<T> out(out_shape);
  detail::gemm_acc(false, true, rows, out_f, in, x.value().data(), weight.value().data(), out.data());
  const bool has_bias = bias.valid();
  if (has_bias) {
    if (bias.size() != out_f) throw DimensionError("linear: bias size mismatch");
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < out_f; ++o) out[r * out_f + o] += bias.value()[o];
    }
  }
  std::vector<Var<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(std::move(out), std::move(inputs), [=](Node<T>& self) {
    const T* g = self.grad.data();
    if (wants_grad(self, 0)) {
      detail::gemm_acc(false, false, rows, in, out_f, g, self.inputs[1]->value.data(),
                       input_grad(self, 0).data());
    }
    if (wants_grad(self, 1)) {
      detail::gemm_acc(true, false, out_f, in, rows, g, self.inputs[0]->value.data(),
                       input_grad(self, 1).data());
    }
    if (has_bias && wants_grad(self, 2)) {
      auto& gb = input_grad(self, 2);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < out_f; ++o) gb[o] += g[r * out_f + o];
      }
    }
  });
}

/// General axis permutation; out.shape[i] = x.shape[perm[i]].
template <typename T>
Var<T> permute(const Var<T>& x, std::vector<std::size_t> perm) {
  const Shape& in_shape = x.shape();
  if (perm.size() != in_shape.size()) throw DimensionError("permute: rank mismatch");
  Shape out_shape(perm.size());
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out_shape[i] = in_shape.at(perm[i]);
    inverse[perm[i]] = i;
  }
  NdArray<T> out(out_shape);
  detail::permute_into(x.value().data(), in_shape, perm, out.data(), false);
  return make_result<T>(std::move(out), {x}, [out_shape, inverse](Node<T>& self) {
    detail::permute_into(self.grad.data(), out_shape, inverse, input_grad(self, 0).data(), true);
  });
}

template <typename T>
Var<T> transpose2d(const Var<T>& x) {
  if (x.value().rank() != 2) throw DimensionError("transpose2d: rank-2 only");
  return permute(x, {1, 0});
}

/// Row gather on a [R, C] array: out[i] = x[index[i]], or zeros when the index
/// is negative. Backward scatter-adds.
template <typename T>
Var<T> gather_rows(const Var<T>& x, std::shared_ptr<const std::vector<std::int64_t>> index) {
  if (x.value().rank() != 2) throw DimensionError("gather_rows: rank-2 input required");
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  NdArray<T> out({index->size(), cols});
  for (std::size_t i = 0; i < index->size(); ++i) {
    const std::int64_t src = (*index)[i];
    if (src < 0) continue;
    if (static_cast<std::size_t>(src) >= rows) throw DimensionError("gather_rows: index out of range");
    std::copy_n(x.value().data() + src * cols, cols, out.data() + i * cols);
  }
  return make_result<T>(std::move(out), {x}, [index, cols](Node<T>& self) {
    T* gx = input_grad(self, 0).data();
    for (std::size_t i = 0; i < index->size(); ++i) {
      const std::int64_t src = (*index)[i];
      if (src < 0) continue;
      const T* g = self.grad.data() + i * cols;
      T* dst = gx + src * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += g[c];
    }
  });
}

/// Replaces rows of x [R, C] where `selected[r]` is set by `token` [C].
template <typename T>
Var<T> replace_rows(const Var<T>& x, const Var<T>& token, std::shared_ptr<const std::vector<std::uint8_t>> selected) {
  if (x.value().rank() != 2 || token.size() != x.shape()[1] || selected->size() != x.shape()[0]) {
    throw DimensionError("replace_rows: shape mismatch");
  }
  const std::size_t cols = x.shape()[1];
  NdArray<T> out = x.value();
  for (std::size_t r = 0; r < selected->size(); ++r) {
    if ((*selected)[r]) std::copy_n(token.value().data(), cols, out.data() + r * cols);
  }
  return make_result<T>(std::move(out), {x, token}, [selected, cols](Node<T>& self) {
    const bool gx = wants_grad(self, 0);
    const bool gt = wants_grad(self, 1);
    for (std::size_t r = 0; r < selected->size(); ++r) {
      const T* g = self.grad.data() + r * cols;
      if ((*selected)[r]) {
        if (gt) {
          T* dst = input_grad(self, 1).data();
          for (std::size_t c = 0; c < cols; ++c) dst[c] += g[c];
        }
      } else if (gx) {
        T* dst = input_grad(self, 0).data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[c] += g[c];
      }
    }
  });
}

/// Contiguous slice [begin, begin + count) along axis 0.
template <typename T>
Var<T> slice0(const Var<T>& x, std::size_t begin, std::size_t count) {
  const Shape& s = x.shape();
  if (begin + count > s.at(0) || count == 0) throw DimensionError("slice0: range out of bounds");
  const std::size_t inner = x.size() / s[0];
  Shape out_shape = s;
  out_shape[0] = count;
  std::vector<T> vals(x.value().data() + begin * inner, x.value().data() + (begin + count) * inner);
  NdArray<T> out(out_shape, std::move(vals));
  return make_result<T>(std::move(out), {x}, [begin, inner](Node<T>& self) {
    T* g = input_grad(self, 0).data() + begin * inner;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

/// Concatenation along axis 0; trailing axes must agree.
template <typename T>
Var<T> concat0(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat0: nothing to concatenate");
  Shape out_shape = parts[0].shape();
  out_shape[0] = 0;
  std::vector<std::size_t> offsets;
  std::vector<T> vals;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != out_shape.size()) throw DimensionError("concat0: rank mismatch");
    for (std::size_t a = 1; a < s.size(); ++a) {
      if (s[a] != out_shape[a]) throw DimensionError("concat0: trailing shape mismatch");
    }
    offsets.push_back(vals.size());
    vals.insert(vals.end(), p.value().data(), p.value().data() + p.size());
    out_shape[0] += p.shape()[0];
  }
  return make_result<T>(NdArray<T>(out_shape, std::move(vals)), parts, [offsets](Node<T>& self) {
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      if (!wants_grad(self, i)) continue;
      T* g = input_grad(self, i).data();
      const std::size_t n = self.inputs[i]->value.size();
      for (std::size_t e = 0; e < n; ++e) g[e] += self.grad[offsets[i] + e];
    }
  });
}

/// Normalizes over the last axis: (x - mean) / sqrt(var + eps) * gamma + beta.
/// gamma/beta may be empty for a non-affine normalization.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma = Var<T>(), const Var<T>& beta = Var<T>(),
                  std::type_identity_t<T> epsilon = T(1e-5)) {
  const std::size_t c = x.shape().back();
  if (c < 1 || epsilon <= T(0)) throw ContractError("layer_norm: need C >= 1 and epsilon > 0");
  const bool affine = gamma.valid();
  if (affine && (gamma.size() != c || !beta.valid() || beta.size() != c)) {
    throw DimensionError("layer_norm: gamma/beta must have " + std::to_string(c) + " elements");
  }
  const std::size_t rows = x.size() / c;
  NdArray<T> out(x.shape());
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  const T* xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * c;
    T mu = 0;
    for (std::size_t i = 0; i < c; ++i) mu += row[i];
    mu /= static_cast<T>(c);
    T var = 0;
    for (std::size_t i = 0; i < c; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<T>(c);
    const T rs = T(1) / std::sqrt(var + epsilon);
    (*rstd)[r] = rs;
    for (std::size_t i = 0; i < c; ++i) {
      const T h = (row[i] - mu) * rs;
      (*xhat)[r * c + i] = h;
      out[r * c + i] = affine ? h * gamma.value()[i] + beta.value()[i] : h;
    }
  }
  std::vector<Var<T>> inputs{x};
  if (affine) {
    inputs.push_back(gamma);
    inputs.push_back(beta);
  }
  return make_result<T>(std::move(out), std::move(inputs), [=](Node<T>& self) {
    const T* g = self.grad.data();
    const T* gam = affine ? self.inputs[1]->value.data() : nullptr;
    if (affine && wants_grad(self, 1)) {
      auto& gg = input_grad(self, 1);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < c; ++i) gg[i] += g[r * c + i] * (*xhat)[r * c + i];
      }
    }
    if (affine && wants_grad(self, 2)) {
      auto& gb = input_grad(self, 2);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < c; ++i) gb[i] += g[r * c + i];
      }
    }
    if (wants_grad(self, 0)) {
      T* gx = input_grad(self, 0).data();
      std::vector<T> dh(c);
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_dh = 0;
        T mean_dh_h = 0;
        for (std::size_t i = 0; i < c; ++i) {
          dh[i] = g[r * c + i] * (affine ? gam[i] : T(1));
          mean_dh += dh[i];
          mean_dh_h += dh[i] * (*xhat)[r * c + i];
        }
        mean_dh /= static_cast<T>(c);
        mean_dh_h /= static_cast<T>(c);
        for (std::size_t i = 0; i < c; ++i) {
          gx[r * c + i] += (*rstd)[r] * (dh[i] - mean_dh - (*xhat)[r * c + i] * mean_dh_h);
        }
      }
    }
  });
}

/// Softmax over the last axis. Entries equal to -inf receive probability 0.
template <typename T>
Var<T> softmax(const Var<T>& x) {
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.size() / c;
  NdArray<T> out(x.shape());
  const T* xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * c;
    T* o = out.data() + r * c;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < c; ++i) mx = std::max(mx, row[i]);
    T s = 0;
    for (std::size_t i = 0; i < c; ++i) {
      o[i] = std::exp(row[i] - mx);
      s += o[i];
    }
    for (std::size_t i = 0; i < c; ++i) o[i] /= s;
  }
  return make_result<T>(std::move(out), {x}, [c, rows](Node<T>& self) {
    T* gx = input_grad(self, 0).data();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * c;
      const T* g = self.grad.data() + r * c;
      T dotp = 0;
      for (std::size_t i = 0; i < c; ++i) dotp += g[i] * y[i];
      for (std::size_t i = 0; i < c; ++i) gx[r * c + i] += y[i] * (g[i] - dotp);
    }
  });
}

}  // namespace nerfmae::diff

#endif  // NERFMAE_DIFFCORE_OPS_LINALG_HPP_
