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

#ifndef NERFMAE_DIFFCORE_OPS_CONV_HPP_
#define NERFMAE_DIFFCORE_OPS_CONV_HPP_

#include <array>
#include <cmath>

#include "nerfmae/diffcore/ops_linalg.hpp"

namespace nerfmae::diff {

using Extent3 = std::array<std::size_t, 3>;

namespace detail {

/// Geometry of a direct convolution from a padded "wide" volume onto a
/// "narrow" output lattice. conv3d maps wide -> narrow, its transpose maps
/// narrow -> wide.
struct ConvGeometry {
  std::size_t channels;  // channels of the wide volume
  Extent3 wide;
  Extent3 narrow;
  std::size_t kernel;
  std::size_t stride;
  std::size_t pad;

  std::size_t k3() const { return kernel * kernel * kernel; }
  std::size_t narrow_plane() const { return narrow[1] * narrow[2]; }
  std::size_t narrow_count() const { return narrow[0] * narrow[1] * narrow[2]; }
  std::size_t wide_count() const { return wide[0] * wide[1] * wide[2]; }
};

// Upper bound on im2col buffer elements; chunks are whole narrow planes.
inline constexpr std::size_t kColBudget = std::size_t{1} << 24;

inline std::size_t planes_per_chunk(const ConvGeometry& g) {
  const std::size_t per_plane = g.channels * g.k3() * g.narrow_plane();
  return std::max<std::size_t>(1, std::min(g.narrow[0], kColBudget / std::max<std::size_t>(1, per_plane)));
}

/// col[(c,kd,kh,kw), (od - d0, oh, ow)] = wide[c, od*s+kd-p, ...] (0 outside).
template <typename T>
void im2col(const T* wide, const ConvGeometry& g, std::size_t d0, std::size_t d1, T* col) {
  const std::size_t cols = (d1 - d0) * g.narrow_plane();
  const long pad = static_cast<long>(g.pad);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* src = wide + c * g.wide_count();
    for (std::size_t kd = 0; kd < g.kernel; ++kd) {
      for (std::size_t kh = 0; kh < g.kernel; ++kh) {
        for (std::size_t kw = 0; kw < g.kernel; ++kw, ++row) {
          T* dst = col + row * cols;
          std::size_t idx = 0;
          for (std::size_t od = d0; od < d1; ++od) {
            const long z = static_cast<long>(od * g.stride + kd) - pad;
            const bool zin = z >= 0 && z < static_cast<long>(g.wide[0]);
            for (std::size_t oh = 0; oh < g.narrow[1]; ++oh) {
              const long y = static_cast<long>(oh * g.stride + kh) - pad;
              const bool yin = zin && y >= 0 && y < static_cast<long>(g.wide[1]);
              const T* line = yin ? src + (static_cast<std::size_t>(z) * g.wide[1] + static_cast<std::size_t>(y)) * g.wide[2] : nullptr;
              for (std::size_t ow = 0; ow < g.narrow[2]; ++ow, ++idx) {
                const long x = static_cast<long>(ow * g.stride + kw) - pad;
                dst[idx] = (yin && x >= 0 && x < static_cast<long>(g.wide[2])) ? line[x] : T(0);
              }
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds col entries back into the wide volume.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, std::size_t d0, std::size_t d1, T* wide) {
  const std::size_t cols = (d1 - d0) * g.narrow_plane();
  const long pad = static_cast<long>(g.pad);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* dst = wide + c * g.wide_count();
    for (std::size_t kd = 0; kd < g.kernel; ++kd) {
      for (std::size_t kh = 0; kh < g.kernel; ++kh) {
        for (std::size_t kw = 0; kw < g.kernel; ++kw, ++row) {
          const T* src = col + row * cols;
          std::size_t idx = 0;
          for (std::size_t od = d0; od < d1; ++od) {
            const long z = static_cast<long>(od * g.stride + kd) - pad;
            const bool zin = z >= 0 && z < static_cast<long>(g.wide[0]);
            for (std::size_t oh = 0; oh < g.narrow[1]; ++oh) {
              const long y = static_cast<long>(oh * g.stride + kh) - pad;
              const bool yin = zin && y >= 0 && y < static_cast<long>(g.wide[1]);
              T* line = yin ? dst + (static_cast<std::size_t>(z) * g.wide[1] + static_cast<std::size_t>(y)) * g.wide[2] : nullptr;
              for (std::size_t ow = 0; ow < g.narrow[2]; ++ow, ++idx) {
                const long x = static_cast<long>(ow * g.stride + kw) - pad;
                if (yin && x >= 0 && x < static_cast<long>(g.wide[2])) line[x] += src[idx];
              }
            }
          }
        }
      }
    }
  }
}

/// narrow[F, narrow lattice] += W[F, channels*k^3] * im2col(wide).
template <typename T>
void conv_forward(const T* wide, const T* weight, std::size_t filters, const ConvGeometry& g, T* narrow) {
  const std::size_t rows = g.channels * g.k3();
  const std::size_t chunk = planes_per_chunk(g);
  std::vector<T> col;
  for (std::size_t d0 = 0; d0 < g.narrow[0]; d0 += chunk) {
    const std::size_t d1 = std::min(g.narrow[0], d0 + chunk);
    const std::size_t cols = (d1 - d0) * g.narrow_plane();
    col.resize(rows * cols);
    im2col(wide, g, d0, d1, col.data());
    gemm_acc(false, false, filters, cols, rows, weight, col.data(), narrow + d0 * g.narrow_plane(),
             g.narrow_count());
  }
}

/// Adjoint pieces of conv_forward given d(narrow):
///   d(wide) += col2im(W^T dnarrow), dW += dnarrow im2col(wide)^T.
template <typename T>
void conv_backward(const T* wide, const T* weight, std::size_t filters, const ConvGeometry& g,
                   const T* dnarrow, T* dwide, T* dweight) {
  using Mat = RowMat<T>;
  const std::size_t rows = g.channels * g.k3();
  const std::size_t chunk = planes_per_chunk(g);
  std::vector<T> col;
  for (std::size_t d0 = 0; d0 < g.narrow[0]; d0 += chunk) {
    const std::size_t d1 = std::min(g.narrow[0], d0 + chunk);
    const std::size_t cols = (d1 - d0) * g.narrow_plane();
    col.resize(rows * cols);
    Eigen::Map<const Mat, 0, Eigen::OuterStride<>> gout(
        dnarrow + d0 * g.narrow_plane(), static_cast<Eigen::Index>(filters), static_cast<Eigen::Index>(cols),
        Eigen::OuterStride<>(static_cast<Eigen::Index>(g.narrow_count())));
    if (dweight != nullptr) {
      im2col(wide, g, d0, d1, col.data());
      Eigen::Map<const Mat> cm(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      Eigen::Map<Mat> dw(dweight, static_cast<Eigen::Index>(filters), static_cast<Eigen::Index>(rows));
      dw.noalias() += gout * cm.transpose();
    }
    if (dwide != nullptr) {
      Eigen::Map<const Mat> w(weight, static_cast<Eigen::Index>(filters), static_cast<Eigen::Index>(rows));
      Eigen::Map<Mat> cm(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      cm.noalias() = w.transpose() * gout;
      col2im(col.data(), g, d0, d1, dwide);
    }
  }
}

/// wide += col2im(W^T narrow): the transposed convolution's forward pass.
template <typename T>
void conv_adjoint_forward(const T* narrow, const T* weight, std::size_t filters, const ConvGeometry& g, T* wide) {
  using Mat = RowMat<T>;
  const std::size_t rows = g.channels * g.k3();
  const std::size_t chunk = planes_per_chunk(g);
  std::vector<T> col;
  for (std::size_t d0 = 0; d0 < g.narrow[0]; d0 += chunk) {
    const std::size_t d1 = std::min(g.narrow[0], d0 + chunk);
    const std::size_t cols = (d1 - d0) * g.narrow_plane();
    col.resize(rows * cols);
    Eigen::Map<const Mat, 0, Eigen::OuterStride<>> x(
        narrow + d0 * g.narrow_plane(), static_cast<Eigen::Index>(filters), static_cast<Eigen::Index>(cols),
        Eigen::OuterStride<>(static_cast<Eigen::Index>(g.narrow_count())));
    Eigen::Map<const Mat> w(weight, static_cast<Eigen::Index>(filters), static_cast<Eigen::Index>(rows));
    Eigen::Map<Mat> cm(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    cm.noalias() = w.transpose() * x;
    col2im(col.data(), g, d0, d1, wide);
  }
}

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride < 1) throw ConfigError("conv3d: stride must be >= 1");
  if (k > in + 2 * pad) throw ConfigError("conv3d: kernel larger than padded extent");
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

/// 3D convolution, channel-first: input [C_in, D, H, W], weight
/// [C_out, C_in, k, k, k], optional bias [C_out].
template <typename T>
Var<T> conv3d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias = Var<T>(), std::size_t stride = 1,
              std::size_t padding = 0) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (is.size() != 4 || ws.size() != 5) throw DimensionError("conv3d: expected [C,D,H,W] input and 5-D weight");
  if (ws[1] != is[0]) {
    throw DimensionError("conv3d: input has " + std::to_string(is[0]) + " channels, weight expects " +
                         std::to_string(ws[1]));
  }
  const std::size_t k = ws[2];
  if (ws[3] != k || ws[4] != k) throw DimensionError("conv3d: kernel must be cubic");
  detail::ConvGeometry g{is[0], {is[1], is[2], is[3]}, {}, k, stride, padding};
  for (int a = 0; a < 3; ++a) g.narrow[a] = detail::conv_out_extent(g.wide[a], k, stride, padding);
  const std::size_t filters = ws[0];
  NdArray<T> out({filters, g.narrow[0], g.narrow[1], g.narrow[2]});
  detail::conv_forward(input.value().data(), weight.value().data(), filters, g, out.data());
  const bool has_bias = bias.valid();
  if (has_bias) {
    if (bias.size() != filters) throw DimensionError("conv3d: bias size mismatch");
    const std::size_t n = g.narrow_count();
    for (std::size_t f = 0; f < filters; ++f) {
      for (std::size_t i = 0; i < n; ++i) out[f * n + i] += bias.value()[f];
    }
  }
  std::vector<Var<T>> inputs{input, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(std::move(out), std::move(inputs), [g, filters, has_bias](Node<T>& self) {
    T* dx = wants_grad(self, 0) ? input_grad(self, 0).data() : nullptr;
    T* dw = wants_grad(self, 1) ? input_grad(self, 1).data() : nullptr;
    if (dx || dw) {
      detail::conv_backward(self.inputs[0]->value.data(), self.inputs[1]->value.data(), filters, g,
                            self.grad.data(), dx, dw);
    }
    if (has_bias && wants_grad(self, 2)) {
      auto& gb = input_grad(self, 2);
      const std::size_t n = g.narrow_count();
      for (std::size_t f = 0; f < filters; ++f) {
        T s = 0;
        for (std::size_t i = 0; i < n; ++i) s += self.grad[f * n + i];
        gb[f] += s;
      }
    }
  });
}

/// Transposed 3D convolution (no padding): input [C_in, D, H, W], weight
/// [C_in, C_out, k, k, k] -> [C_out, (D-1)s+k, ...]. Exactly the adjoint of
/// conv3d with the same weight tensor.
template <typename T>
Var<T> conv_transpose3d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias = Var<T>(),
                        std::size_t stride = 1) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (is.size() != 4 || ws.size() != 5) {
    throw DimensionError("conv_transpose3d: expected [C,D,H,W] input and 5-D weight");
  }
  if (ws[0] != is[0]) {
    throw DimensionError("conv_transpose3d: input has " + std::to_string(is[0]) + " channels, weight expects " +
                         std::to_string(ws[0]));
  }
  if (stride < 1) throw ConfigError("conv_transpose3d: stride must be >= 1");
  const std::size_t k = ws[2];
  const std::size_t out_c = ws[1];
  detail::ConvGeometry g{out_c, {}, {is[1], is[2], is[3]}, k, stride, 0};
  for (int a = 0; a < 3; ++a) g.wide[a] = (g.narrow[a] - 1) * stride + k;
  const std::size_t filters = is[0];
  NdArray<T> out({out_c, g.wide[0], g.wide[1], g.wide[2]});
  detail::conv_adjoint_forward(input.value().data(), weight.value().data(), filters, g, out.data());
  const bool has_bias = bias.valid();
  if (has_bias) {
    if (bias.size() != out_c) throw DimensionError("conv_transpose3d: bias size mismatch");
    const std::size_t n = g.wide_count();
    for (std::size_t c = 0; c < out_c; ++c) {
      for (std::size_t i = 0; i < n; ++i) out[c * n + i] += bias.value()[c];
    }
  }
  std::vector<Var<T>> inputs{input, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(std::move(out), std::move(inputs), [g, filters, out_c, has_bias](Node<T>& self) {
    // The upstream gradient lives on the wide lattice; a forward conv of it
    // gives d(input), and the weight gradient pairs input with im2col(grad).
    if (wants_grad(self, 0)) {
      detail::conv_forward(self.grad.data(), self.inputs[1]->value.data(), filters, g,
                           input_grad(self, 0).data());
    }
    if (wants_grad(self, 1)) {
      detail::conv_backward(self.grad.data(), self.inputs[1]->value.data(), filters, g,
                            self.inputs[0]->value.data(), static_cast<T*>(nullptr),
                            input_grad(self, 1).data());
    }
    if (has_bias && wants_grad(self, 2)) {
      auto& gb = input_grad(self, 2);
      const std::size_t n = g.wide_count();
      for (std::size_t c = 0; c < out_c; ++c) {
        T s = 0;
        for (std::size_t i = 0; i < n; ++i) s += self.grad[c * n + i];
        gb[c] += s;
      }
    }
  });
}

namespace detail {

struct LinearTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> w_hi;
};

/// Half-pixel-centered linear taps for resizing `in` samples to `out`.
inline LinearTaps resize_taps(std::size_t in, std::size_t out) {
  LinearTaps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.w_hi.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    t.lo[o] = lo;
    t.hi[o] = hi;
    t.w_hi[o] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace detail

/// Trilinear resampling of [C, D, H, W] to [C, out...] (half-pixel centers,
/// edge clamped).
template <typename T>
void trilinear_resize_into(const T* in, std::size_t channels, const Extent3& src, const Extent3& dst, T* out,
                           bool adjoint = false, const T* adj_src = nullptr) {
  const auto tz = detail::resize_taps(src[0], dst[0]);
  const auto ty = detail::resize_taps(src[1], dst[1]);
  const auto tx = detail::resize_taps(src[2], dst[2]);
  const std::size_t in_n = src[0] * src[1] * src[2];
  const std::size_t out_n = dst[0] * dst[1] * dst[2];
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t z = 0; z < dst[0]; ++z) {
      const std::size_t zs[2] = {tz.lo[z], tz.hi[z]};
      const T wz[2] = {T(1 - tz.w_hi[z]), T(tz.w_hi[z])};
      for (std::size_t y = 0; y < dst[1]; ++y) {
        const std::size_t ys[2] = {ty.lo[y], ty.hi[y]};
        const T wy[2] = {T(1 - ty.w_hi[y]), T(ty.w_hi[y])};
        for (std::size_t x = 0; x < dst[2]; ++x) {
          const std::size_t xs[2] = {tx.lo[x], tx.hi[x]};
          const T wx[2] = {T(1 - tx.w_hi[x]), T(tx.w_hi[x])};
          const std::size_t o = c * out_n + (z * dst[1] + y) * dst[2] + x;
          T acc = 0;
          for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
              for (int d = 0; d < 2; ++d) {
                const T w = wz[a] * wy[b] * wx[d];
                const std::size_t i = c * in_n + (zs[a] * src[1] + ys[b]) * src[2] + xs[d];
                if (adjoint) {
                  out[i] += w * adj_src[o];
                } else {
                  acc += w * in[i];
                }
              }
            }
          }
          if (!adjoint) out[o] = acc;
        }
      }
    }
  }
}

template <typename T>
Var<T> trilinear_resize(const Var<T>& input, const Extent3& out_extent) {
  const Shape& s = input.shape();
  if (s.size() != 4) throw DimensionError("trilinear_resize: expected [C,D,H,W]");
  const Extent3 src{s[1], s[2], s[3]};
  NdArray<T> out({s[0], out_extent[0], out_extent[1], out_extent[2]});
  trilinear_resize_into(input.value().data(), s[0], src, out_extent, out.data());
  const std::size_t channels = s[0];
  return make_result<T>(std::move(out), {input}, [=](Node<T>& self) {
    trilinear_resize_into<T>(nullptr, channels, src, out_extent, input_grad(self, 0).data(), true,
                             self.grad.data());
  });
}

/// Sub-volume [offset, offset + extent) of a [C, D, H, W] array.
template <typename T>
Var<T> crop3d(const Var<T>& input, const Extent3& offset, const Extent3& extent) {
  const Shape& s = input.shape();
  if (s.size() != 4) throw DimensionError("crop3d: expected [C,D,H,W]");
  for (int a = 0; a < 3; ++a) {
    if (extent[a] == 0 || offset[a] + extent[a] > s[a + 1]) {
      throw DimensionError("crop3d: window exceeds input " + shape_str(s));
    }
  }
  const std::size_t channels = s[0];
  const Extent3 src{s[1], s[2], s[3]};
  // Visits (input index, output index) pairs row by row.
  auto visit = [=](auto&& fn) {
    std::size_t o = 0;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t z = 0; z < extent[0]; ++z) {
        for (std::size_t y = 0; y < extent[1]; ++y, o += extent[2]) {
          const std::size_t i = ((c * src[0] + z + offset[0]) * src[1] + y + offset[1]) * src[2] + offset[2];
          fn(i, o);
        }
      }
    }
  };
  NdArray<T> out({channels, extent[0], extent[1], extent[2]});
  const T* in = input.value().data();
  visit([&](std::size_t i, std::size_t o) { std::copy_n(in + i, extent[2], out.data() + o); });
  return make_result<T>(std::move(out), {input}, [visit, width = extent[2]](Node<T>& self) {
    T* g = input_grad(self, 0).data();
    const T* up = self.grad.data();
    visit([&](std::size_t i, std::size_t o) {
      for (std::size_t x = 0; x < width; ++x) g[i + x] += up[o + x];
    });
  });
}

/// Per-channel normalization of [C, D, H, W] over the spatial axes, without
/// affine parameters.
template <typename T>
Var<T> instance_norm(const Var<T>& input, std::type_identity_t<T> epsilon = T(1e-5)) {
  const Shape& s = input.shape();
  if (s.size() != 4) throw DimensionError("instance_norm: expected [C,D,H,W]");
  return reshape(layer_norm(reshape(input, {s[0], s[1] * s[2] * s[3]}), Var<T>(), Var<T>(), epsilon), s);
}

}  // namespace nerfmae::diff

#endif  // NERFMAE_DIFFCORE_OPS_CONV_HPP_
