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


#ifndef NERFMAE_DIFFCORE_LAYERS_HPP_
#define NERFMAE_DIFFCORE_LAYERS_HPP_

#include <cstdint>
#include <string>

#include "nerfmae/diffcore/ops_conv.hpp"
#include "nerfmae/diffcore/parameters.hpp"

namespace nerfmae::diff {

/// y = x W^T + b with W [out, in].
template <typename T>
struct Linear {
  Var<T> weight, bias;

  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out, bool with_bias = true)
      : weight(store.create(name + ".weight", {out, in}, Init::kTruncNormal)) {
    if (with_bias) bias = store.create(name + ".bias", {out}, Init::kZeros);
  }
  Var<T> operator()(const Var<T>& x) const { return linear(x, weight, bias); }
};

/// Affine layer normalization over the last axis.
template <typename T>
struct LayerNorm {
  Var<T> gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t channels)
      : gamma(store.create(name + ".weight", {channels}, Init::kOnes)),
        beta(store.create(name + ".bias", {channels}, Init::kZeros)) {}
  Var<T> operator()(const Var<T>& x) const { return layer_norm(x, gamma, beta); }
};

/// Cubic-kernel 3D convolution on [C, D, H, W] with "same" padding for odd
/// kernels at stride 1.
template <typename T>
struct Conv3d {
  Var<T> weight, bias;
  std::size_t stride = 1;
  std::size_t pad = 0;

  Conv3d() = default;
  Conv3d(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
         std::size_t stride_ = 1, std::size_t pad_ = SIZE_MAX)
      : weight(store.create(name + ".weight", {out, in, kernel, kernel, kernel}, Init::kTruncNormal)),
        bias(store.create(name + ".bias", {out}, Init::kZeros)),
        stride(stride_),
        pad(pad_ == SIZE_MAX ? kernel / 2 : pad_) {}
  Var<T> operator()(const Var<T>& x) const { return conv3d(x, weight, bias, stride, pad); }
};

/// Kernel-3, stride-2 transposed convolution cropped to exactly twice the
/// input extent.
template <typename T>
struct Upsample2x {
  Var<T> weight, bias;

  Upsample2x() = default;
  Upsample2x(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out)
      : weight(store.create(name + ".weight", {in, out, 3, 3, 3}, Init::kTruncNormal)),
        bias(store.create(name + ".bias", {out}, Init::kZeros)) {}
  Var<T> operator()(const Var<T>& x) const {
    const auto& s = x.shape();
    auto y = conv_transpose3d(x, weight, bias, 2);
    return crop3d(y, {1, 1, 1}, {2 * s[1], 2 * s[2], 2 * s[3]});
  }
};

/// Token rows [N, C] on an extent-shaped lattice to a channel-first volume.
template <typename T>
Var<T> tokens_to_volume(const Var<T>& x, const Extent3& e) {
  return reshape(permute(x, {1, 0}), {x.shape()[1], e[0], e[1], e[2]});
}

/// Channel-first volume [C, D, H, W] to token rows [D*H*W, C].
template <typename T>
Var<T> volume_to_tokens(const Var<T>& v) {
  const auto& s = v.shape();
  return permute(reshape(v, {s[0], s[1] * s[2] * s[3]}), {1, 0});
}

}  // namespace nerfmae::diff

#endif  // NERFMAE_DIFFCORE_LAYERS_HPP_
