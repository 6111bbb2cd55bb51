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


#ifndef NERFMAE_RECON_LOSS_HPP_
#define NERFMAE_RECON_LOSS_HPP_

#include <memory>
#include <vector>

#include "nerfmae/diffcore/ops_loss.hpp"
#include "nerfmae/swin3d/masking.hpp"

namespace nerfmae::recon {

using diff::NdArray;
using diff::Var;

template <typename T>
struct LossBreakdown {
  Var<T> total;
  double l_rad = 0;
  double l_alpha = 0;
  std::size_t K = 0;  // masked voxels with target alpha > delta
  std::size_t M = 0;  // masked voxels
};

/// Opacity-aware masked reconstruction loss on channel-first [4, H, W, D]
/// volumes. `masked` flags each voxel inside a masked patch.
template <typename T>
LossBreakdown<T> recon_loss(const Var<T>& prediction, const NdArray<T>& target, const std::vector<std::uint8_t>& masked,
                            double delta = grid::kDefaultDelta) {
  const auto& s = prediction.shape();
  if (s != target.shape() || s.size() != 4 || s[0] != 4 || masked.size() != s[1] * s[2] * s[3]) {
    throw DimensionError("recon_loss: prediction " + diff::shape_str(s) + " vs target " +
                         diff::shape_str(target.shape()));
  }
  if (!(delta > 0)) throw DomainError("recon_loss: delta must be positive");
  const std::size_t n = masked.size();
  LossBreakdown<T> out;
  for (std::size_t v = 0; v < n; ++v) {
    if (!masked[v]) continue;
    ++out.M;
    if (target[3 * n + v] > delta) ++out.K;
  }
  auto w_rad = std::make_shared<NdArray<T>>(s);
  auto w_alpha = std::make_shared<NdArray<T>>(s);
  const T inv_k = out.K ? T(1) / static_cast<T>(out.K) : T(0);
  const T inv_m = out.M ? T(1) / static_cast<T>(out.M) : T(0);
  for (std::size_t v = 0; v < n; ++v) {
    if (!masked[v]) continue;
    (*w_alpha)[3 * n + v] = inv_m;
    if (target[3 * n + v] > delta) {
      for (std::size_t c = 0; c < 3; ++c) (*w_rad)[c * n + v] = inv_k;
    }
  }
  auto tgt = std::make_shared<const NdArray<T>>(target);
  auto rad = diff::weighted_sq_error<T>(prediction, tgt, w_rad);
  auto alpha = diff::weighted_sq_error<T>(prediction, tgt, w_alpha);
  out.total = diff::add(rad, alpha);
  out.l_rad = static_cast<double>(rad.item());
  out.l_alpha = static_cast<double>(alpha.item());
  return out;
}

template <typename T>
LossBreakdown<T> recon_loss(const Var<T>& prediction, const NdArray<T>& target, const swin::MaskSpec& mask,
                            double delta = grid::kDefaultDelta) {
  const auto& s = prediction.shape();
  if (s.size() != 4 || mask.resolution != swin::Resolution{s[1], s[2], s[3]}) {
    throw DimensionError("recon_loss: mask resolution differs from the prediction");
  }
  return recon_loss(prediction, target, mask.voxel_flags(), delta);
}

}  // namespace nerfmae::recon

#endif  // NERFMAE_RECON_LOSS_HPP_
