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


#ifndef NERFMAE_DOWNSTREAM_SUPERRES_HPP_
#define NERFMAE_DOWNSTREAM_SUPERRES_HPP_

#include <cmath>
#include <memory>
#include <vector>

#include "nerfmae/diffcore/ops_loss.hpp"
#include "nerfmae/downstream/semantic.hpp"

namespace nerfmae::downstream {

/// Output extent for an upsampling factor: floor(factor * n) rounded down to
/// an even number. Only the factors 1.6 and 2.4 are supported.
inline std::size_t superres_extent(std::size_t n, double factor) {
  if (std::abs(factor - 1.6) > 1e-9 && std::abs(factor - 2.4) > 1e-9) {
    throw ConfigError("super-resolution: factor must be 1.6 or 2.4");
  }
  const auto e = static_cast<std::size_t>(std::floor(factor * static_cast<double>(n) + 1e-9));
  return e - e % 2;
}

/// Four conv + instance-norm + ReLU + 2x trilinear blocks from the
/// bottleneck (adding projected pyramid skips where extents match), then a
/// trilinear resize to the target extent and a sigmoid 4-channel conv.
template <typename T>
class SuperResHead {
 public:
  SuperResHead(diff::ParameterStore<T>& store, const swin::EncoderConfig& enc, double factor)
      : factor_(factor) {
    enc.validate();
    for (int a = 0; a < 3; ++a) target_[a] = superres_extent(enc.input[a], factor);
    std::size_t c = enc.channels(3);
    for (std::size_t b = 0; b < 4; ++b) {
      const std::size_t next = std::max<std::size_t>(enc.channels(3) >> (b + 1), 8);
      convs_.emplace_back(store, "head.sr.block" + std::to_string(b), c, next, 3);
      if (b < 3) skips_.emplace_back(store, "head.sr.skip" + std::to_string(b), enc.channels(2 - b), next, 1);
      c = next;
    }
    out_ = diff::Conv3d<T>(store, "head.sr.out", c, 4, 3);
  }

  /// Returns [4, target extent].
  Var<T> operator()(const swin::FeaturePyramid<T>& f) const {
    auto d = f.volume(3);
    for (std::size_t b = 0; b < 4; ++b) {
      d = diff::relu(diff::instance_norm(convs_[b](d)));
      const auto& s = d.shape();
      d = diff::trilinear_resize(d, {2 * s[1], 2 * s[2], 2 * s[3]});
      if (b < 3) d = diff::add(d, skips_[b](f.volume(2 - b)));
    }
    return diff::sigmoid(out_(diff::trilinear_resize(d, target_)));
  }

  const diff::Extent3& target_extent() const { return target_; }
  double factor() const { return factor_; }

 private:
  double factor_;
  diff::Extent3 target_{};
  std::vector<diff::Conv3d<T>> convs_, skips_;
  diff::Conv3d<T> out_;
};

/// Color error over voxels with high-resolution alpha > 0.01 (per-voxel
/// channel sum, averaged over those voxels) plus the mean squared alpha
/// error over all voxels.
template <typename T>
Var<T> superres_loss(const Var<T>& prediction, const NdArray<T>& target) {
  const auto& s = prediction.shape();
  if (s != target.shape() || s.size() != 4 || s[0] != 4) {
    throw DimensionError("superres_loss: prediction " + diff::shape_str(s) + " vs target " +
                         diff::shape_str(target.shape()));
  }
  const std::size_t n = s[1] * s[2] * s[3];
  std::size_t occupied = 0;
  for (std::size_t v = 0; v < n; ++v) occupied += target[3 * n + v] > kOccupancyThreshold;
  auto w = std::make_shared<NdArray<T>>(s);
  for (std::size_t v = 0; v < n; ++v) {
    (*w)[3 * n + v] = T(1) / static_cast<T>(n);
    if (occupied && target[3 * n + v] > kOccupancyThreshold) {
      for (std::size_t c = 0; c < 3; ++c) (*w)[c * n + v] = T(1) / static_cast<T>(occupied);
    }
  }
  return diff::weighted_sq_error<T>(prediction, std::make_shared<const NdArray<T>>(target), w);
}

}  // namespace nerfmae::downstream

#endif  // NERFMAE_DOWNSTREAM_SUPERRES_HPP_
