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


#ifndef NERFMAE_SWIN3D_MASKING_HPP_
#define NERFMAE_SWIN3D_MASKING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "nerfmae/diffcore/ndarray.hpp"
#include "nerfmae/gridextract/grid.hpp"
#include "nerfmae/rng.hpp"

namespace nerfmae::swin {

using grid::Resolution;

/// Random selection of masked p^3 patches over a grid.
struct MaskSpec {
  Resolution resolution{32, 32, 32};
  std::size_t patch = 4;
  double ratio = 0.75;
  std::uint64_t seed = 0;
  std::vector<std::size_t> masked;  // sorted patch indices

  Resolution patch_grid() const {
    return {resolution[0] / patch, resolution[1] / patch, resolution[2] / patch};
  }
  std::size_t total() const {
    const auto g = patch_grid();
    return g[0] * g[1] * g[2];
  }
  std::size_t unmasked() const { return total() - masked.size(); }

  /// One flag per patch in row-major patch order.
  std::vector<std::uint8_t> patch_flags() const {
    std::vector<std::uint8_t> f(total(), 0);
    for (auto i : masked) f[i] = 1;
    return f;
  }

  /// One flag per voxel in row-major (i, j, k) order.
  std::vector<std::uint8_t> voxel_flags() const {
    const auto flags = patch_flags();
    const auto g = patch_grid();
    std::vector<std::uint8_t> v(resolution[0] * resolution[1] * resolution[2], 0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < resolution[0]; ++i) {
      for (std::size_t j = 0; j < resolution[1]; ++j) {
        for (std::size_t k = 0; k < resolution[2]; ++k, ++n) {
          v[n] = flags[((i / patch) * g[1] + j / patch) * g[2] + k / patch];
        }
      }
    }
    return v;
  }
};

/// Uniform random subset of round(ratio * total) patches, without
/// replacement. Deterministic per seed.
inline MaskSpec mask_patches(const Resolution& resolution, std::size_t patch, double ratio, std::uint64_t seed) {
  if (patch == 0) throw ConfigError("mask_patches: patch size must be positive");
  for (auto r : resolution) {
    if (r == 0 || r % patch != 0) {
      throw ConfigError("mask_patches: extent " + std::to_string(r) + " is not divisible by patch size " +
                        std::to_string(patch));
    }
  }
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("mask_patches: ratio must lie in [0, 1)");
  MaskSpec m{resolution, patch, ratio, seed, {}};
  const std::size_t total = m.total();
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(derive_seed(seed, "mask_patches"));
  for (std::size_t i = 0; i < count; ++i) std::swap(order[i], order[i + rng.below(total - i)]);
  m.masked.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(m.masked.begin(), m.masked.end());
  return m;
}

/// Zeroes all four channels of every voxel inside a masked patch.
inline grid::RadianceDensityGrid apply_mask(const grid::RadianceDensityGrid& g, const MaskSpec& mask) {
  if (g.spec.resolution != mask.resolution) throw DimensionError("apply_mask: mask resolution differs from grid");
  grid::RadianceDensityGrid out = g;
  const auto flags = mask.voxel_flags();
  for (std::size_t v = 0; v < flags.size(); ++v) {
    if (flags[v]) {
      for (int c = 0; c < 4; ++c) out.at(v, c) = 0.0f;
    }
  }
  return out;
}

/// Grid values as a channel-first [4, H, W, D] array.
template <typename T>
diff::NdArray<T> channel_first(const grid::RadianceDensityGrid& g) {
  const auto& r = g.spec.resolution;
  const std::size_t n = r[0] * r[1] * r[2];
  diff::NdArray<T> out({4, r[0], r[1], r[2]});
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < 4; ++c) out[c * n + v] = static_cast<T>(g.values[v * 4 + c]);
  }
  return out;
}

/// Inverse of channel_first.
template <typename T>
grid::RadianceDensityGrid channel_last(const diff::NdArray<T>& a, const grid::GridSpec& spec) {
  grid::RadianceDensityGrid g(spec);
  const std::size_t n = spec.voxel_count();
  if (a.size() != 4 * n) throw DimensionError("channel_last: size mismatch");
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < 4; ++c) g.values[v * 4 + c] = static_cast<float>(a[c * n + v]);
  }
  return g;
}

/// Zeroes masked voxels of a channel-first array in place.
template <typename T>
void zero_masked(diff::NdArray<T>& a, const std::vector<std::uint8_t>& voxel_flags) {
  const std::size_t n = voxel_flags.size();
  if (a.size() % n != 0) throw DimensionError("zero_masked: size mismatch");
  const std::size_t channels = a.size() / n;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t v = 0; v < n; ++v) {
      if (voxel_flags[v]) a[c * n + v] = T(0);
    }
  }
}

}  // namespace nerfmae::swin

#endif  // NERFMAE_SWIN3D_MASKING_HPP_
