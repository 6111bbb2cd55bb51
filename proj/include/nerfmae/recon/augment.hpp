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


#ifndef NERFMAE_RECON_AUGMENT_HPP_
#define NERFMAE_RECON_AUGMENT_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "nerfmae/diffcore/ndarray.hpp"
#include "nerfmae/metrics/box.hpp"
#include "nerfmae/rng.hpp"

namespace nerfmae::recon {

/// A channel-first volume [C, H, W, D] with optional per-voxel labels and
/// boxes in grid coordinates (voxel i spans [i, i + 1] along its axis).
struct AugmentSample {
  diff::NdArray<float> grid;
  std::vector<std::int32_t> labels;
  std::vector<metrics::Box3> boxes;
};

struct AugmentConfig {
  double probability = 0.5;
  double scale_min = 0.9;
  double scale_max = 1.1;
  bool flips = true;
  bool rotations = true;  // about the vertical (third) axis
  bool scaling = true;
};

/// What `augment` applied, in order: flips, rotation, scaling.
struct AugmentRecord {
  std::array<bool, 2> flipped{false, false};
  int quarter_turns = 0;
  double scale = 1.0;
};

namespace detail {

inline std::array<std::size_t, 3> spatial(const diff::NdArray<float>& g) {
  if (g.rank() != 4) throw DimensionError("augment: expected a [C, H, W, D] volume");
  return {g.shape()[1], g.shape()[2], g.shape()[3]};
}

/// out[c, i, j, k] = in[c, src(i, j, k)] for an index permutation.
template <typename Src>
void permute_voxels(AugmentSample& s, Src src) {
  const auto e = spatial(s.grid);
  const std::size_t n = e[0] * e[1] * e[2], channels = s.grid.shape()[0];
  diff::NdArray<float> g(s.grid.shape());
  std::vector<std::int32_t> labels(s.labels.size());
  std::size_t v = 0;
  for (std::size_t i = 0; i < e[0]; ++i) {
    for (std::size_t j = 0; j < e[1]; ++j) {
      for (std::size_t k = 0; k < e[2]; ++k, ++v) {
        const auto q = src(i, j, k);
        const std::size_t u = (q[0] * e[1] + q[1]) * e[2] + q[2];
        for (std::size_t c = 0; c < channels; ++c) g[c * n + v] = s.grid[c * n + u];
        if (!labels.empty()) labels[v] = s.labels[u];
      }
    }
  }
  s.grid = std::move(g);
  s.labels = std::move(labels);
}

inline void check_labels(const AugmentSample& s) {
  const auto e = spatial(s.grid);
  if (!s.labels.empty() && s.labels.size() != e[0] * e[1] * e[2]) {
    throw DimensionError("augment: label count differs from the voxel count");
  }
}

}  // namespace detail

/// Mirrors the sample along spatial axis 0, 1 or 2.
inline void flip(AugmentSample& s, int axis) {
  if (axis < 0 || axis > 2) throw ConfigError("flip: axis must be 0, 1 or 2");
  detail::check_labels(s);
  const auto e = detail::spatial(s.grid);
  detail::permute_voxels(s, [&](std::size_t i, std::size_t j, std::size_t k) {
    std::array<std::size_t, 3> q{i, j, k};
    q[axis] = e[axis] - 1 - q[axis];
    return q;
  });
  const double size = static_cast<double>(e[axis]);
  for (auto& b : s.boxes) b.center[axis] = size - b.center[axis];
}

/// Rotates by `turns` quarter turns about the third axis: (x, y) -> (S - y, x).
inline void rotate_quarter(AugmentSample& s, int turns) {
  detail::check_labels(s);
  const auto e = detail::spatial(s.grid);
  if (e[0] != e[1] || e[1] != e[2]) throw ConfigError("rotate: rotations need a cubic grid");
  const std::size_t n = e[0];
  const double size = static_cast<double>(n);
  for (int t = 0; t < ((turns % 4) + 4) % 4; ++t) {
    detail::permute_voxels(s, [n](std::size_t i, std::size_t j, std::size_t k) {
      return std::array<std::size_t, 3>{j, n - 1 - i, k};
    });
    for (auto& b : s.boxes) {
      const Eigen::Vector3d c = b.center, x = b.extents;
      b.center = {size - c[1], c[0], c[2]};
      b.extents = {x[1], x[0], x[2]};
    }
  }
}

/// Scales content by `factor` about the grid center and resamples to the
/// original resolution: trilinear for the volume, nearest for labels, edge
/// values outside. Boxes are scaled and clipped to the grid; boxes that
/// leave it entirely are dropped.
inline void scale(AugmentSample& s, double factor) {
  if (!(factor > 0)) throw ConfigError("scale: factor must be positive");
  detail::check_labels(s);
  const auto e = detail::spatial(s.grid);
  const std::size_t n = e[0] * e[1] * e[2], channels = s.grid.shape()[0];
  diff::NdArray<float> g(s.grid.shape());
  std::vector<std::int32_t> labels(s.labels.size());
  std::size_t v = 0;
  for (std::size_t i = 0; i < e[0]; ++i) {
    for (std::size_t j = 0; j < e[1]; ++j) {
      for (std::size_t k = 0; k < e[2]; ++k, ++v) {
        const std::size_t idx[3] = {i, j, k};
        std::size_t lo[3], hi[3], near[3];
        double w[3];
        for (int a = 0; a < 3; ++a) {
          const double c = 0.5 * static_cast<double>(e[a]);
          const double p = c + (static_cast<double>(idx[a]) + 0.5 - c) / factor;
          const double last = static_cast<double>(e[a] - 1);
          const double u = std::clamp(p - 0.5, 0.0, last);
          lo[a] = static_cast<std::size_t>(std::floor(u));
          hi[a] = std::min(lo[a] + 1, e[a] - 1);
          w[a] = u - static_cast<double>(lo[a]);
          near[a] = static_cast<std::size_t>(std::clamp(std::floor(p), 0.0, last));
        }
        for (std::size_t c = 0; c < channels; ++c) {
          const float* src = s.grid.data() + c * n;
          double acc = 0;
          for (int corner = 0; corner < 8; ++corner) {
            double wt = 1;
            std::size_t q[3];
            for (int a = 0; a < 3; ++a) {
              const bool up = (corner >> (2 - a)) & 1;
              q[a] = up ? hi[a] : lo[a];
              wt *= up ? w[a] : 1.0 - w[a];
            }
            if (wt != 0) acc += wt * src[(q[0] * e[1] + q[1]) * e[2] + q[2]];
          }
          g[c * n + v] = static_cast<float>(acc);
        }
        if (!labels.empty()) labels[v] = s.labels[(near[0] * e[1] + near[1]) * e[2] + near[2]];
      }
    }
  }
  s.grid = std::move(g);
  s.labels = std::move(labels);
  std::vector<metrics::Box3> boxes;
  for (const auto& b : s.boxes) {
    Eigen::Vector3d lo = b.lo(), hi = b.hi();
    for (int a = 0; a < 3; ++a) {
      const double c = 0.5 * static_cast<double>(e[a]);
      lo[a] = std::clamp(c + factor * (lo[a] - c), 0.0, static_cast<double>(e[a]));
      hi[a] = std::clamp(c + factor * (hi[a] - c), 0.0, static_cast<double>(e[a]));
    }
    if (((hi - lo).array() > 0).all()) boxes.push_back(metrics::Box3::from_corners(lo, hi, b.score, b.class_id));
  }
  s.boxes = std::move(boxes);
}

/// Random flips of the two horizontal axes, a random quarter-turn rotation
/// and a random scaling, each applied with `cfg.probability`.
inline AugmentRecord augment(AugmentSample& s, const AugmentConfig& cfg, std::uint64_t seed) {
  if (!(cfg.probability >= 0 && cfg.probability <= 1)) throw ConfigError("augment: probability must lie in [0, 1]");
  if (!(cfg.scale_min > 0 && cfg.scale_min <= cfg.scale_max)) throw ConfigError("augment: bad scale range");
  const auto e = detail::spatial(s.grid);
  if (cfg.rotations && (e[0] != e[1] || e[1] != e[2])) {
    throw ConfigError("augment: rotations need a cubic grid");
  }
  CounterRng rng(derive_seed(seed, "augment"));
  AugmentRecord rec;
  const double p = cfg.probability;
  for (int a = 0; a < 2; ++a) {
    const bool apply = rng.bernoulli(p);
    if (cfg.flips && apply) {
      flip(s, a);
      rec.flipped[a] = true;
    }
  }
  const bool rotate = rng.bernoulli(p);
  const int turns = 1 + static_cast<int>(rng.below(3));
  if (cfg.rotations && rotate) {
    rotate_quarter(s, turns);
    rec.quarter_turns = turns;
  }
  const bool rescale = rng.bernoulli(p);
  const double factor = rng.uniform(cfg.scale_min, cfg.scale_max);
  if (cfg.scaling && rescale) {
    scale(s, factor);
    rec.scale = factor;
  }
  return rec;
}

}  // namespace nerfmae::recon

#endif  // NERFMAE_RECON_AUGMENT_HPP_
