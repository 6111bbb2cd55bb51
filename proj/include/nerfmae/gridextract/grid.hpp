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


#ifndef NERFMAE_GRIDEXTRACT_GRID_HPP_
#define NERFMAE_GRIDEXTRACT_GRID_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "nerfmae/diffcore/ndarray.hpp"
#include "nerfmae/scenefield/scene.hpp"

namespace nerfmae::grid {

using scene::Bounds;
using scene::Vec3;
using Resolution = std::array<std::size_t, 3>;

inline constexpr double kDefaultDelta = 0.01;

struct GridSpec {
  Resolution resolution{32, 32, 32};
  Bounds bounds = scene::cube_bounds(0.2);
  double delta = kDefaultDelta;

  std::size_t voxel_count() const { return resolution[0] * resolution[1] * resolution[2]; }

  void validate() const {
    if (!(delta > 0)) throw ConfigError("grid spec: delta must be positive");
    if (!bounds.valid()) throw ConfigError("grid spec: degenerate bounds");
    for (auto r : resolution) {
      if (r == 0) throw ConfigError("grid spec: resolution must be positive");
    }
  }

  /// World position of voxel center (i, j, k).
  Vec3 world_of(std::size_t i, std::size_t j, std::size_t k) const {
    const Vec3 f((i + 0.5) / resolution[0], (j + 0.5) / resolution[1], (k + 0.5) / resolution[2]);
    return bounds.min + f.cwiseProduct(bounds.extent());
  }

  /// Voxel containing x, or nothing outside the bounds.
  std::optional<std::array<std::size_t, 3>> index_of(const Vec3& x) const {
    std::array<std::size_t, 3> idx{};
    for (int a = 0; a < 3; ++a) {
      const double g = (x[a] - bounds.min[a]) / (bounds.max[a] - bounds.min[a]) * resolution[a];
      if (g < 0 || g >= static_cast<double>(resolution[a])) return std::nullopt;
      idx[a] = static_cast<std::size_t>(std::floor(g));
    }
    return idx;
  }

  bool operator==(const GridSpec& o) const {
    return resolution == o.resolution && bounds.min == o.bounds.min && bounds.max == o.bounds.max &&
           delta == o.delta;
  }
};

/// Dense H x W x D x 4 (r, g, b, alpha) grid, channel fastest.
struct RadianceDensityGrid {
  GridSpec spec;
  diff::NdArray<float> values;

  RadianceDensityGrid() : values({1, 1, 1, 4}) {}
  explicit RadianceDensityGrid(GridSpec s)
      : spec(s), values({s.resolution[0], s.resolution[1], s.resolution[2], 4}) {}

  std::size_t voxel(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * spec.resolution[1] + j) * spec.resolution[2] + k;
  }
  float& at(std::size_t v, int c) { return values[v * 4 + c]; }
  float at(std::size_t v, int c) const { return values[v * 4 + c]; }
  float alpha(std::size_t v) const { return values[v * 4 + 3]; }
};

/// Integer class label per voxel.
struct LabelGrid {
  GridSpec spec;
  std::vector<std::int32_t> labels;

  LabelGrid() = default;
  explicit LabelGrid(GridSpec s) : spec(s), labels(s.voxel_count(), 0) {}
};

/// Opacity of a voxel-sized step: 1 - exp(-sigma * delta).
inline double alpha_from_sigma(double sigma, double delta = kDefaultDelta) {
  if (sigma < 0 || std::isnan(sigma)) throw DomainError("alpha_from_sigma: negative density");
  if (!(delta > 0)) throw DomainError("alpha_from_sigma: delta must be positive");
  return -std::expm1(-sigma * delta);
}

/// Box around all camera positions and object box corners, scaled about its
/// center by `enlargement`, with each extent at least `min_extent`.
inline Bounds compute_scene_bounds(const std::vector<scene::Camera>& cameras,
                                   const std::vector<Bounds>& object_boxes = {}, double enlargement = 1.25,
                                   double min_extent = 0.1) {
  if (cameras.empty()) throw ConfigError("compute_scene_bounds: need at least one camera");
  if (!(enlargement >= 1)) throw ConfigError("compute_scene_bounds: enlargement must be >= 1");
  Bounds b{cameras.front().position(), cameras.front().position()};
  auto grow = [&b](const Vec3& p) {
    b.min = b.min.cwiseMin(p);
    b.max = b.max.cwiseMax(p);
  };
  for (const auto& c : cameras) grow(c.position());
  for (const auto& box : object_boxes) {
    grow(box.min);
    grow(box.max);
  }
  const Vec3 c = b.center();
  Vec3 half = 0.5 * enlargement * b.extent();
  half = half.cwiseMax(Vec3::Constant(0.5 * min_extent));
  return {c - half, c + half};
}

/// Samples `field` at every voxel center once per camera, with the unit
/// direction from the camera center to the point. Colors and densities are
/// averaged over cameras in index order; alpha comes from the mean density.
template <typename Field>
RadianceDensityGrid extract_grid(const Field& field, const std::vector<scene::Camera>& cameras,
                                 const GridSpec& spec) {
  spec.validate();
  if (cameras.size() < 2) throw ConfigError("extract_grid: need at least 2 cameras");
  RadianceDensityGrid g(spec);
  const double inv = 1.0 / static_cast<double>(cameras.size());
  for (std::size_t i = 0; i < spec.resolution[0]; ++i) {
    for (std::size_t j = 0; j < spec.resolution[1]; ++j) {
      for (std::size_t k = 0; k < spec.resolution[2]; ++k) {
        const Vec3 x = spec.world_of(i, j, k);
        Vec3 rgb = Vec3::Zero();
        double sigma = 0;
        for (const auto& cam : cameras) {
          Vec3 d = x - cam.position();
          const double n = d.norm();
          d = n > 0 ? Vec3(d / n) : Vec3(Vec3::UnitZ());
          const auto s = field.query(x, d);
          rgb += s.rgb;
          sigma += s.sigma;
        }
        rgb *= inv;
        sigma *= inv;
        const std::size_t v = g.voxel(i, j, k);
        for (int c = 0; c < 3; ++c) g.at(v, c) = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
        g.at(v, 3) = static_cast<float>(alpha_from_sigma(sigma, spec.delta));
      }
    }
  }
  return g;
}

/// Ground-truth grid of a view-independent analytic scene: one query per
/// voxel center, identical to extract_grid for such fields.
inline RadianceDensityGrid ground_truth_grid(const scene::AnalyticScene& s, const GridSpec& spec) {
  spec.validate();
  RadianceDensityGrid g(spec);
  std::size_t v = 0;
  for (std::size_t i = 0; i < spec.resolution[0]; ++i) {
    for (std::size_t j = 0; j < spec.resolution[1]; ++j) {
      for (std::size_t k = 0; k < spec.resolution[2]; ++k, ++v) {
        const auto q = s.query(spec.world_of(i, j, k), Vec3::UnitZ());
        for (int c = 0; c < 3; ++c) g.at(v, c) = static_cast<float>(std::clamp(q.rgb[c], 0.0, 1.0));
        g.at(v, 3) = static_cast<float>(alpha_from_sigma(q.sigma, spec.delta));
      }
    }
  }
  return g;
}

/// Semantic label of every voxel center.
inline LabelGrid label_grid(const scene::SyntheticScene& s, const GridSpec& spec) {
  spec.validate();
  LabelGrid g(spec);
  std::size_t v = 0;
  for (std::size_t i = 0; i < spec.resolution[0]; ++i) {
    for (std::size_t j = 0; j < spec.resolution[1]; ++j) {
      for (std::size_t k = 0; k < spec.resolution[2]; ++k, ++v) g.labels[v] = s.label_at(spec.world_of(i, j, k));
    }
  }
  return g;
}

}  // namespace nerfmae::grid

#endif  // NERFMAE_GRIDEXTRACT_GRID_HPP_
