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


#ifndef NERFMAE_SCENEFIELD_SCENE_HPP_
#define NERFMAE_SCENEFIELD_SCENE_HPP_

#include <cstdint>
#include <vector>

#include "nerfmae/rng.hpp"
#include "nerfmae/scenefield/geometry.hpp"

namespace nerfmae::scene {

struct FieldSample {
  Vec3 rgb = Vec3::Zero();
  double sigma = 0;
};

enum class Shape { kSphere, kBox };

/// Class id used for semantic labels: 0 is empty space.
inline int class_of(Shape s) { return s == Shape::kSphere ? 1 : 2; }

struct Primitive {
  Shape shape = Shape::kSphere;
  Vec3 center = Vec3::Zero();
  double radius = 0;                     // sphere
  Vec3 half_extent = Vec3::Zero();       // box
  double sigma0 = 0;
  Vec3 albedo = Vec3::Zero();

  bool contains(const Vec3& x) const {
    if (shape == Shape::kSphere) return (x - center).squaredNorm() <= radius * radius;
    return ((x - center).cwiseAbs().array() <= half_extent.array()).all();
  }

  /// Tight axis-aligned box.
  Bounds box() const {
    const Vec3 h = shape == Shape::kSphere ? Vec3::Constant(radius) : half_extent;
    return {center - h, center + h};
  }
};

/// View-independent analytic field: densities of overlapping primitives add
/// and colors are the density-weighted mean of their albedos.
struct AnalyticScene {
  std::vector<Primitive> primitives;
  Vec3 background = Vec3::Zero();
  Bounds bounds = cube_bounds(0.2);

  FieldSample query(const Vec3& x, const Vec3& /*dir*/) const {
    FieldSample s;
    Vec3 weighted = Vec3::Zero();
    for (const auto& p : primitives) {
      if (!p.contains(x)) continue;
      s.sigma += p.sigma0;
      weighted += p.sigma0 * p.albedo;
    }
    s.rgb = s.sigma > 0 ? Vec3(weighted / s.sigma) : background;
    return s;
  }

  void validate() const {
    if (!bounds.valid()) throw ConfigError("scene: degenerate bounds");
    for (const auto& p : primitives) {
      if (!(p.sigma0 >= 0) || !std::isfinite(p.sigma0)) throw ConfigError("scene: density must be finite and >= 0");
      const Bounds b = p.box();
      if (!bounds.contains(b.min) || !bounds.contains(b.max)) throw ConfigError("scene: primitive leaves bounds");
    }
  }
};

struct SyntheticScene {
  AnalyticScene scene;
  std::vector<int> labels;     // class id per primitive
  std::vector<Bounds> boxes;   // tight box per primitive

  /// Class of the densest primitive containing x, 0 when none does.
  int label_at(const Vec3& x) const {
    int label = 0;
    double best = -1;
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
      const auto& p = scene.primitives[i];
      if (p.contains(x) && p.sigma0 > best) {
        best = p.sigma0;
        label = labels[i];
      }
    }
    return label;
  }
};

struct SyntheticSceneConfig {
  int min_count = 2;
  int max_count = 4;
  Bounds bounds = cube_bounds(0.2);
  double min_size = 0.04;   // radius or half extent
  double max_size = 0.09;
  double min_sigma = 10;
  double max_sigma = 30;
};

/// Random spheres and boxes inside the bounds, rejection-sampled to avoid
/// overlapping boxes where possible. Deterministic per seed.
inline SyntheticScene make_synthetic_scene(std::uint64_t seed, const SyntheticSceneConfig& cfg = {}) {
  if (!cfg.bounds.valid()) throw ConfigError("make_synthetic_scene: degenerate bounds");
  if (cfg.min_count < 1 || cfg.max_count > 16 || cfg.min_count > cfg.max_count) {
    throw ConfigError("make_synthetic_scene: primitive count range must lie within [1, 16]");
  }
  const double fit = 0.5 * cfg.bounds.extent().minCoeff();
  if (cfg.max_size * 1.05 >= fit) throw ConfigError("make_synthetic_scene: primitives do not fit the bounds");
  CounterRng rng(derive_seed(seed, "synthetic_scene"));
  SyntheticScene out;
  out.scene.bounds = cfg.bounds;
  const int count = cfg.min_count + static_cast<int>(rng.below(cfg.max_count - cfg.min_count + 1));
  for (int n = 0; n < count; ++n) {
    Primitive best;
    for (int attempt = 0; attempt < 32; ++attempt) {
      Primitive p;
      p.shape = rng.bernoulli(0.5) ? Shape::kSphere : Shape::kBox;
      if (p.shape == Shape::kSphere) {
        p.radius = rng.uniform(cfg.min_size, cfg.max_size);
      } else {
        for (int a = 0; a < 3; ++a) p.half_extent[a] = rng.uniform(cfg.min_size, cfg.max_size);
      }
      const Vec3 h = p.box().extent() * 0.5;
      for (int a = 0; a < 3; ++a) {
        const double margin = h[a] + 0.02 * cfg.bounds.extent()[a];
        p.center[a] = rng.uniform(cfg.bounds.min[a] + margin, cfg.bounds.max[a] - margin);
      }
      p.sigma0 = rng.uniform(cfg.min_sigma, cfg.max_sigma);
      for (int a = 0; a < 3; ++a) p.albedo[a] = rng.uniform(0.1, 0.95);
      best = p;
      bool overlaps = false;
      const Bounds b = p.box();
      for (const auto& q : out.boxes) {
        if ((b.min.array() < q.max.array()).all() && (q.min.array() < b.max.array()).all()) overlaps = true;
      }
      if (!overlaps) break;
    }
    out.scene.primitives.push_back(best);
    out.labels.push_back(class_of(best.shape));
    out.boxes.push_back(best.box());
  }
  return out;
}

}  // namespace nerfmae::scene

#endif  // NERFMAE_SCENEFIELD_SCENE_HPP_
