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


#ifndef NERFMAE_SCENEFIELD_RENDER_HPP_
#define NERFMAE_SCENEFIELD_RENDER_HPP_

#include <cmath>
#include <numbers>
#include <vector>

#include "nerfmae/rng.hpp"
#include "nerfmae/scenefield/scene.hpp"

namespace nerfmae::scene {

struct RenderConfig {
  int samples_per_ray = 64;
  Vec3 background = Vec3::Zero();
  bool jitter = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (samples_per_ray < 2) throw ConfigError("render: samples_per_ray must be >= 2");
  }
};

struct RenderResult {
  Vec3 rgb = Vec3::Zero();
  double weight_sum = 0;          // sum_i T_i alpha_i
  double final_transmittance = 1;
};

/// Sample positions along [t_near, t_far]: n equal strata, each sampled at
/// its start or, with jitter, at a uniform offset inside it. The spacing of
/// sample i is t_{i+1} - t_i with t_n = t_far.
inline std::vector<double> sample_depths(const Ray& ray, int n, CounterRng* jitter) {
  std::vector<double> t(n + 1);
  const double step = (ray.t_far - ray.t_near) / n;
  for (int i = 0; i < n; ++i) t[i] = ray.t_near + (i + (jitter ? jitter->uniform() : 0.0)) * step;
  t[n] = ray.t_far;
  return t;
}

/// Front-to-back alpha compositing of `field` along `ray`. `jitter_rng`
/// overrides the config's own jitter stream when given.
template <typename Field>
RenderResult render_ray(const Field& field, const Ray& ray, const RenderConfig& cfg,
                        CounterRng* jitter_rng = nullptr) {
  cfg.validate();
  CounterRng own(cfg.seed);
  CounterRng* rng = cfg.jitter ? (jitter_rng ? jitter_rng : &own) : nullptr;
  const auto t = sample_depths(ray, cfg.samples_per_ray, rng);
  RenderResult out;
  double trans = 1.0;
  for (int i = 0; i < cfg.samples_per_ray; ++i) {
    const FieldSample s = field.query(ray.at(t[i]), ray.direction);
    const double alpha = 1.0 - std::exp(-s.sigma * (t[i + 1] - t[i]));
    const double w = trans * alpha;
    out.rgb += w * s.rgb;
    out.weight_sum += w;
    trans *= 1.0 - alpha;
  }
  out.final_transmittance = trans;
  out.rgb += trans * cfg.background;
  return out;
}

/// Row-major H x W image with values in [0, 1]. `rgb` holds straight
/// (unpremultiplied) color; the optional `alpha` holds accumulated opacity.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;
  std::vector<float> alpha;

  Image() = default;
  Image(int w, int h, bool with_alpha = false)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0.0f) {
    if (with_alpha) alpha.assign(static_cast<std::size_t>(w) * h, 0.0f);
  }
  bool has_alpha() const { return !alpha.empty(); }
  std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * width + u; }
  Vec3 pixel(int u, int v) const {
    const std::size_t o = index(u, v) * 3;
    return {rgb[o], rgb[o + 1], rgb[o + 2]};
  }
  void set(int u, int v, const Vec3& c) {
    const std::size_t o = index(u, v) * 3;
    for (int a = 0; a < 3; ++a) rgb[o + a] = static_cast<float>(c[a]);
  }
  /// Pixel color composited over `background` (the stored color when the
  /// image has no alpha).
  Vec3 over(int u, int v, const Vec3& background) const {
    if (!has_alpha()) return pixel(u, v);
    const double a = alpha[index(u, v)];
    return a * pixel(u, v) + (1.0 - a) * background;
  }
};

/// Renders every pixel. With `with_alpha` the image stores straight color and
/// opacity; otherwise color composited over the config's background.
template <typename Field>
Image render_image(const Field& field, const Camera& cam, const Bounds& bounds, const RenderConfig& cfg,
                   bool with_alpha = false) {
  Image img(cam.width, cam.height, with_alpha);
  RenderConfig black = cfg;
  black.background = Vec3::Zero();
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const auto ray = camera_ray(cam, u, v, bounds);
      if (!with_alpha) {
        img.set(u, v, ray ? render_ray(field, *ray, cfg).rgb : cfg.background);
        continue;
      }
      if (!ray) continue;
      const auto r = render_ray(field, *ray, black);
      const double a = 1.0 - r.final_transmittance;
      img.alpha[img.index(u, v)] = static_cast<float>(a);
      if (a > 0) img.set(u, v, (r.rgb / a).cwiseMin(1.0));
    }
  }
  return img;
}

struct TrajectoryConfig {
  int width = 64;
  int height = 64;
  double radius_factor = 1.5;       // times the bounds' half diagonal
  double min_elevation = -0.35;     // radians
  double max_elevation = 1.0;
};

/// Cameras on a sphere around the bounds center, evenly spread in azimuth
/// with jittered elevation, each looking at the center. Each camera's focal
/// length is chosen so the projected bounds just fit the image.
inline std::vector<Camera> sample_camera_trajectory(const Bounds& bounds, int count, std::uint64_t seed,
                                                    const TrajectoryConfig& cfg = {}) {
  if (count < 2) throw ConfigError("sample_camera_trajectory: need at least 2 cameras");
  if (!bounds.valid()) throw ConfigError("sample_camera_trajectory: degenerate bounds");
  CounterRng rng(derive_seed(seed, "trajectory"));
  const Vec3 c = bounds.center();
  const double inner = 0.5 * bounds.diameter();
  const double radius = cfg.radius_factor * inner;
  std::vector<Camera> cams;
  cams.reserve(count);
  const double phase = rng.uniform(0, 2 * std::numbers::pi);
  for (int i = 0; i < count; ++i) {
    const double az = phase + 2 * std::numbers::pi * (i + 0.3 * rng.uniform(-1, 1)) / count;
    const double el = rng.uniform(cfg.min_elevation, cfg.max_elevation);
    const Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    Camera cam = look_at(c + radius * dir, c, cfg.width, cfg.height, std::numbers::pi / 2);
    double reach = 0;
    for (int corner = 0; corner < 8; ++corner) {
      const Vec3 p((corner & 1) ? bounds.max[0] : bounds.min[0], (corner & 2) ? bounds.max[1] : bounds.min[1],
                   (corner & 4) ? bounds.max[2] : bounds.min[2]);
      const Vec3 local = cam.rotation.transpose() * (p - cam.position());
      reach = std::max({reach, std::abs(local[0] / local[2]), std::abs(local[1] / local[2])});
    }
    cam.fx = 0.5 * cfg.width / (reach * 1.02);
    cam.fy = 0.5 * cfg.height / (reach * 1.02);
    cams.push_back(cam);
  }
  return cams;
}

}  // namespace nerfmae::scene

#endif  // NERFMAE_SCENEFIELD_RENDER_HPP_
