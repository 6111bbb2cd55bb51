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


#ifndef NERFMAE_SCENEFIELD_GEOMETRY_HPP_
#define NERFMAE_SCENEFIELD_GEOMETRY_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "nerfmae/errors.hpp"

namespace nerfmae::scene {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Axis-aligned box in scene units.
struct Bounds {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  double diameter() const { return extent().norm(); }
  bool valid() const { return (max.array() > min.array()).all(); }
  bool contains(const Vec3& x) const { return (x.array() >= min.array()).all() && (x.array() <= max.array()).all(); }
};

inline Bounds cube_bounds(double half) { return {Vec3::Constant(-half), Vec3::Constant(half)}; }

/// Pinhole camera looking down its local -z axis with +y up. `rotation` and
/// `translation` map camera coordinates to world coordinates.
struct Camera {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 1, height = 1;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  const Vec3& position() const { return translation; }
  Vec3 optical_axis() const { return -rotation.col(2); }

  void validate(double tol = 1e-6) const {
    if (!(fx > 0) || !(fy > 0)) throw ConfigError("camera: focal lengths must be positive");
    if (width < 1 || height < 1) throw ConfigError("camera: image size must be positive");
    if (!(rotation.transpose() * rotation).isApprox(Mat3::Identity(), tol) ||
        std::abs(rotation.determinant() - 1.0) > tol) {
      throw ConfigError("camera: rotation is not orthonormal with determinant +1");
    }
  }

  /// Unit world-space direction through the center of pixel (u, v).
  Vec3 pixel_direction(double u, double v) const {
    const Vec3 d_cam((u + 0.5 - cx) / fx, -(v + 0.5 - cy) / fy, -1.0);
    return (rotation * d_cam).normalized();
  }
};

/// Camera at `eye` whose optical axis points at `target`.
inline Camera look_at(const Vec3& eye, const Vec3& target, int width, int height, double fov_x,
                      const Vec3& up = Vec3::UnitZ()) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = 0.5 * width / std::tan(0.5 * fov_x);
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  const Vec3 f = (target - eye).normalized();
  Vec3 r = f.cross(up);
  if (r.norm() < 1e-9) r = f.cross(Vec3::UnitY());
  r.normalize();
  const Vec3 u = r.cross(f);
  cam.rotation.col(0) = r;
  cam.rotation.col(1) = u;
  cam.rotation.col(2) = -f;
  cam.translation = eye;
  return cam;
}

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();
  double t_near = 0;
  double t_far = 1;

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Slab intersection of a ray with a box; returns (t_enter, t_exit).
inline std::optional<std::pair<double, double>> intersect_box(const Vec3& origin, const Vec3& dir,
                                                              const Bounds& box) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < box.min[a] || origin[a] > box.max[a]) return std::nullopt;
      continue;
    }
    double ta = (box.min[a] - origin[a]) / dir[a];
    double tb = (box.max[a] - origin[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t1 <= t0) return std::nullopt;
  return std::make_pair(t0, t1);
}

inline constexpr double kMinNear = 1e-3;

/// Ray through a pixel, bounded by the scene box. The near bound is clamped
/// to 1e-3 and the marched length to the box diameter. Returns nothing when
/// the ray misses the box.
inline std::optional<Ray> bounded_ray(const Vec3& origin, const Vec3& dir, const Bounds& box) {
  auto hit = intersect_box(origin, dir, box);
  if (!hit) return std::nullopt;
  Ray ray{origin, dir, std::max(hit->first, kMinNear), 0};
  ray.t_far = std::min(hit->second, ray.t_near + box.diameter());
  if (!(ray.t_far > ray.t_near)) return std::nullopt;
  return ray;
}

inline std::optional<Ray> camera_ray(const Camera& cam, double u, double v, const Bounds& box) {
  return bounded_ray(cam.position(), cam.pixel_direction(u, v), box);
}

}  // namespace nerfmae::scene

#endif  // NERFMAE_SCENEFIELD_GEOMETRY_HPP_
