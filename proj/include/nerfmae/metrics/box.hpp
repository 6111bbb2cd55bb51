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


#ifndef NERFMAE_METRICS_BOX_HPP_
#define NERFMAE_METRICS_BOX_HPP_

#include <Eigen/Core>
#include <algorithm>

#include "nerfmae/errors.hpp"

namespace nerfmae::metrics {

/// Axis-aligned box in grid coordinates, with a detection score and class.
struct Box3 {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d extents = Eigen::Vector3d::Ones();
  double score = 1.0;
  int class_id = 0;

  static Box3 from_corners(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, double score = 1.0,
                           int class_id = 0) {
    return {0.5 * (lo + hi), hi - lo, score, class_id};
  }
  Eigen::Vector3d lo() const { return center - 0.5 * extents; }
  Eigen::Vector3d hi() const { return center + 0.5 * extents; }
  double volume() const { return extents.prod(); }
  bool contains(const Eigen::Vector3d& p) const {
    return ((p - center).cwiseAbs().array() <= 0.5 * extents.array()).all();
  }
};

/// Intersection volume over union volume of two axis-aligned boxes.
inline double iou_aabb(const Box3& a, const Box3& b) {
  if ((a.extents.array() <= 0).any() || (b.extents.array() <= 0).any()) {
    throw DomainError("iou_aabb: box extents must be positive");
  }
  double inter = 1.0;
  for (int i = 0; i < 3; ++i) {
    const double w = std::min(a.hi()[i], b.hi()[i]) - std::max(a.lo()[i], b.lo()[i]);
    if (w <= 0) return 0.0;
    inter *= w;
  }
  return inter / (a.volume() + b.volume() - inter);
}

}  // namespace nerfmae::metrics

#endif  // NERFMAE_METRICS_BOX_HPP_
