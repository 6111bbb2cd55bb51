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


#ifndef NERFMAE_DOWNSTREAM_DETECTION_HPP_
#define NERFMAE_DOWNSTREAM_DETECTION_HPP_

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "nerfmae/diffcore/ops_loss.hpp"
#include "nerfmae/metrics/box.hpp"
#include "nerfmae/recon/decoder.hpp"

namespace nerfmae::downstream {

using diff::NdArray;
using diff::Var;
using metrics::Box3;

/// Per-voxel regression targets. Voxel (i, j, k) has center
/// (i + 0.5, j + 0.5, k + 0.5) in grid coordinates.
struct BoxTargets {
  diff::Extent3 extent{};
  std::vector<std::uint8_t> positive;
  std::vector<int> box;              // assigned box index, -1 for negatives
  std::vector<double> offsets;       // [voxels, 6]: (x0, y0, z0, x1, y1, z1)

  std::size_t positives() const { return static_cast<std::size_t>(std::count(positive.begin(), positive.end(), 1)); }
};

inline Eigen::Vector3d voxel_center(std::size_t i, std::size_t j, std::size_t k) {
  return {static_cast<double>(i) + 0.5, static_cast<double>(j) + 0.5, static_cast<double>(k) + 0.5};
}

/// A voxel is positive when its center lies inside a box; overlaps go to the
/// smallest box (then the lowest index). Offsets are the distances from the
/// center to the six faces of that box.
inline BoxTargets encode_box_targets(const std::vector<Box3>& boxes, const diff::Extent3& extent) {
  BoxTargets t;
  t.extent = extent;
  const std::size_t n = extent[0] * extent[1] * extent[2];
  t.positive.assign(n, 0);
  t.box.assign(n, -1);
  t.offsets.assign(6 * n, 0.0);
  std::size_t v = 0;
  for (std::size_t i = 0; i < extent[0]; ++i) {
    for (std::size_t j = 0; j < extent[1]; ++j) {
      for (std::size_t k = 0; k < extent[2]; ++k, ++v) {
        const Eigen::Vector3d c = voxel_center(i, j, k);
        int best = -1;
        for (std::size_t b = 0; b < boxes.size(); ++b) {
          if (!boxes[b].contains(c)) continue;
          if (best < 0 || boxes[b].volume() < boxes[static_cast<std::size_t>(best)].volume()) best = static_cast<int>(b);
        }
        if (best < 0) continue;
        t.positive[v] = 1;
        t.box[v] = best;
        const auto& b = boxes[static_cast<std::size_t>(best)];
        const Eigen::Vector3d lo = c - b.lo(), hi = b.hi() - c;
        for (int a = 0; a < 3; ++a) {
          t.offsets[6 * v + a] = lo[a];
          t.offsets[6 * v + 3 + a] = hi[a];
        }
      }
    }
  }
  return t;
}

/// Box from a voxel center and its six face distances.
inline Box3 decode_box(const Eigen::Vector3d& center, const double* t, double score = 1.0, int class_id = 0) {
  return Box3::from_corners(center - Eigen::Vector3d(t[0], t[1], t[2]), center + Eigen::Vector3d(t[3], t[4], t[5]),
                            score, class_id);
}

struct DetectionConfig {
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double offset_scale = 4.0;  // offsets = offset_scale * softplus(raw)
  double score_threshold = 0.3;
  double nms_iou = 0.5;
  std::size_t top_k = 1000;
};

/// Detection head: the reconstruction decoder producing 8 channels per
/// voxel: objectness logit c, six raw offsets, auxiliary objectness logit p.
template <typename T>
class DetectionHead {
 public:
  DetectionHead(diff::ParameterStore<T>& store, const swin::EncoderConfig& enc, DetectionConfig cfg = {})
      : cfg_(cfg), decoder_(store, "head.detect", enc, {8, 8, false, false}) {}

  /// Returns [8, H, W, D]; channels 1..6 are already non-negative offsets.
  Var<T> operator()(const swin::FeaturePyramid<T>& f) const {
    auto raw = decoder_(f);
    const auto& s = raw.shape();
    const std::size_t n = s[1] * s[2] * s[3];
    auto flat = diff::reshape(raw, {8, n});
    auto offsets = diff::scale(diff::softplus(diff::slice0(flat, 1, 6)), static_cast<T>(cfg_.offset_scale));
    return diff::reshape(diff::concat0<T>({diff::slice0(flat, 0, 1), offsets, diff::slice0(flat, 7, 1)}), s);
  }

  const DetectionConfig& config() const { return cfg_; }

 private:
  DetectionConfig cfg_;
  recon::PyramidDecoder<T> decoder_;
};

struct DetectionLoss {
  double focal = 0, iou = 0, aux = 0;
};

/// Focal loss on objectness over positives count, IoU loss on positive
/// voxels over positives count, and BCE of the auxiliary map over all
/// voxels.
template <typename T>
Var<T> detection_loss(const Var<T>& output, const BoxTargets& targets, const DetectionConfig& cfg = {},
                      DetectionLoss* parts = nullptr) {
  const auto& s = output.shape();
  if (s.size() != 4 || s[0] != 8 || diff::Extent3{s[1], s[2], s[3]} != targets.extent) {
    throw DimensionError("detection_loss: output " + diff::shape_str(s) + " does not match the targets");
  }
  const std::size_t n = s[1] * s[2] * s[3];
  auto flat = diff::reshape(output, {8, n});
  auto labels = std::make_shared<NdArray<T>>(diff::Shape{1, n});
  auto offset_target = std::make_shared<NdArray<T>>(diff::Shape{n, 6});
  auto pos_weight = std::make_shared<std::vector<T>>(n, T(0));
  for (std::size_t v = 0; v < n; ++v) {
    if (!targets.positive[v]) {
      for (int c = 0; c < 6; ++c) (*offset_target)[6 * v + c] = T(1);  // unused
      continue;
    }
    (*labels)[v] = T(1);
    (*pos_weight)[v] = T(1);
    for (int c = 0; c < 6; ++c) (*offset_target)[6 * v + c] = static_cast<T>(targets.offsets[6 * v + c]);
  }
  const T npos = static_cast<T>(std::max<std::size_t>(targets.positives(), 1));
  auto focal = diff::sigmoid_focal_loss<T>(diff::slice0(flat, 0, 1), labels, static_cast<T>(cfg.focal_alpha),
                                           static_cast<T>(cfg.focal_gamma));
  auto offsets = diff::permute(diff::slice0(flat, 1, 6), {1, 0});
  auto iou = diff::offset_iou_loss<T>(offsets, offset_target, pos_weight);
  auto aux = diff::bce_with_logits<T>(diff::slice0(flat, 7, 1), labels);
  auto f = diff::scale(focal, T(1) / npos);
  auto i = diff::scale(iou, T(1) / npos);
  auto a = diff::scale(aux, T(1) / static_cast<T>(n));
  if (parts) *parts = {static_cast<double>(f.item()), static_cast<double>(i.item()), static_cast<double>(a.item())};
  return diff::add(diff::add(f, i), a);
}

/// Greedy non-maximum suppression: boxes sorted by score (ties by input
/// order) suppress later boxes overlapping them with IoU >= `iou`.
inline std::vector<Box3> non_max_suppression(std::vector<Box3> boxes, double iou) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
  std::vector<Box3> kept;
  for (auto i : order) {
    bool keep = true;
    for (const auto& k : kept) {
      if (metrics::iou_aabb(boxes[i], k) >= iou) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(boxes[i]);
  }
  return kept;
}

/// Decodes the head output into scored boxes: sigmoid(c) above the
/// threshold, the top-k voxels by score, then NMS.
template <typename T>
std::vector<Box3> detect(const NdArray<T>& output, const DetectionConfig& cfg = {}) {
  const auto& s = output.shape();
  if (s.size() != 4 || s[0] != 8) throw DimensionError("detect: expected [8, H, W, D]");
  const std::size_t n = s[1] * s[2] * s[3];
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t v = 0; v < n; ++v) {
    const double score = 1.0 / (1.0 + std::exp(-static_cast<double>(output[v])));
    if (score >= cfg.score_threshold) cand.emplace_back(score, v);
  }
  std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  if (cand.size() > cfg.top_k) cand.resize(cfg.top_k);
  std::vector<Box3> boxes;
  for (const auto& [score, v] : cand) {
    double t[6];
    for (int c = 0; c < 6; ++c) t[c] = static_cast<double>(output[(1 + c) * n + v]);
    if (t[0] + t[3] <= 0 || t[1] + t[4] <= 0 || t[2] + t[5] <= 0) continue;
    const std::size_t i = v / (s[2] * s[3]), j = (v / s[3]) % s[2], k = v % s[3];
    boxes.push_back(decode_box(voxel_center(i, j, k), t, score));
  }
  return non_max_suppression(std::move(boxes), cfg.nms_iou);
}

}  // namespace nerfmae::downstream

#endif  // NERFMAE_DOWNSTREAM_DETECTION_HPP_
