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


#ifndef NERFMAE_METRICS_SCORES_HPP_
#define NERFMAE_METRICS_SCORES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nerfmae/metrics/box.hpp"

namespace nerfmae::metrics {

struct PsnrMse {
  double psnr = 0;  // +inf when mse is 0
  double mse = 0;
};

inline double psnr_from_mse(double mse) {
  if (mse < 0 || std::isnan(mse)) throw DomainError("psnr: mse must be >= 0");
  return mse == 0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
}

/// Mean squared error over the included elements (all when `include` is
/// empty) and the matching peak signal-to-noise ratio for unit peak.
inline PsnrMse psnr_mse_3d(std::span<const float> prediction, std::span<const float> target,
                           std::span<const std::uint8_t> include = {}) {
  if (prediction.size() != target.size() || (!include.empty() && include.size() != target.size())) {
    throw DimensionError("psnr_mse_3d: prediction, target and mask sizes differ");
  }
  double se = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!include.empty() && !include[i]) continue;
    const double p = prediction[i], t = target[i];
    if (!(p >= 0 && p <= 1 && t >= 0 && t <= 1)) throw DomainError("psnr_mse_3d: values must lie in [0, 1]");
    se += (p - t) * (p - t);
    ++n;
  }
  if (n == 0) throw DomainError("psnr_mse_3d: empty inclusion set");
  PsnrMse out;
  out.mse = se / static_cast<double>(n);
  out.psnr = psnr_from_mse(out.mse);
  return out;
}

struct ApRecall {
  double ap = 0;
  double recall = 0;
};

/// Pools detections from all scenes, ranks them by score (ties by scene,
/// then by detection index) and greedily matches each to the unmatched
/// ground truth of its scene with the highest IoU at or above `threshold`.
/// AP is the area under the all-point interpolated precision-recall curve.
inline ApRecall ap_recall(const std::vector<std::vector<Box3>>& detections,
                          const std::vector<std::vector<Box3>>& ground_truth, double threshold) {
  if (detections.size() != ground_truth.size()) throw DimensionError("ap_recall: scene counts differ");
  std::size_t total_gt = 0;
  for (const auto& g : ground_truth) total_gt += g.size();
  if (total_gt == 0) throw DomainError("ap_recall: no ground-truth boxes");
  struct Ranked {
    double score;
    std::size_t scene, index;
  };
  std::vector<Ranked> ranked;
  for (std::size_t s = 0; s < detections.size(); ++s) {
    for (std::size_t i = 0; i < detections[s].size(); ++i) {
      const double score = detections[s][i].score;
      if (!(score >= 0 && score <= 1)) throw DomainError("ap_recall: scores must lie in [0, 1]");
      ranked.push_back({score, s, i});
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
  std::vector<std::vector<bool>> used(ground_truth.size());
  for (std::size_t s = 0; s < ground_truth.size(); ++s) used[s].assign(ground_truth[s].size(), false);
  std::vector<double> precision, recall;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto& d = detections[ranked[r].scene][ranked[r].index];
    const auto& gts = ground_truth[ranked[r].scene];
    double best = -1;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[ranked[r].scene][j]) continue;
      const double iou = iou_aabb(d, gts[j]);
      if (iou >= threshold && iou > best) {
        best = iou;
        best_j = j;
      }
    }
    if (best >= 0) {
      used[ranked[r].scene][best_j] = true;
      ++hits;
    }
    precision.push_back(static_cast<double>(hits) / static_cast<double>(r + 1));
    recall.push_back(static_cast<double>(hits) / static_cast<double>(total_gt));
  }
  ApRecall out;
  out.recall = static_cast<double>(hits) / static_cast<double>(total_gt);
  double envelope = 0;
  for (std::size_t r = ranked.size(); r-- > 0;) {
    envelope = std::max(envelope, precision[r]);
    const double prev = r == 0 ? 0.0 : recall[r - 1];
    out.ap += (recall[r] - prev) * envelope;
  }
  return out;
}

/// counts[p][t]: voxels predicted as class p with true class t.
struct ConfusionMatrix {
  std::size_t n = 0;
  std::vector<std::vector<std::uint64_t>> counts;

  explicit ConfusionMatrix(std::size_t classes = 2)
      : n(classes), counts(classes, std::vector<std::uint64_t>(classes, 0)) {}

  void add(std::size_t predicted, std::size_t truth, std::uint64_t count = 1) {
    if (predicted >= n || truth >= n) throw DomainError("confusion: class index out of range");
    counts[predicted][truth] += count;
  }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
    return t;
  }
};

/// Confusion over voxels with a nonzero true label; labels 1..n map to
/// classes 0..n-1.
inline ConfusionMatrix confusion_from_labels(std::span<const std::int32_t> predicted,
                                             std::span<const std::int32_t> truth, std::size_t classes) {
  if (predicted.size() != truth.size()) throw DimensionError("confusion: label counts differ");
  ConfusionMatrix m(classes);
  for (std::size_t v = 0; v < truth.size(); ++v) {
    if (truth[v] <= 0) continue;
    if (predicted[v] <= 0) throw DomainError("confusion: predicted label must be a class");
    m.add(static_cast<std::size_t>(predicted[v] - 1), static_cast<std::size_t>(truth[v] - 1));
  }
  return m;
}

struct SegmentationScores {
  double miou = 0;
  double macc = 0;
  double acc = 0;
};

/// Per-class IoU TP / (TP + FP + FN), averaged over classes that appear in
/// prediction or truth; mAcc averages per-class recall over classes present
/// in the truth; Acc is trace / total.
inline SegmentationScores segmentation_scores(const ConfusionMatrix& m) {
  if (m.n < 2) throw DomainError("segmentation_scores: need at least 2 classes");
  const std::uint64_t total = m.total();
  if (total == 0) throw DomainError("segmentation_scores: empty confusion matrix");
  SegmentationScores s;
  std::size_t iou_classes = 0, acc_classes = 0;
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < m.n; ++c) {
    const std::uint64_t tp = m.counts[c][c];
    std::uint64_t pred = 0, truth = 0;
    for (std::size_t o = 0; o < m.n; ++o) {
      pred += m.counts[c][o];
      truth += m.counts[o][c];
    }
    trace += tp;
    const std::uint64_t uni = pred + truth - tp;
    if (uni > 0) {
      s.miou += static_cast<double>(tp) / static_cast<double>(uni);
      ++iou_classes;
    }
    if (truth > 0) {
      s.macc += static_cast<double>(tp) / static_cast<double>(truth);
      ++acc_classes;
    }
  }
  s.miou /= static_cast<double>(iou_classes);
  s.macc /= static_cast<double>(acc_classes);
  s.acc = static_cast<double>(trace) / static_cast<double>(total);
  return s;
}

/// The fixed report keys, in output order.
inline const std::vector<std::string>& report_keys() {
  static const std::vector<std::string> keys{"psnr_3d", "mse_3d", "ap25",  "ap50", "recall25",
                                             "recall50", "miou",  "macc", "acc"};
  return keys;
}

/// Flat metrics report; keys outside `report_keys()` are rejected and
/// missing keys are written as nan.
struct MetricsReport {
  std::map<std::string, double> values;

  void set(const std::string& key, double v) {
    const auto& keys = report_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ContractError("metrics: unknown key " + key);
    values[key] = v;
  }
  double get(const std::string& key) const {
    auto it = values.find(key);
    return it == values.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
  }

  /// key=value lines.
  void write_text(std::ostream& os) const {
    os.precision(10);
    for (const auto& k : report_keys()) os << k << '=' << get(k) << '\n';
  }
  /// Tab-separated header row and value row.
  void write_table(std::ostream& os) const {
    os.precision(10);
    const auto& keys = report_keys();
    for (std::size_t i = 0; i < keys.size(); ++i) os << (i ? "\t" : "") << keys[i];
    os << '\n';
    for (std::size_t i = 0; i < keys.size(); ++i) os << (i ? "\t" : "") << get(keys[i]);
    os << '\n';
  }
};

}  // namespace nerfmae::metrics

#endif  // NERFMAE_METRICS_SCORES_HPP_
