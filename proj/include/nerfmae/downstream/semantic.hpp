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


#ifndef NERFMAE_DOWNSTREAM_SEMANTIC_HPP_
#define NERFMAE_DOWNSTREAM_SEMANTIC_HPP_

#include <cmath>
#include <memory>
#include <vector>

#include "nerfmae/diffcore/ops_loss.hpp"
#include "nerfmae/recon/decoder.hpp"

namespace nerfmae::downstream {

using diff::NdArray;
using diff::Var;

inline constexpr double kOccupancyThreshold = 0.01;

/// Per-class weights w_c = 1 / ln(1.02 + p_c), where p_c is the frequency of
/// class c + 1 among occupied labelled voxels of the training split.
inline std::vector<double> class_weights(const std::vector<const std::vector<std::int32_t>*>& labels,
                                         const std::vector<const std::vector<float>*>& alphas, std::size_t classes) {
  if (labels.size() != alphas.size()) throw DimensionError("class_weights: label and alpha counts differ");
  std::vector<double> count(classes, 0.0);
  double total = 0;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    const auto& l = *labels[s];
    const auto& a = *alphas[s];
    if (l.size() != a.size()) throw DimensionError("class_weights: label grid and alpha sizes differ");
    for (std::size_t v = 0; v < l.size(); ++v) {
      if (l[v] < 1 || a[v] <= kOccupancyThreshold) continue;
      if (static_cast<std::size_t>(l[v]) > classes) throw DomainError("class_weights: label out of range");
      count[static_cast<std::size_t>(l[v] - 1)] += 1;
      total += 1;
    }
  }
  std::vector<double> w(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const double p = total > 0 ? count[c] / total : 0.0;
    w[c] = 1.0 / std::log(1.02 + p);
  }
  return w;
}

/// Logits [n, H, W, D] -> [H * W * D, n].
template <typename T>
Var<T> voxel_rows(const Var<T>& logits) {
  const auto& s = logits.shape();
  if (s.size() != 4) throw DimensionError("voxel_rows: expected [C, H, W, D]");
  return diff::permute(diff::reshape(logits, {s[0], s[1] * s[2] * s[3]}), {1, 0});
}

/// Weighted cross-entropy averaged (by total weight) over voxels with
/// alpha > 0.01 and a nonzero label; label c is logit channel c - 1.
template <typename T>
Var<T> semantic_loss(const Var<T>& logits, const std::vector<std::int32_t>& labels, const std::vector<float>& alpha,
                     const std::vector<double>& weights) {
  const auto& s = logits.shape();
  if (s.size() != 4 || s[0] < 2) throw DimensionError("semantic_loss: expected [n >= 2, H, W, D] logits");
  const std::size_t n = s[1] * s[2] * s[3];
  if (labels.size() != n || alpha.size() != n) throw DimensionError("semantic_loss: label grid shape mismatch");
  if (weights.size() != s[0]) throw DimensionError("semantic_loss: one weight per class expected");
  auto idx = std::make_shared<std::vector<std::int32_t>>(n, -1);
  auto w = std::make_shared<std::vector<T>>(n, T(0));
  double total = 0;
  for (std::size_t v = 0; v < n; ++v) {
    if (labels[v] < 1 || alpha[v] <= kOccupancyThreshold) continue;
    if (static_cast<std::size_t>(labels[v]) > s[0]) throw DomainError("semantic_loss: label out of range");
    (*idx)[v] = labels[v] - 1;
    (*w)[v] = static_cast<T>(weights[static_cast<std::size_t>(labels[v] - 1)]);
    total += static_cast<double>((*w)[v]);
  }
  if (total <= 0) throw DomainError("semantic_loss: every voxel is masked out");
  return diff::scale(diff::softmax_cross_entropy<T>(voxel_rows(logits), idx, w), static_cast<T>(1.0 / total));
}

/// Most likely class label (1..n) for every voxel.
template <typename T>
std::vector<std::int32_t> predict_labels(const NdArray<T>& logits) {
  const auto& s = logits.shape();
  const std::size_t n = s[1] * s[2] * s[3];
  std::vector<std::int32_t> out(n, 1);
  for (std::size_t v = 0; v < n; ++v) {
    T best = logits[v];
    for (std::size_t c = 1; c < s[0]; ++c) {
      if (logits[c * n + v] > best) {
        best = logits[c * n + v];
        out[v] = static_cast<std::int32_t>(c + 1);
      }
    }
  }
  return out;
}

/// Voxel-labelling head: the reconstruction decoder with an extra skip from
/// the stage-1 embedding and n linear output channels.
template <typename T>
class SemanticHead {
 public:
  SemanticHead(diff::ParameterStore<T>& store, const swin::EncoderConfig& enc, std::size_t classes)
      : decoder_(store, "head.semantic", enc, {classes, 8, true, false}) {
    if (classes < 2) throw ConfigError("semantic head: need at least 2 classes");
  }
  Var<T> operator()(const swin::FeaturePyramid<T>& f) const { return decoder_(f); }

 private:
  recon::PyramidDecoder<T> decoder_;
};

}  // namespace nerfmae::downstream

#endif  // NERFMAE_DOWNSTREAM_SEMANTIC_HPP_
