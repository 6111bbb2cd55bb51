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


#ifndef NERFMAE_RECON_PRETRAIN_HPP_
#define NERFMAE_RECON_PRETRAIN_HPP_

#include <cmath>
#include <functional>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <vector>

#include "nerfmae/diffcore/optim.hpp"
#include "nerfmae/recon/augment.hpp"
#include "nerfmae/recon/decoder.hpp"
#include "nerfmae/recon/loss.hpp"

namespace nerfmae::recon {

struct TrainConfig {
  std::size_t epochs = 0;  // used when steps == 0
  std::size_t steps = 200;
  std::size_t batch = 1;
  double max_lr = 3e-4;
  double weight_decay = 1e-3;
  double clip = 0.1;
  double augment_probability = 0.5;
  double mask_ratio = 0.75;
  double delta = grid::kDefaultDelta;
  std::uint64_t seed = 0;

  std::size_t total_steps(std::size_t dataset_size) const {
    if (steps > 0) return steps;
    return epochs * ((dataset_size + batch - 1) / batch);
  }

  void validate() const {
    if (batch == 0) throw ConfigError("train: batch size must be positive");
    if (!(max_lr > 0)) throw ConfigError("train: max LR must be positive");
    if (!(clip > 0)) throw ConfigError("train: gradient clip must be positive");
    if (!(weight_decay >= 0)) throw ConfigError("train: weight decay must be >= 0");
    if (!(augment_probability >= 0 && augment_probability <= 1)) {
      throw ConfigError("train: augmentation probability must lie in [0, 1]");
    }
    if (steps == 0 && epochs == 0) throw ConfigError("train: set steps or epochs");
  }

  diff::OneCycleSchedule schedule(std::size_t dataset_size) const {
    return {max_lr, total_steps(dataset_size)};
  }
  diff::AdamConfig adam() const { return {0.9, 0.999, 1e-8, weight_decay}; }
};

struct LossRow {
  std::size_t step = 0;
  double lr = 0;
  double l_rad = 0;
  double l_alpha = 0;
  double total = 0;
  double grad_norm = 0;  // before clipping
};

/// Plain-text loss table: one header line, then one row per step.
inline void write_loss_table(std::ostream& os, const std::vector<LossRow>& rows) {
  os << "step\tlr\tL_rad\tL_alpha\ttotal\n";
  os << std::setprecision(9);
  for (const auto& r : rows) os << r.step << '\t' << r.lr << '\t' << r.l_rad << '\t' << r.l_alpha << '\t' << r.total << '\n';
}

/// Index of the dataset sample drawn at position `k` of the training stream:
/// a fresh permutation per pass over the data.
inline std::size_t stream_index(std::uint64_t seed, std::size_t k, std::size_t n) {
  const std::size_t pass = k / n;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(derive_seed(seed, "order", pass));
  for (std::size_t i = 0; i + 1 < n; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
  return order[k % n];
}

/// Masked, augmented view of one training sample.
struct MaskedSample {
  diff::NdArray<float> target;  // augmented, unmasked [4, H, W, D]
  diff::NdArray<float> input;   // target with masked voxels zeroed
  swin::MaskSpec mask;
};

inline MaskedSample make_masked_sample(const diff::NdArray<float>& grid, std::size_t patch, double ratio,
                                       double augment_probability, std::uint64_t seed, std::size_t k) {
  AugmentSample s{grid, {}, {}};
  AugmentConfig aug;
  aug.probability = augment_probability;
  const auto e = detail::spatial(grid);
  aug.rotations = e[0] == e[1] && e[1] == e[2];
  augment(s, aug, derive_seed(seed, "augment", k));
  MaskedSample out;
  out.mask = swin::mask_patches({e[0], e[1], e[2]}, patch, ratio, derive_seed(seed, "mask", k));
  out.input = s.grid;
  swin::zero_masked(out.input, out.mask.voxel_flags());
  out.target = std::move(s.grid);
  return out;
}

/// Masked-autoencoder pretraining. Resumes from `opt.steps()`; each step
/// draws fresh masks and augmentations, clips the global gradient norm and
/// takes one Adam step under the one-cycle schedule.
inline std::vector<LossRow> pretrain(MaskedAutoencoder<float>& model, const std::vector<diff::NdArray<float>>& grids,
                                     const TrainConfig& cfg, diff::Adam<float>& opt,
                                     const std::function<void(const LossRow&)>& on_step = {}) {
  cfg.validate();
  if (grids.empty()) throw DatasetError("pretrain: empty dataset");
  for (const auto& g : grids) {
    if (g.shape() != grids.front().shape()) throw DatasetError("pretrain: grids differ in resolution");
  }
  const auto sched = cfg.schedule(grids.size());
  const std::size_t total = sched.total_steps;
  std::vector<LossRow> history;
  for (std::size_t step = opt.steps(); step < total; ++step) {
    model.store().zero_grad();
    LossRow row;
    row.step = step;
    row.lr = sched.lr(step);
    Var<float> loss;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const std::size_t k = step * cfg.batch + b;
      const auto sample = make_masked_sample(grids[stream_index(cfg.seed, k, grids.size())], model.config().patch,
                                             cfg.mask_ratio, cfg.augment_probability, cfg.seed, k);
      auto flags = std::make_shared<std::vector<std::uint8_t>>(sample.mask.patch_flags());
      auto pred = model(diff::constant(sample.input), flags);
      auto lb = recon_loss(pred, sample.target, sample.mask, cfg.delta);
      row.l_rad += lb.l_rad / static_cast<double>(cfg.batch);
      row.l_alpha += lb.l_alpha / static_cast<double>(cfg.batch);
      loss = b == 0 ? lb.total : diff::add(loss, lb.total);
    }
    if (cfg.batch > 1) loss = diff::scale(loss, 1.0f / static_cast<float>(cfg.batch));
    row.total = static_cast<double>(loss.item());
    diff::backward(loss);
    row.grad_norm = diff::clip_grad_norm(model.store(), cfg.clip);
    opt.step(model.store(), row.lr);
    history.push_back(row);
    if (on_step) on_step(row);
  }
  return history;
}

/// Reconstruction quality over a fixed set of masks (no augmentation).
struct ReconEvaluation {
  double l_rad = 0, l_alpha = 0, total = 0;  // means over samples
  // Squared error over rgb of masked voxels with target alpha > delta plus
  // alpha of all masked voxels, pooled over samples.
  double mse = 0;
  // Same inclusion set, predicting the per-channel mean of the included
  // targets.
  double baseline_mse = 0;
  double psnr() const { return 10.0 * std::log10(1.0 / mse); }
  double baseline_psnr() const { return 10.0 * std::log10(1.0 / baseline_mse); }
};

inline ReconEvaluation evaluate_reconstruction(const MaskedAutoencoder<float>& model,
                                               const std::vector<diff::NdArray<float>>& grids, double ratio,
                                               std::uint64_t seed, double delta = grid::kDefaultDelta) {
  if (grids.empty()) throw DatasetError("evaluate: empty dataset");
  diff::NoGradGuard guard;
  ReconEvaluation ev;
  double se = 0, sum[4] = {0, 0, 0, 0}, sq[4] = {0, 0, 0, 0};
  std::size_t count[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < grids.size(); ++i) {
    const auto sample = make_masked_sample(grids[i], model.config().patch, ratio, 0.0, seed, i);
    auto flags = std::make_shared<std::vector<std::uint8_t>>(sample.mask.patch_flags());
    auto pred = model(diff::constant(sample.input), flags);
    const auto lb = recon_loss(pred, sample.target, sample.mask, delta);
    ev.l_rad += lb.l_rad;
    ev.l_alpha += lb.l_alpha;
    ev.total += static_cast<double>(lb.total.item());
    const auto voxels = sample.mask.voxel_flags();
    const std::size_t n = voxels.size();
    const auto& p = pred.value();
    const auto& t = sample.target;
    for (std::size_t v = 0; v < n; ++v) {
      if (!voxels[v]) continue;
      const bool occupied = t[3 * n + v] > delta;
      for (std::size_t c = 0; c < 4; ++c) {
        if (c < 3 && !occupied) continue;
        const double d = static_cast<double>(p[c * n + v]) - t[c * n + v];
        se += d * d;
        sum[c] += t[c * n + v];
        sq[c] += static_cast<double>(t[c * n + v]) * t[c * n + v];
        ++count[c];
      }
    }
  }
  const double m = static_cast<double>(grids.size());
  ev.l_rad /= m;
  ev.l_alpha /= m;
  ev.total /= m;
  std::size_t all = 0;
  double base = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    all += count[c];
    if (count[c]) base += sq[c] - sum[c] * sum[c] / static_cast<double>(count[c]);
  }
  if (all == 0) throw DomainError("evaluate: no masked voxels");
  ev.mse = se / static_cast<double>(all);
  ev.baseline_mse = base / static_cast<double>(all);
  return ev;
}

}  // namespace nerfmae::recon

#endif  // NERFMAE_RECON_PRETRAIN_HPP_
