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


#ifndef NERFMAE_DOWNSTREAM_FINETUNE_HPP_
#define NERFMAE_DOWNSTREAM_FINETUNE_HPP_

#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "nerfmae/diffcore/optim.hpp"
#include "nerfmae/downstream/detection.hpp"
#include "nerfmae/downstream/semantic.hpp"
#include "nerfmae/downstream/superres.hpp"
#include "nerfmae/gridextract/grid.hpp"
#include "nerfmae/metrics/scores.hpp"
#include "nerfmae/recon/augment.hpp"
#include "nerfmae/recon/pretrain.hpp"

namespace nerfmae::downstream {

enum class Task { kLabel, kSuperRes, kDetect };

inline std::string task_name(Task t) {
  switch (t) {
    case Task::kLabel:
      return "label";
    case Task::kSuperRes:
      return "sr";
    case Task::kDetect:
      return "detect";
  }
  return "?";
}

inline Task parse_task(const std::string& s) {
  if (s == "label") return Task::kLabel;
  if (s == "sr") return Task::kSuperRes;
  if (s == "detect") return Task::kDetect;
  throw ConfigError("unknown task '" + s + "' (expected label, sr or detect)");
}

struct TaskConfig {
  Task task = Task::kLabel;
  std::size_t classes = 2;
  double sr_factor = 2.4;
  DetectionConfig detection;
  std::size_t epochs = 60;
  std::size_t batch = 1;
  double max_lr = 3e-4;
  double weight_decay = 1e-3;
  double clip = 0.1;
  double augment_probability = 0.5;
  double head_init_std = 0.02;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs == 0 || batch == 0) throw ConfigError("finetune: epochs and batch must be positive");
    if (!(max_lr > 0) || !(clip > 0)) throw ConfigError("finetune: LR and clip must be positive");
    if (task == Task::kLabel && classes < 2) throw ConfigError("finetune: labelling needs at least 2 classes");
    if (task == Task::kSuperRes) superres_extent(2, sr_factor);
  }
};

/// One labelled scene: the radiance grid [4, H, W, D], voxel labels (0 =
/// empty), boxes in grid coordinates and, for super-resolution, the
/// high-resolution target grid.
struct LabeledScene {
  NdArray<float> grid;
  std::vector<std::int32_t> labels;
  std::vector<Box3> boxes;
  NdArray<float> hires;
};

/// Boxes of a synthetic scene in the grid coordinates of `spec`.
inline std::vector<Box3> grid_boxes(const scene::SyntheticScene& s, const grid::GridSpec& spec) {
  std::vector<Box3> out;
  for (std::size_t b = 0; b < s.boxes.size(); ++b) {
    Eigen::Vector3d lo, hi;
    for (int a = 0; a < 3; ++a) {
      const double scale = static_cast<double>(spec.resolution[a]) / (spec.bounds.max[a] - spec.bounds.min[a]);
      lo[a] = (s.boxes[b].min[a] - spec.bounds.min[a]) * scale;
      hi[a] = (s.boxes[b].max[a] - spec.bounds.min[a]) * scale;
    }
    out.push_back(Box3::from_corners(lo, hi, 1.0, s.labels[b]));
  }
  return out;
}

/// Ground-truth labelled scene from the analytic synthetic scene `seed`.
inline LabeledScene make_labeled_scene(std::uint64_t seed, std::size_t resolution, double sr_factor = 0.0) {
  const auto s = scene::make_synthetic_scene(seed);
  grid::GridSpec spec;
  spec.resolution = {resolution, resolution, resolution};
  spec.bounds = s.scene.bounds;
  LabeledScene out;
  out.grid = swin::channel_first<float>(grid::ground_truth_grid(s.scene, spec));
  out.labels = grid::label_grid(s, spec).labels;
  out.boxes = grid_boxes(s, spec);
  if (sr_factor > 0) {
    auto hi = spec;
    const std::size_t e = superres_extent(resolution, sr_factor);
    hi.resolution = {e, e, e};
    out.hires = swin::channel_first<float>(grid::ground_truth_grid(s.scene, hi));
  }
  return out;
}

/// Encoder plus one task head; owns its parameters. Encoder parameters are
/// named "encoder.*" as in pretraining, head parameters "head.*".
template <typename T>
class TaskModel {
 public:
  TaskModel(const swin::EncoderConfig& enc, const TaskConfig& cfg) : cfg_(cfg), encoder_(store_, enc, "encoder") {
    cfg.validate();
    switch (cfg.task) {
      case Task::kLabel:
        semantic_ = std::make_unique<SemanticHead<T>>(store_, enc, cfg.classes);
        break;
      case Task::kSuperRes:
        superres_ = std::make_unique<SuperResHead<T>>(store_, enc, cfg.sr_factor);
        break;
      case Task::kDetect:
        detection_ = std::make_unique<DetectionHead<T>>(store_, enc, cfg.detection);
        break;
    }
  }
  TaskModel(const TaskModel&) = delete;
  TaskModel& operator=(const TaskModel&) = delete;

  /// grid: unmasked [4, H, W, D].
  Var<T> operator()(const Var<T>& grid) const {
    const auto f = encoder_(grid);
    if (semantic_) return (*semantic_)(f);
    if (superres_) return (*superres_)(f);
    return (*detection_)(f);
  }

  /// Truncated-normal init of every parameter (scratch) or of the head only.
  void initialize(std::uint64_t seed, bool heads_only) {
    for (auto& p : store_.all()) {
      if (!heads_only || p.name.rfind("head.", 0) == 0) diff::init_parameter(p, seed, cfg_.head_init_std);
    }
  }

  diff::ParameterStore<T>& store() { return store_; }
  const diff::ParameterStore<T>& store() const { return store_; }
  const TaskConfig& config() const { return cfg_; }
  const swin::EncoderConfig& encoder_config() const { return encoder_.config(); }

 private:
  TaskConfig cfg_;
  diff::ParameterStore<T> store_;
  swin::SwinEncoder<T> encoder_;
  std::unique_ptr<SemanticHead<T>> semantic_;
  std::unique_ptr<SuperResHead<T>> superres_;
  std::unique_ptr<DetectionHead<T>> detection_;
};

/// Labels with voxels at alpha <= 0.01 cleared to 0.
inline std::vector<std::int32_t> occupied_labels(const LabeledScene& s) {
  const std::size_t n = s.labels.size();
  std::vector<std::int32_t> out = s.labels;
  for (std::size_t v = 0; v < n; ++v) {
    if (s.grid[3 * n + v] <= kOccupancyThreshold) out[v] = 0;
  }
  return out;
}

inline std::vector<float> alpha_of(const NdArray<float>& grid) {
  const std::size_t n = grid.size() / 4;
  return {grid.data() + 3 * n, grid.data() + 4 * n};
}

/// Task loss of one scene.
template <typename T>
Var<T> task_loss(const TaskModel<T>& model, const Var<T>& output, const LabeledScene& s,
                 const std::vector<double>& class_w) {
  switch (model.config().task) {
    case Task::kLabel:
      return semantic_loss(output, s.labels, alpha_of(s.grid), class_w);
    case Task::kSuperRes:
      return superres_loss(output, s.hires);
    case Task::kDetect: {
      const auto& sh = output.shape();
      return detection_loss(output, encode_box_targets(s.boxes, {sh[1], sh[2], sh[3]}), model.config().detection);
    }
  }
  throw ContractError("task_loss: unknown task");
}

/// Validation metrics of a task model; only the task's keys are filled.
inline metrics::MetricsReport evaluate_task(const TaskModel<float>& model, const std::vector<LabeledScene>& scenes) {
  if (scenes.empty()) throw DatasetError("evaluate: no scenes");
  diff::NoGradGuard guard;
  metrics::MetricsReport r;
  const auto& cfg = model.config();
  if (cfg.task == Task::kLabel) {
    metrics::ConfusionMatrix m(cfg.classes);
    for (const auto& s : scenes) {
      const auto pred = predict_labels(model(diff::constant(s.grid)).value());
      const auto truth = occupied_labels(s);
      const auto part = metrics::confusion_from_labels(pred, truth, cfg.classes);
      for (std::size_t i = 0; i < cfg.classes; ++i) {
        for (std::size_t j = 0; j < cfg.classes; ++j) m.counts[i][j] += part.counts[i][j];
      }
    }
    const auto sc = metrics::segmentation_scores(m);
    r.set("miou", sc.miou);
    r.set("macc", sc.macc);
    r.set("acc", sc.acc);
  } else if (cfg.task == Task::kDetect) {
    std::vector<std::vector<Box3>> dets, gts;
    for (const auto& s : scenes) {
      dets.push_back(detect(model(diff::constant(s.grid)).value(), cfg.detection));
      gts.push_back(s.boxes);
    }
    const auto a25 = metrics::ap_recall(dets, gts, 0.25);
    const auto a50 = metrics::ap_recall(dets, gts, 0.5);
    r.set("ap25", a25.ap);
    r.set("ap50", a50.ap);
    r.set("recall25", a25.recall);
    r.set("recall50", a50.recall);
  } else {
    std::vector<float> pred, target;
    std::vector<std::uint8_t> include;
    for (const auto& s : scenes) {
      const auto out = model(diff::constant(s.grid)).value();
      const std::size_t n = out.size() / 4;
      pred.insert(pred.end(), out.data(), out.data() + out.size());
      target.insert(target.end(), s.hires.data(), s.hires.data() + s.hires.size());
      for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t v = 0; v < n; ++v) {
          include.push_back(c == 3 || s.hires[3 * n + v] > kOccupancyThreshold);
        }
      }
    }
    const auto pm = metrics::psnr_mse_3d(pred, target, include);
    r.set("psnr_3d", pm.psnr);
    r.set("mse_3d", pm.mse);
  }
  return r;
}

/// Validation score used for model selection (higher is better).
inline double selection_metric(Task t, const metrics::MetricsReport& r) {
  switch (t) {
    case Task::kLabel:
      return r.get("macc");
    case Task::kSuperRes:
      return r.get("psnr_3d");
    case Task::kDetect:
      return r.get("ap50");
  }
  return 0;
}

struct EpochRow {
  std::size_t epoch = 0;
  double train_loss = 0;  // mean over the epoch's steps
  double val_metric = 0;
};

struct FinetuneResult {
  std::vector<EpochRow> history;
  std::size_t best_epoch = 0;
  double best_metric = 0;
  metrics::MetricsReport best_report;
};

/// Augmented copy of a scene; the high-resolution target receives the same
/// transformations.
inline LabeledScene augment_scene(const LabeledScene& s, double probability, std::uint64_t seed) {
  recon::AugmentConfig cfg;
  cfg.probability = probability;
  recon::AugmentSample a{s.grid, s.labels, s.boxes};
  recon::augment(a, cfg, seed);
  LabeledScene out{std::move(a.grid), std::move(a.labels), std::move(a.boxes), {}};
  if (s.hires.size() > 1) {
    recon::AugmentSample h{s.hires, {}, {}};
    recon::augment(h, cfg, seed);
    out.hires = std::move(h.grid);
  }
  return out;
}

/// Fine-tunes with the pretraining optimizer contract (Adam, one-cycle,
/// gradient clipping), validates after every epoch and restores the
/// parameters of the best validation epoch.
inline FinetuneResult finetune(TaskModel<float>& model, const std::vector<LabeledScene>& train,
                               const std::vector<LabeledScene>& val,
                               const std::function<void(const EpochRow&)>& on_epoch = {}) {
  const auto& cfg = model.config();
  cfg.validate();
  if (train.empty() || val.empty()) throw DatasetError("finetune: need training and validation scenes");
  std::vector<double> class_w;
  if (cfg.task == Task::kLabel) {
    std::vector<std::vector<float>> alphas;
    for (const auto& s : train) alphas.push_back(alpha_of(s.grid));
    std::vector<const std::vector<std::int32_t>*> lp;
    std::vector<const std::vector<float>*> ap;
    for (std::size_t i = 0; i < train.size(); ++i) {
      lp.push_back(&train[i].labels);
      ap.push_back(&alphas[i]);
    }
    class_w = class_weights(lp, ap, cfg.classes);
  }
  const std::size_t per_epoch = (train.size() + cfg.batch - 1) / cfg.batch;
  const diff::OneCycleSchedule sched{cfg.max_lr, cfg.epochs * per_epoch};
  diff::Adam<float> opt({0.9, 0.999, 1e-8, cfg.weight_decay});
  FinetuneResult result;
  std::map<std::string, NdArray<float>> best;
  bool have_best = false;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRow row;
    row.epoch = epoch;
    for (std::size_t b0 = 0; b0 < train.size(); b0 += cfg.batch, ++step) {
      model.store().zero_grad();
      Var<float> loss;
      std::size_t used = 0;
      for (std::size_t b = b0; b < std::min(b0 + cfg.batch, train.size()); ++b, ++used) {
        const std::size_t k = epoch * train.size() + b;
        const auto& src = train[recon::stream_index(derive_seed(cfg.seed, "finetune"), k, train.size())];
        const auto s = augment_scene(src, cfg.augment_probability, derive_seed(cfg.seed, "finetune_augment", k));
        Var<float> l;
        try {
          l = task_loss(model, model(diff::constant(s.grid)), s, class_w);
        } catch (const DomainError&) {
          continue;  // augmentation can crop every labelled voxel
        }
        loss = loss.valid() ? diff::add(loss, l) : l;
      }
      if (!loss.valid()) continue;
      loss = diff::scale(loss, 1.0f / static_cast<float>(used));
      row.train_loss += static_cast<double>(loss.item()) / static_cast<double>(per_epoch);
      diff::backward(loss);
      diff::clip_grad_norm(model.store(), cfg.clip);
      opt.step(model.store(), sched.lr(step));
    }
    const auto report = evaluate_task(model, val);
    row.val_metric = selection_metric(cfg.task, report);
    result.history.push_back(row);
    if (!have_best || row.val_metric > result.best_metric) {
      have_best = true;
      result.best_metric = row.val_metric;
      result.best_epoch = epoch;
      result.best_report = report;
      for (const auto& p : model.store().all()) best[p.name] = p.var.value();
    }
    if (on_epoch) on_epoch(row);
  }
  for (auto& p : model.store().all()) p.array() = best.at(p.name);
  return result;
}

}  // namespace nerfmae::downstream

#endif  // NERFMAE_DOWNSTREAM_FINETUNE_HPP_
