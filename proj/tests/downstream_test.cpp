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


#include <gtest/gtest.h>

#include <cmath>

#include "nerfmae/downstream.hpp"
#include "test_util.hpp"

using namespace nerfmae;
using namespace nerfmae::downstream;
using diff::Extent3;
using nerfmae::testing::random_array;

namespace {

swin::EncoderConfig small_config() {
  swin::EncoderConfig cfg;
  cfg.input = {16, 16, 16};
  cfg.patch = 2;
  cfg.embed_dim = 8;
  cfg.depths = {1, 1, 1, 1};
  cfg.heads = {1, 1, 2, 2};
  cfg.window = 2;
  cfg.mlp_ratio = 2;
  return cfg;
}

Box3 box(double x0, double y0, double z0, double x1, double y1, double z1, double score = 1.0) {
  return Box3::from_corners({x0, y0, z0}, {x1, y1, z1}, score);
}

}  // namespace

TEST(BoxTargets, OffsetsOfACornerVoxel) {
  const auto t = encode_box_targets({box(1, 1, 1, 3, 4, 5)}, {6, 6, 6});
  const std::size_t v = (1 * 6 + 1) * 6 + 1;
  ASSERT_EQ(t.positive[v], 1);
  const double want[6] = {0.5, 0.5, 0.5, 1.5, 2.5, 3.5};
  for (int c = 0; c < 6; ++c) EXPECT_DOUBLE_EQ(t.offsets[6 * v + c], want[c]);
  EXPECT_EQ(t.positives(), 2u * 3u * 4u);
  EXPECT_EQ(t.positive[0], 0);
  EXPECT_EQ(t.box[0], -1);
}

TEST(BoxTargets, DecodeRoundTripsEveryPositive) {
  const std::vector<Box3> boxes = {box(0.3, 1.2, 2.0, 4.1, 3.9, 6.5), box(5, 5, 0, 7.5, 7.9, 3)};
  const Extent3 e{8, 8, 8};
  const auto t = encode_box_targets(boxes, e);
  std::size_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      for (std::size_t k = 0; k < 8; ++k, ++v) {
        if (!t.positive[v]) continue;
        const auto b = decode_box(voxel_center(i, j, k), &t.offsets[6 * v]);
        const auto& g = boxes[static_cast<std::size_t>(t.box[v])];
        EXPECT_LT((b.lo() - g.lo()).norm(), 1e-12);
        EXPECT_LT((b.hi() - g.hi()).norm(), 1e-12);
      }
    }
  }
}

TEST(BoxTargets, OverlapGoesToTheSmallestBox) {
  const auto t = encode_box_targets({box(0, 0, 0, 4, 4, 4), box(1, 1, 1, 2, 2, 2)}, {4, 4, 4});
  EXPECT_EQ(t.box[(1 * 4 + 1) * 4 + 1], 1);
  EXPECT_EQ(t.box[0], 0);
}

TEST(Nms, CollapsesDuplicatesAndKeepsTheBestScore) {
  const auto kept = non_max_suppression({box(0, 0, 0, 1, 1, 1, 0.4), box(0, 0, 0, 1, 1, 1, 0.9),
                                         box(5, 5, 5, 6, 6, 6, 0.5)},
                                        0.5);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_DOUBLE_EQ(kept[0].score, 0.9);
  EXPECT_DOUBLE_EQ(kept[1].score, 0.5);
}

TEST(Nms, EqualScoresKeepInputOrder) {
  auto a = box(0, 0, 0, 1, 1, 1, 0.5);
  auto b = box(0, 0, 0.1, 1, 1, 1.1, 0.5);
  a.class_id = 7;
  const auto kept = non_max_suppression({a, b}, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].class_id, 7);
}

TEST(Detect, OracleHeadRecoversTheBoxesExactly) {
  const std::vector<Box3> gt = {box(1, 1, 1, 4, 3, 5), box(5, 4, 2, 7, 7, 4)};
  const Extent3 e{8, 8, 8};
  const auto t = encode_box_targets(gt, e);
  const std::size_t n = 512;
  diff::NdArray<double> out({8, 8, 8, 8});
  for (std::size_t v = 0; v < n; ++v) {
    out[v] = t.positive[v] ? 10.0 : -10.0;
    for (int c = 0; c < 6; ++c) out[(1 + c) * n + v] = t.offsets[6 * v + c];
  }
  const auto dets = detect(out);
  ASSERT_EQ(dets.size(), 2u);
  for (const auto& d : dets) {
    double best = 0;
    for (const auto& g : gt) best = std::max(best, metrics::iou_aabb(d, g));
    EXPECT_NEAR(best, 1.0, 1e-12);
  }
  const auto ap = metrics::ap_recall(std::vector<std::vector<Box3>>{dets}, std::vector<std::vector<Box3>>{gt}, 0.5);
  EXPECT_DOUBLE_EQ(ap.ap, 1.0);
}

TEST(DetectionLoss, FocalWithoutFocusingIsBce) {
  const auto x = random_array({2, 5}, 3, -4, 4);
  auto t = std::make_shared<diff::NdArray<double>>(diff::Shape{2, 5});
  for (std::size_t i = 0; i < t->size(); i += 3) (*t)[i] = 1;
  const auto focal = diff::sigmoid_focal_loss<double>(diff::constant(x), t, -1.0, 0.0).item();
  const auto bce = diff::bce_with_logits<double>(diff::constant(x), t).item();
  EXPECT_NEAR(focal, bce, 1e-9);
}

TEST(DetectionLoss, RejectsMismatchedTargets) {
  const auto out = diff::constant(diff::NdArray<double>({8, 4, 4, 4}));
  EXPECT_THROW(detection_loss(out, encode_box_targets({}, {4, 4, 2})), DimensionError);
  EXPECT_THROW(detection_loss(diff::constant(diff::NdArray<double>({7, 4, 4, 4})), encode_box_targets({}, {4, 4, 4})),
               DimensionError);
}

TEST(DetectionLoss, PerfectPredictionIsNearZeroAndGradientChecks) {
  const std::vector<Box3> gt = {box(1, 1, 1, 3, 3, 4)};
  const auto t = encode_box_targets(gt, {4, 4, 4});
  diff::NdArray<double> out({8, 4, 4, 4});
  for (std::size_t v = 0; v < 64; ++v) {
    out[v] = out[7 * 64 + v] = t.positive[v] ? 30.0 : -30.0;
    for (int c = 0; c < 6; ++c) out[(1 + c) * 64 + v] = t.positive[v] ? t.offsets[6 * v + c] : 1.0;
  }
  DetectionLoss parts;
  EXPECT_LT(detection_loss(diff::constant(out), t, {}, &parts).item(), 1e-9);
  EXPECT_NEAR(parts.iou, 0.0, 1e-12);

  diff::ParameterStore<double> store;
  auto v = store.create("out", {8, 4, 4, 4}, diff::Init::kZeros);
  v.mutable_value() = random_array({8, 4, 4, 4}, 5, 0.2, 2.0);
  std::vector<diff::Parameter<double>*> ps = {&store.all()[0]};
  const auto res = diff::grad_check<double>([&] { return detection_loss(v, t); }, ps, {1e-6, 1e-4, 40, 1e-8});
  EXPECT_TRUE(res.passed) << res.worst << " " << res.max_rel_error;
}

TEST(SemanticLoss, UniformLogitsGiveLogClassCount) {
  const std::size_t n = 5;
  diff::NdArray<double> logits({n, 2, 2, 2});
  std::vector<std::int32_t> labels = {1, 2, 3, 4, 5, 1, 2, 3};
  std::vector<float> alpha(8, 0.5f);
  const std::vector<double> w = {1, 2, 3, 4, 5};
  EXPECT_NEAR(semantic_loss(diff::constant(logits), labels, alpha, w).item(), std::log(5.0), 1e-12);
}

TEST(SemanticLoss, SaturatedCorrectLogitsAreNearZero) {
  diff::NdArray<double> logits({3, 2, 2, 2});
  std::vector<std::int32_t> labels = {1, 2, 3, 1, 2, 3, 1, 2};
  for (std::size_t v = 0; v < 8; ++v) logits[static_cast<std::size_t>(labels[v] - 1) * 8 + v] = 20.0;
  EXPECT_LT(semantic_loss(diff::constant(logits), labels, std::vector<float>(8, 1.0f), {1, 1, 1}).item(), 1e-3);
}

TEST(SemanticLoss, IgnoresEmptyAndUnlabelledVoxels) {
  diff::ParameterStore<double> store;
  auto v = store.create("logits", {2, 2, 2, 2}, diff::Init::kZeros);
  v.mutable_value() = random_array({2, 2, 2, 2}, 9);
  auto& p = store.all()[0];
  std::vector<std::int32_t> labels = {1, 2, 0, 1, 2, 1, 2, 1};
  std::vector<float> alpha = {0.5f, 0.5f, 0.5f, 0.005f, 0.5f, 0.01f, 0.9f, 0.2f};
  const std::vector<double> w = {1.5, 0.7};
  auto loss = semantic_loss(p.var, labels, alpha, w);
  const double before = loss.item();
  diff::backward(loss);
  for (std::size_t v : {2u, 3u, 5u}) {
    EXPECT_EQ(p.var.grad()[v], 0.0);
    EXPECT_EQ(p.var.grad()[8 + v], 0.0);
  }
  auto changed = p.array();
  for (std::size_t v : {2u, 3u, 5u}) changed[v] += 3.0;
  EXPECT_DOUBLE_EQ(semantic_loss(diff::constant(changed), labels, alpha, w).item(), before);
  EXPECT_THROW(semantic_loss(p.var, labels, std::vector<float>(8, 0.0f), w), DomainError);
}

TEST(SemanticLoss, ClassWeightsFollowInverseLogFrequency) {
  std::vector<std::int32_t> labels = {1, 1, 1, 2, 0, 1};
  std::vector<float> alpha = {1, 1, 1, 1, 1, 0};
  const auto w = class_weights({&labels}, {&alpha}, 3);
  EXPECT_NEAR(w[0], 1.0 / std::log(1.02 + 0.75), 1e-15);
  EXPECT_NEAR(w[1], 1.0 / std::log(1.02 + 0.25), 1e-15);
  EXPECT_NEAR(w[2], 1.0 / std::log(1.02), 1e-15);
}

TEST(SemanticHead, EighteenClassOutputAtDeskScale) {
  diff::ParameterStore<float> store;
  const auto enc = swin::EncoderConfig::desk();
  swin::SwinEncoder<float> encoder(store, enc);
  SemanticHead<float> head(store, enc, 18);
  diff::init_parameters(store, 1);
  diff::NoGradGuard guard;
  const auto out = head(encoder(diff::constant(diff::NdArray<float>({4, 32, 32, 32}, 0.5f))));
  EXPECT_EQ(out.shape(), (diff::Shape{18, 32, 32, 32}));
  EXPECT_EQ(predict_labels(out.value()).size(), 32u * 32u * 32u);
}

TEST(SuperRes, TargetExtents) {
  EXPECT_EQ(superres_extent(32, 1.6), 50u);
  EXPECT_EQ(superres_extent(32, 2.4), 76u);
  EXPECT_EQ(superres_extent(160, 1.6), 256u);
  EXPECT_EQ(superres_extent(160, 2.4), 384u);
  EXPECT_THROW(superres_extent(32, 2.0), ConfigError);
}

TEST(SuperRes, HeadShapeRangeAndPerfectLoss) {
  diff::ParameterStore<float> store;
  const auto enc = small_config();
  swin::SwinEncoder<float> encoder(store, enc);
  SuperResHead<float> head(store, enc, 1.6);
  diff::init_parameters(store, 2);
  diff::NoGradGuard guard;
  const auto out = head(encoder(diff::constant(diff::NdArray<float>({4, 16, 16, 16}, 0.3f))));
  ASSERT_EQ(out.shape(), (diff::Shape{4, 24, 24, 24}));
  for (float v : out.value().values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_EQ(superres_loss(out, out.value()).item(), 0.0f);
  EXPECT_THROW(superres_loss(out, diff::NdArray<float>({4, 16, 16, 16})), DimensionError);
}

TEST(LabeledScene, BoxesCoverTheirLabels) {
  const auto s = make_labeled_scene(7, 16, 1.6);
  EXPECT_EQ(s.grid.shape(), (diff::Shape{4, 16, 16, 16}));
  EXPECT_EQ(s.hires.shape(), (diff::Shape{4, 24, 24, 24}));
  std::size_t v = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 16; ++j) {
      for (std::size_t k = 0; k < 16; ++k, ++v) {
        if (s.labels[v] == 0) continue;
        bool inside = false;
        for (const auto& b : s.boxes) inside = inside || b.contains(voxel_center(i, j, k));
        EXPECT_TRUE(inside) << v;
      }
    }
  }
}

TEST(TaskModel, ParameterNamespacesAndHeadOnlyInit) {
  TaskConfig cfg;
  cfg.task = Task::kDetect;
  TaskModel<float> model(small_config(), cfg);
  bool has_encoder = false, has_head = false;
  for (const auto& p : model.store().all()) {
    const bool enc = p.name.rfind("encoder.", 0) == 0, head = p.name.rfind("head.", 0) == 0;
    EXPECT_TRUE(enc || head) << p.name;
    has_encoder = has_encoder || enc;
    has_head = has_head || head;
  }
  EXPECT_TRUE(has_encoder && has_head);
  model.initialize(1, false);
  const auto before = model.store().find("encoder.embed.position")->array();
  model.initialize(2, true);
  EXPECT_TRUE(model.store().find("encoder.embed.position")->array() == before);
}

TEST(TaskConfig, Validation) {
  EXPECT_EQ(parse_task("sr"), Task::kSuperRes);
  EXPECT_THROW(parse_task("segment"), ConfigError);
  TaskConfig cfg;
  cfg.classes = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.task = Task::kSuperRes;
  cfg.sr_factor = 3.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Finetune, RestoresTheBestEpochAndIsDeterministic) {
  std::vector<LabeledScene> train = {make_labeled_scene(1, 16), make_labeled_scene(2, 16)};
  std::vector<LabeledScene> val = {make_labeled_scene(3, 16)};
  TaskConfig cfg;
  cfg.task = Task::kLabel;
  cfg.epochs = 3;
  cfg.max_lr = 3e-3;
  cfg.seed = 4;
  auto run = [&] {
    TaskModel<float> model(small_config(), cfg);
    model.initialize(5, false);
    auto r = finetune(model, train, val);
    return std::make_pair(r, evaluate_task(model, val));
  };
  const auto [a, after] = run();
  ASSERT_EQ(a.history.size(), 3u);
  double best = -1;
  for (const auto& row : a.history) {
    EXPECT_TRUE(std::isfinite(row.train_loss));
    best = std::max(best, row.val_metric);
  }
  EXPECT_DOUBLE_EQ(a.best_metric, best);
  EXPECT_DOUBLE_EQ(after.get("macc"), a.best_metric);
  const auto [b, after_b] = run();
  for (std::size_t e = 0; e < 3; ++e) EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
}

TEST(Finetune, RejectsEmptySplits) {
  TaskModel<float> model(small_config(), {});
  EXPECT_THROW(finetune(model, {}, {make_labeled_scene(1, 16)}), DatasetError);
}
