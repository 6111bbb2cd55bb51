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

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nerfmae/gridextract.hpp"
#include "nerfmae/recon.hpp"
#include "nerfmae/scenefield.hpp"
#include "test_util.hpp"

using namespace nerfmae;
using namespace nerfmae::recon;
using diff::NdArray;
using diff::ParameterStore;
using nerfmae::testing::random_array;

namespace {

swin::EncoderConfig micro_config() {
  swin::EncoderConfig cfg;
  cfg.input = {8, 8, 8};
  cfg.patch = 1;
  cfg.embed_dim = 4;
  cfg.depths = {1, 1, 1, 1};
  cfg.heads = {1, 1, 2, 2};
  cfg.window = 2;
  cfg.mlp_ratio = 2;
  return cfg;
}

swin::EncoderConfig small_config() {
  swin::EncoderConfig cfg;
  cfg.input = {16, 16, 16};
  cfg.patch = 2;
  cfg.embed_dim = 8;
  cfg.depths = {1, 1, 1, 1};
  cfg.heads = {1, 1, 2, 2};
  cfg.window = 4;
  return cfg;
}

NdArray<float> random_volume(std::size_t c, std::size_t n, std::uint64_t seed) {
  auto r = random_array({c, n, n, n}, seed, 0, 1);
  NdArray<float> out(r.shape());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = static_cast<float>(r[i]);
  return out;
}

std::vector<NdArray<float>> scene_grids(std::size_t count, std::size_t res) {
  std::vector<NdArray<float>> out;
  for (std::size_t s = 0; s < count; ++s) {
    auto sc = scene::make_synthetic_scene(40 + s);
    grid::GridSpec spec;
    spec.resolution = {res, res, res};
    spec.bounds = sc.scene.bounds;
    out.push_back(swin::channel_first<float>(grid::ground_truth_grid(sc.scene, spec)));
  }
  return out;
}

}  // namespace

// ---- decoder ----

TEST(Decoder, DeskOutputShapeAndRange) {
  MaskedAutoencoder<float> model(swin::EncoderConfig{});
  diff::init_parameters(model.store(), 1);
  diff::NoGradGuard guard;
  auto out = model(diff::constant(random_volume(4, 32, 2)), nullptr);
  EXPECT_EQ(out.shape(), (diff::Shape{4, 32, 32, 32}));
  for (float v : out.value().values()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(Decoder, FullScaleChannelPlanReachesFullResolution) {
  auto cfg = swin::EncoderConfig::full_scale();
  cfg.input = {32, 32, 32};
  cfg.depths = {1, 1, 1, 1};
  MaskedAutoencoder<float> model(cfg);
  diff::init_parameters(model.store(), 2);
  diff::NoGradGuard guard;
  auto out = model(diff::constant(random_volume(4, 32, 3)), nullptr);
  EXPECT_EQ(out.shape(), (diff::Shape{4, 32, 32, 32}));
}

TEST(Decoder, SkipMismatchNamesTheStage) {
  ParameterStore<float> store;
  swin::EncoderConfig cfg;
  PyramidDecoder<float> dec(store, "decoder", cfg);
  swin::FeaturePyramid<float> f;
  const std::vector<swin::Extent3> extents{{8, 8, 8}, {4, 4, 4}, {3, 3, 3}, {1, 1, 1}};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& e = extents[i];
    f.levels.push_back(diff::constant(NdArray<float>({e[0] * e[1] * e[2], cfg.channels(i)})));
    f.extents.push_back(e);
  }
  try {
    dec(f);
    FAIL() << "expected a dimension error";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder stage 1"), std::string::npos) << e.what();
  }
}

// ---- reconstruction loss ----

TEST(ReconLoss, PerfectPredictionIsZero) {
  auto t = random_volume(4, 8, 1);
  auto mask = swin::mask_patches({8, 8, 8}, 4, 0.75, 3);
  auto lb = recon_loss(diff::constant(t), t, mask);
  EXPECT_EQ(lb.total.item(), 0.0f);
  EXPECT_EQ(lb.l_rad, 0.0);
  EXPECT_EQ(lb.l_alpha, 0.0);
}

TEST(ReconLoss, OneMaskedPatchHandEvaluation) {
  // One of eight 4^3 patches masked, target alpha 1, rgb error eps.
  NdArray<double> t({4, 8, 8, 8}, 0.5);
  const std::size_t n = 512;
  for (std::size_t v = 0; v < n; ++v) t[3 * n + v] = 1.0;
  const double eps = 0.03;
  NdArray<double> p = t;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t v = 0; v < n; ++v) p[c * n + v] += eps;
  }
  swin::MaskSpec mask;
  mask.resolution = {8, 8, 8};
  mask.patch = 4;
  mask.masked = {5};
  auto lb = recon_loss(diff::constant(p), t, mask);
  EXPECT_EQ(lb.M, 64u);
  EXPECT_EQ(lb.K, 64u);
  EXPECT_NEAR(lb.l_rad, 3 * eps * eps, 1e-15);
  EXPECT_EQ(lb.l_alpha, 0.0);
}

TEST(ReconLoss, EmptySceneHasNoRadianceTerm) {
  NdArray<double> t({4, 8, 8, 8}, 0.0);
  auto p = random_array({4, 8, 8, 8}, 4, 0, 1);
  auto mask = swin::mask_patches({8, 8, 8}, 4, 0.5, 1);
  auto lb = recon_loss(diff::constant(p), t, mask);
  EXPECT_EQ(lb.K, 0u);
  EXPECT_EQ(lb.l_rad, 0.0);
  const auto flags = mask.voxel_flags();
  double s = 0;
  for (std::size_t v = 0; v < 512; ++v) {
    if (flags[v]) s += p[3 * 512 + v] * p[3 * 512 + v];
  }
  EXPECT_NEAR(lb.l_alpha, s / lb.M, 1e-12);
}

TEST(ReconLoss, Invariants) {
  auto t = random_array({4, 8, 8, 8}, 5, 0, 0.03);  // mixes alpha above and below delta
  auto p = random_array({4, 8, 8, 8}, 6, 0, 1);
  auto mask = swin::mask_patches({8, 8, 8}, 2, 0.75, 7);
  const auto flags = mask.voxel_flags();
  const auto base = recon_loss(diff::constant(p), t, mask);
  EXPECT_LE(base.K, base.M);
  EXPECT_GT(base.K, 0u);
  EXPECT_LT(base.K, base.M);
  EXPECT_GE(base.l_rad, 0.0);
  EXPECT_GE(base.l_alpha, 0.0);
  EXPECT_EQ(base.total.item(), base.l_rad + base.l_alpha);

  const std::size_t n = 512;
  auto outside = p, gated_rgb = p, gated_alpha = p;
  bool touched_alpha = false;
  for (std::size_t v = 0; v < n; ++v) {
    if (!flags[v]) {
      for (std::size_t c = 0; c < 4; ++c) outside[c * n + v] += 0.3;
    } else if (t[3 * n + v] <= 0.01) {
      for (std::size_t c = 0; c < 3; ++c) gated_rgb[c * n + v] += 0.3;
      gated_alpha[3 * n + v] += 0.3;
      touched_alpha = true;
    }
  }
  ASSERT_TRUE(touched_alpha);
  const auto a = recon_loss(diff::constant(outside), t, mask);
  EXPECT_EQ(a.l_rad, base.l_rad);
  EXPECT_EQ(a.l_alpha, base.l_alpha);
  const auto b = recon_loss(diff::constant(gated_rgb), t, mask);
  EXPECT_EQ(b.l_rad, base.l_rad);
  EXPECT_EQ(b.l_alpha, base.l_alpha);
  const auto c = recon_loss(diff::constant(gated_alpha), t, mask);
  EXPECT_EQ(c.l_rad, base.l_rad);
  EXPECT_NE(c.l_alpha, base.l_alpha);
}

TEST(ReconLoss, ShapeMismatch) {
  auto mask = swin::mask_patches({8, 8, 8}, 4, 0.5, 1);
  EXPECT_THROW(recon_loss(diff::constant(NdArray<double>({4, 8, 8, 4})), NdArray<double>({4, 8, 8, 8}), mask),
               DimensionError);
}

TEST(ReconLoss, GradCheckMaskedReconstructionMicroConfig) {
  MaskedAutoencoder<double> model(micro_config());
  auto& store = model.store();
  std::uint64_t seed = 30;
  for (auto& p : store.all()) p.array() = random_array(p.var.shape(), seed++, -0.3, 0.3);
  auto target = random_array({4, 8, 8, 8}, 3, 0, 0.05);
  auto mask = swin::mask_patches({8, 8, 8}, 1, 0.75, 4);
  auto input = target;
  swin::zero_masked(input, mask.voxel_flags());
  auto flags = std::make_shared<std::vector<std::uint8_t>>(mask.patch_flags());
  auto fn = [&]() { return recon_loss(model(diff::constant(input), flags), target, mask).total; };
  std::vector<diff::Parameter<double>*> ps;
  for (auto& p : store.all()) ps.push_back(&p);
  auto rep = diff::grad_check<double>(fn, ps, {1e-4, 1e-4, 4, 1e-6});
  EXPECT_TRUE(rep.passed) << rep.worst << " " << rep.max_rel_error;
}

// ---- augmentation ----

TEST(Augment, FlipTwiceIsIdentity) {
  AugmentSample s{random_volume(4, 6, 1), std::vector<std::int32_t>(216, 0), {}};
  for (std::size_t i = 0; i < 216; ++i) s.labels[i] = static_cast<std::int32_t>(i % 3);
  s.boxes.push_back(metrics::Box3::from_corners({1, 2, 0}, {3, 5, 2}));
  const auto orig = s;
  for (int axis = 0; axis < 3; ++axis) {
    flip(s, axis);
    EXPECT_FALSE(std::ranges::equal(s.grid.values(), orig.grid.values()));
    flip(s, axis);
    EXPECT_TRUE(std::ranges::equal(s.grid.values(), orig.grid.values()));
    EXPECT_EQ(s.labels, orig.labels);
    EXPECT_TRUE(s.boxes[0].center.isApprox(orig.boxes[0].center));
  }
}

TEST(Augment, RotationPermutesValues) {
  AugmentSample s{random_volume(4, 6, 2), {}, {}};
  auto before = std::vector<float>(s.grid.values().begin(), s.grid.values().end());
  rotate_quarter(s, 1);
  auto after = std::vector<float>(s.grid.values().begin(), s.grid.values().end());
  EXPECT_NE(before, after);
  std::ranges::sort(before);
  std::ranges::sort(after);
  EXPECT_EQ(before, after);
  rotate_quarter(s, 3);
  AugmentSample ref{random_volume(4, 6, 2), {}, {}};
  EXPECT_TRUE(std::ranges::equal(s.grid.values(), ref.grid.values()));
}

TEST(Augment, BoxesFollowContent) {
  // A solid block marked in channel 0 must stay inside its transformed box.
  const std::size_t n = 10;
  AugmentSample s{NdArray<float>({1, n, n, n}), {}, {}};
  const std::array<std::size_t, 3> lo{1, 2, 3}, hi{4, 8, 5};
  for (std::size_t i = lo[0]; i < hi[0]; ++i) {
    for (std::size_t j = lo[1]; j < hi[1]; ++j) {
      for (std::size_t k = lo[2]; k < hi[2]; ++k) s.grid[(i * n + j) * n + k] = 1.0f;
    }
  }
  s.boxes.push_back(metrics::Box3::from_corners({1, 2, 3}, {4, 8, 5}));
  auto check = [&](const AugmentSample& a) {
    const auto& b = a.boxes.at(0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < n; ++k) {
          const Eigen::Vector3d c(i + 0.5, j + 0.5, k + 0.5);
          EXPECT_EQ(a.grid[(i * n + j) * n + k] == 1.0f, b.contains(c)) << i << " " << j << " " << k;
        }
      }
    }
  };
  auto a = s;
  flip(a, 1);
  check(a);
  auto r = s;
  rotate_quarter(r, 1);
  check(r);
  rotate_quarter(r, 2);
  check(r);
}

TEST(Augment, ScalingKeepsConstantsAndScalesBoxes) {
  AugmentSample s{NdArray<float>({4, 8, 8, 8}, 0.375f), std::vector<std::int32_t>(512, 2), {}};
  s.boxes.push_back(metrics::Box3::from_corners({2, 2, 2}, {6, 6, 6}));
  scale(s, 1.1);
  for (float v : s.grid.values()) EXPECT_FLOAT_EQ(v, 0.375f);
  for (auto l : s.labels) EXPECT_EQ(l, 2);
  EXPECT_TRUE(s.boxes[0].center.isApprox(Eigen::Vector3d(4, 4, 4)));
  EXPECT_NEAR(s.boxes[0].extents[0], 4.4, 1e-12);
}

TEST(Augment, ScalingIdentityAtFactorOne) {
  AugmentSample s{random_volume(4, 8, 5), {}, {}};
  const auto orig = s.grid;
  scale(s, 1.0);
  EXPECT_TRUE(std::ranges::equal(s.grid.values(), orig.values()));
}

TEST(Augment, DeterministicPerSeed) {
  AugmentSample a{random_volume(4, 8, 6), {}, {}}, b = a, c = a;
  AugmentConfig cfg;
  cfg.probability = 1.0;
  auto ra = augment(a, cfg, 11);
  auto rb = augment(b, cfg, 11);
  EXPECT_TRUE(std::ranges::equal(a.grid.values(), b.grid.values()));
  EXPECT_EQ(ra.quarter_turns, rb.quarter_turns);
  EXPECT_EQ(ra.scale, rb.scale);
  EXPECT_GE(ra.scale, 0.9);
  EXPECT_LE(ra.scale, 1.1);
  cfg.probability = 0.0;
  augment(c, cfg, 11);
  AugmentSample d{random_volume(4, 8, 6), {}, {}};
  EXPECT_TRUE(std::ranges::equal(c.grid.values(), d.grid.values()));
}

TEST(Augment, RotationNeedsCubicGrid) {
  AugmentSample s{NdArray<float>({4, 8, 8, 4}), {}, {}};
  EXPECT_THROW(augment(s, AugmentConfig{}, 1), ConfigError);
  AugmentConfig no_rot;
  no_rot.rotations = false;
  EXPECT_NO_THROW(augment(s, no_rot, 1));
}

// ---- pretraining ----

TEST(Pretrain, ScheduleMatchesTheConfiguredPeak) {
  TrainConfig cfg;
  const auto sched = cfg.schedule(16);
  EXPECT_EQ(sched.lr(sched.peak_step()), 3e-4);
  for (std::size_t s = 0; s < sched.total_steps; ++s) EXPECT_LE(sched.lr(s), 3e-4);
}

TEST(Pretrain, DeterministicHistories) {
  const auto grids = scene_grids(3, 16);
  TrainConfig cfg;
  cfg.steps = 4;
  cfg.seed = 5;
  auto run = [&]() {
    MaskedAutoencoder<float> model(small_config());
    diff::init_parameters(model.store(), 9);
    diff::Adam<float> opt(cfg.adam());
    return pretrain(model, grids, cfg, opt);
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].total, b[i].total);
    EXPECT_EQ(a[i].l_rad, b[i].l_rad);
    EXPECT_EQ(a[i].lr, b[i].lr);
  }
}

TEST(Pretrain, ResumesFromOptimizerStep) {
  const auto grids = scene_grids(2, 16);
  TrainConfig cfg;
  cfg.steps = 4;
  MaskedAutoencoder<float> model(small_config());
  diff::init_parameters(model.store(), 3);
  diff::Adam<float> opt(cfg.adam());
  opt.set_steps(2);
  const auto h = pretrain(model, grids, cfg, opt);
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[0].step, 2u);
  EXPECT_EQ(h[0].lr, cfg.schedule(2).lr(2));
  EXPECT_TRUE(pretrain(model, grids, cfg, opt).empty());
}

TEST(Pretrain, ClippingBoundsTheGradientNorm) {
  const auto grids = scene_grids(1, 16);
  MaskedAutoencoder<float> model(small_config());
  diff::init_parameters(model.store(), 4);
  const auto sample = make_masked_sample(grids[0], 2, 0.75, 0.5, 1, 0);
  auto flags = std::make_shared<std::vector<std::uint8_t>>(sample.mask.patch_flags());
  auto lb = recon_loss(model(diff::constant(sample.input), flags), sample.target, sample.mask);
  diff::backward(lb.total);
  const double pre = diff::clip_grad_norm(model.store(), 0.01);
  ASSERT_GT(pre, 0.01);
  EXPECT_LE(diff::global_grad_norm(model.store()), 0.01 + 1e-9);
}

TEST(Pretrain, RejectsBadDatasets) {
  MaskedAutoencoder<float> model(small_config());
  diff::Adam<float> opt;
  EXPECT_THROW(pretrain(model, {}, TrainConfig{}, opt), DatasetError);
  std::vector<NdArray<float>> mixed{NdArray<float>({4, 16, 16, 16}), NdArray<float>({4, 8, 8, 8})};
  EXPECT_THROW(pretrain(model, mixed, TrainConfig{}, opt), DatasetError);
}

TEST(Pretrain, LossTableFormat) {
  std::ostringstream os;
  write_loss_table(os, {{0, 1e-5, 0.25, 0.125, 0.375, 1.0}, {1, 2e-5, 0.5, 0.25, 0.75, 1.0}});
  EXPECT_EQ(os.str(), "step\tlr\tL_rad\tL_alpha\ttotal\n0\t1e-05\t0.25\t0.125\t0.375\n1\t2e-05\t0.5\t0.25\t0.75\n");
}

TEST(Pretrain, EvaluationIsConsistent) {
  const auto grids = scene_grids(2, 16);
  MaskedAutoencoder<float> model(small_config());
  diff::init_parameters(model.store(), 5);
  const auto ev = evaluate_reconstruction(model, grids, 0.75, 1);
  EXPECT_GT(ev.baseline_mse, 0.0);
  EXPECT_GT(ev.mse, 0.0);
  EXPECT_NEAR(ev.total, ev.l_rad + ev.l_alpha, 1e-6);
}
