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


// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nerfmae/diffcore.hpp"
#include "nerfmae/downstream.hpp"
#include "nerfmae/gridextract.hpp"
#include "nerfmae/metrics.hpp"
#include "nerfmae/pipeline.hpp"
#include "nerfmae/recon.hpp"
#include "nerfmae/scenefield.hpp"
#include "nerfmae/swin3d.hpp"
#include "test_util.hpp"

using namespace nerfmae;
using diff::NdArray;
using diff::Parameter;
using diff::ParameterStore;
using nerfmae::testing::random_array;
namespace fs = std::filesystem;

namespace {

using VarD = diff::Var<double>;
using Clock = std::chrono::steady_clock;

// ---- pinned tolerances and budgets ----
constexpr double kMaskBudgetS = 1;
constexpr double kPyramidBudgetS = 300;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradBudgetS = 300;
constexpr double kRenderTolerance = 1e-3;
constexpr double kMonotoneSlack = 1e-9;
constexpr double kEnergyTolerance = 1e-9;
constexpr double kRenderBudgetS = 60;
constexpr double kExtractTolerance = 1e-6;
constexpr double kExtractBudgetS = 60;
constexpr double kFitPsnrDb = 25;
constexpr double kFitBudgetS = 900;
constexpr double kHalvingRatio = 0.5;
constexpr double kPsnrMarginDb = 3;
constexpr double kPretrainBudgetS = 1200;
constexpr double kTransferBudgetS = 7200;
constexpr double kReferencePsnr = 17.27;
constexpr double kPsnrAgreementDb = 0.15;
constexpr double kExactTolerance = 1e-12;
constexpr double kMetricsBudgetS = 1;
constexpr double kDeterminismRelTol = 1e-6;
constexpr double kDeterminismBudgetS = 600;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- criterion 1 ----

Outcome masking_count() {
  const auto t0 = Clock::now();
  const auto m = swin::mask_patches({40, 40, 40}, 4, 0.75, 0);
  const double t = seconds_since(t0);
  return {m.total() == 1000 && m.unmasked() == 250 && t < kMaskBudgetS,
          std::to_string(m.total()) + " patches, " + std::to_string(m.unmasked()) + " unmasked, " + fmt("%.3f s", t)};
}

// ---- criterion 2 ----

Outcome shape_pyramid() {
  swin::EncoderConfig cfg = swin::EncoderConfig::full_scale();
  cfg.depths = {2, 2, 2, 2};
  ParameterStore<float> store;
  swin::SwinEncoder<float> enc(store, cfg);
  diff::init_parameters(store, 1);
  auto input = random_array({4, 160, 160, 160}, 2, 0, 1);
  NdArray<float> grid(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) grid[i] = static_cast<float>(input[i]);
  const auto t0 = Clock::now();
  diff::NoGradGuard guard;
  const auto f = enc(diff::constant(std::move(grid)));
  const double t = seconds_since(t0);
  const std::vector<diff::Shape> expect{{96, 40, 40, 40}, {192, 20, 20, 20}, {384, 10, 10, 10}, {768, 5, 5, 5}};
  bool ok = f.levels.size() == 4;
  std::string shapes;
  for (std::size_t i = 0; ok && i < 4; ++i) {
    const auto s = f.volume(i).shape();
    ok = ok && s == expect[i];
    shapes += (i ? " " : "") + diff::shape_str(s);
  }
  return {ok && t < kPyramidBudgetS, shapes + ", forward " + fmt("%.1f s", t)};
}

// ---- criterion 3 ----

struct GradSuite {
  std::size_t checks = 0, failed = 0;
  double worst = 0;
  std::string worst_name;

  void record(const std::string& name, const diff::GradReport& r) {
    ++checks;
    if (!r.passed || !(r.max_rel_error < kGradTolerance)) {
      ++failed;
      std::cerr << "  gradient check failed: " << name << " " << r.worst << " " << r.max_rel_error << "\n";
    }
    if (!(r.max_rel_error <= worst)) {
      worst = r.max_rel_error;
      worst_name = name;
    }
  }
};

/// Leaves registered in a store; checks d/dleaves of sum(op(leaves) * R).
struct PrimitiveCheck {
  ParameterStore<double> store;

  void leaf(const std::string& name, const NdArray<double>& value) {
    auto v = store.create(name, value.shape(), diff::Init::kZeros);
    v.mutable_value() = value;
  }

  diff::GradReport run(const std::function<VarD(std::vector<VarD>&)>& op, double floor = 1e-8) {
    std::vector<Parameter<double>*> params;
    std::vector<VarD> vars;
    auto all = store.all();
    for (auto& p : all) {
      params.push_back(&p);
      vars.push_back(p.var);
    }
    const auto weights = diff::constant(random_array(op(vars).shape(), 99));
    auto fn = [&]() { return diff::sum(diff::mul(op(vars), weights)); };
    return diff::grad_check<double>(fn, params, {1e-5, kGradTolerance, 0, floor});
  }
};

template <typename Op>
void check(GradSuite& suite, const std::string& name, std::vector<std::pair<std::string, NdArray<double>>> leaves,
           Op op, double floor = 1e-8) {
  PrimitiveCheck pc;
  for (const auto& [n, v] : leaves) pc.leaf(n, v);
  suite.record(name, pc.run(op, floor));
}

void primitive_gradients(GradSuite& s) {
  using V = std::vector<VarD>;
  const std::vector<std::pair<std::string, std::function<VarD(const VarD&)>>> unaries = {
      {"gelu", [](const VarD& x) { return diff::gelu(x); }},
      {"sigmoid", [](const VarD& x) { return diff::sigmoid(x); }},
      {"softplus", [](const VarD& x) { return diff::softplus(x); }},
      {"exp", [](const VarD& x) { return diff::exp(x); }},
      {"tanh", [](const VarD& x) { return diff::tanh(x); }},
      {"square", [](const VarD& x) { return diff::square(x); }},
      {"scale", [](const VarD& x) { return diff::scale(x, -1.7); }},
      {"add_scalar", [](const VarD& x) { return diff::add_scalar(x, 0.4); }},
      {"sum", [](const VarD& x) { return diff::sum(x); }},
      {"mean", [](const VarD& x) { return diff::mean(x); }},
      {"reshape", [](const VarD& x) { return diff::reshape(x, {6, 2}); }},
      {"transpose2d", [](const VarD& x) { return diff::transpose2d(x); }},
  };
  for (const auto& [name, fn] : unaries) {
    check(s, name, {{"x", random_array({3, 4}, 40, -2, 2)}}, [&fn](V& v) { return fn(v[0]); });
  }
  auto away = random_array({10}, 41, -2, 2);
  for (auto& v : away.values()) v += v >= 0 ? 0.1 : -0.1;
  check(s, "relu", {{"x", away}}, [](V& v) { return diff::relu(v[0]); });
  check(s, "add", {{"a", random_array({2, 3, 4}, 42)}, {"b", random_array({3, 4}, 43)}},
        [](V& v) { return diff::add(v[0], v[1]); });
  check(s, "sub", {{"a", random_array({3, 4}, 44)}, {"b", random_array({3, 4}, 45)}},
        [](V& v) { return diff::sub(v[0], v[1]); });
  check(s, "mul", {{"a", random_array({3, 4}, 44)}, {"b", random_array({3, 4}, 45)}},
        [](V& v) { return diff::mul(v[0], v[1]); });
  for (int ta = 0; ta < 2; ++ta) {
    for (int tb = 0; tb < 2; ++tb) {
      check(s, "bmm" + std::to_string(ta) + std::to_string(tb),
            {{"a", random_array(ta ? diff::Shape{2, 4, 3} : diff::Shape{2, 3, 4}, 46)},
             {"b", random_array(tb ? diff::Shape{2, 5, 4} : diff::Shape{2, 4, 5}, 47)}},
            [=](V& v) { return diff::bmm(v[0], v[1], ta, tb); });
    }
  }
  check(s, "matmul", {{"a", random_array({3, 4}, 46)}, {"b", random_array({4, 2}, 47)}},
        [](V& v) { return diff::matmul(v[0], v[1]); });
  check(s, "linear",
        {{"x", random_array({2, 3, 4}, 48)}, {"w", random_array({5, 4}, 49)}, {"b", random_array({5}, 50)}},
        [](V& v) { return diff::linear(v[0], v[1], v[2]); });
  check(s, "permute", {{"x", random_array({2, 3, 4, 5}, 51)}}, [](V& v) { return diff::permute(v[0], {2, 0, 3, 1}); });
  auto idx = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{3, -1, 0, 3, 1});
  check(s, "gather_rows", {{"x", random_array({4, 3}, 52)}}, [idx](V& v) { return diff::gather_rows(v[0], idx); });
  auto sel = std::make_shared<std::vector<std::uint8_t>>(std::vector<std::uint8_t>{0, 1, 1, 0});
  check(s, "replace_rows", {{"x", random_array({4, 3}, 53)}, {"token", random_array({3}, 54)}},
        [sel](V& v) { return diff::replace_rows(v[0], v[1], sel); });
  check(s, "slice0", {{"x", random_array({5, 2}, 55)}}, [](V& v) { return diff::slice0(v[0], 1, 3); });
  check(s, "concat0", {{"a", random_array({2, 3}, 56)}, {"b", random_array({1, 3}, 57)}},
        [](V& v) { return diff::concat0<double>({v[0], v[1]}); });
  check(s, "layer_norm",
        {{"x", random_array({3, 6}, 56, -2, 2)}, {"g", random_array({6}, 57)}, {"b", random_array({6}, 58)}},
        [](V& v) { return diff::layer_norm(v[0], v[1], v[2]); });
  NdArray<double> neg({3, 5});
  neg[2] = -std::numeric_limits<double>::infinity();
  neg[9] = -std::numeric_limits<double>::infinity();
  check(s, "softmax", {{"x", random_array({3, 5}, 60, -2, 2)}},
        [neg](V& v) { return diff::softmax(diff::add(v[0], diff::constant(neg))); });
  struct ConvCase {
    std::size_t cin, cout, extent, k, stride, pad;
  };
  for (const ConvCase c : {ConvCase{2, 3, 4, 3, 1, 1}, ConvCase{2, 2, 5, 3, 2, 1}, ConvCase{3, 2, 4, 2, 2, 0}}) {
    check(s, "conv3d k" + std::to_string(c.k) + " s" + std::to_string(c.stride),
          {{"x", random_array({c.cin, c.extent, c.extent, c.extent}, 61)},
           {"w", random_array({c.cout, c.cin, c.k, c.k, c.k}, 62)},
           {"b", random_array({c.cout}, 63)}},
          [c](V& v) { return diff::conv3d(v[0], v[1], v[2], c.stride, c.pad); });
  }
  for (std::size_t stride : {1, 2}) {
    check(s, "conv_transpose3d s" + std::to_string(stride),
          {{"x", random_array({3, 2, 3, 2}, 64)}, {"w", random_array({3, 2, 2, 2, 2}, 65)}, {"b", random_array({2}, 66)}},
          [stride](V& v) { return diff::conv_transpose3d(v[0], v[1], v[2], stride); });
  }
  check(s, "trilinear_resize", {{"x", random_array({2, 3, 4, 2}, 67)}},
        [](V& v) { return diff::trilinear_resize(v[0], {5, 6, 3}); });
  check(s, "crop3d", {{"x", random_array({2, 5, 4, 6}, 71)}},
        [](V& v) { return diff::crop3d(v[0], {1, 0, 2}, {3, 4, 3}); });
  check(s, "instance_norm", {{"x", random_array({3, 2, 3, 2}, 72)}}, [](V& v) { return diff::instance_norm(v[0]); });
  check(s, "volume_to_tokens", {{"x", random_array({3, 2, 3, 2}, 73)}},
        [](V& v) { return diff::volume_to_tokens(v[0]); });
  check(s, "tokens_to_volume", {{"x", random_array({12, 3}, 74)}},
        [](V& v) { return diff::tokens_to_volume(v[0], {2, 3, 2}); });

  auto t = std::make_shared<NdArray<double>>(random_array({4, 3}, 69));
  auto w = std::make_shared<NdArray<double>>(random_array({4, 3}, 70, 0, 1));
  check(s, "weighted_sq_error", {{"p", random_array({4, 3}, 68)}},
        [=](V& v) { return diff::weighted_sq_error(v[0], t, w); });
  auto y = std::make_shared<std::vector<std::int32_t>>(std::vector<std::int32_t>{0, 2, -1, 1});
  auto yw = std::make_shared<std::vector<double>>(std::vector<double>{1.0, 0.5, 1.0, 2.0});
  check(s, "softmax_cross_entropy", {{"logits", random_array({4, 3}, 71, -2, 2)}},
        [=](V& v) { return diff::softmax_cross_entropy(v[0], y, yw); });
  NdArray<double> bin({8});
  for (std::size_t i = 0; i < 8; i += 3) bin[i] = 1;
  auto tb = std::make_shared<NdArray<double>>(bin);
  check(s, "sigmoid_focal_loss", {{"logits", random_array({8}, 72, -3, 3)}},
        [=](V& v) { return diff::sigmoid_focal_loss(v[0], tb, 0.25, 2.0); });
  check(s, "bce_with_logits", {{"logits", random_array({8}, 72, -3, 3)}},
        [=](V& v) { return diff::bce_with_logits(v[0], tb); });
  auto ti = std::make_shared<NdArray<double>>(random_array({3, 6}, 74, 0.5, 2));
  auto iw = std::make_shared<std::vector<double>>(std::vector<double>{1.0, 0.0, 2.0});
  check(s, "offset_iou_loss", {{"pred", random_array({3, 6}, 73, 0.5, 2)}},
        [=](V& v) { return diff::offset_iou_loss(v[0], ti, iw); });
}

std::vector<Parameter<double>*> all_params(std::vector<Parameter<double>>& ps) {
  std::vector<Parameter<double>*> out;
  for (auto& p : ps) out.push_back(&p);
  return out;
}

void randomize(ParameterStore<double>& store, std::uint64_t seed, double scale) {
  for (auto& p : store.all()) p.array() = random_array(p.var.shape(), seed++, -scale, scale);
}

void module_gradients(GradSuite& s) {
  {
    ParameterStore<double> store;
    swin::WindowAttention<double> attn(store, "attn", 4, 2, 2);
    auto x = store.create("x", {64, 4}, diff::Init::kZeros);
    randomize(store, 60, 0.5);
    const auto plan = swin::make_window_plan({4, 4, 4}, 2, true);
    const auto r = diff::constant(random_array({64, 4}, 61));
    auto ps = store.all();
    s.record("shifted window attention",
             diff::grad_check<double>([&]() { return diff::sum(diff::mul(attn(x, plan), r)); }, all_params(ps),
                                      {1e-5, kGradTolerance, 0, 1e-6}));
  }
  {
    ParameterStore<double> store;
    swin::SwinBlock<double> block(store, "blk", 4, 2, 2, 4);
    auto x = store.create("x", {64, 4}, diff::Init::kZeros);
    randomize(store, 70, 0.5);
    const auto plan = swin::make_window_plan({4, 4, 4}, 2, true);
    const auto r = diff::constant(random_array({64, 4}, 71));
    auto ps = store.all();
    s.record("swin block", diff::grad_check<double>([&]() { return diff::sum(diff::mul(block(x, plan), r)); },
                                                    all_params(ps), {1e-5, kGradTolerance, 0, 1e-6}));
  }
  {
    ParameterStore<double> store;
    swin::PatchMerging<double> merge(store, "merge", 2);
    auto x = store.create("x", {64, 2}, diff::Init::kZeros);
    randomize(store, 80, 0.5);
    const auto r = diff::constant(random_array({8, 4}, 81));
    auto ps = store.all();
    s.record("patch merging",
             diff::grad_check<double>([&]() { return diff::sum(diff::mul(merge(x, {4, 4, 4}), r)); }, all_params(ps),
                                      {1e-5, kGradTolerance, 0, 1e-6}));
  }
  {
    swin::EncoderConfig cfg;
    cfg.input = {8, 8, 8};
    cfg.patch = 1;
    cfg.embed_dim = 4;
    cfg.depths = {1, 1, 1, 1};
    cfg.heads = {1, 1, 2, 2};
    cfg.window = 2;
    cfg.mlp_ratio = 2;
    recon::MaskedAutoencoder<double> model(cfg);
    randomize(model.store(), 30, 0.3);
    const auto target = random_array({4, 8, 8, 8}, 3, 0, 0.05);
    const auto mask = swin::mask_patches({8, 8, 8}, 1, 0.75, 4);
    auto input = target;
    swin::zero_masked(input, mask.voxel_flags());
    auto flags = std::make_shared<std::vector<std::uint8_t>>(mask.patch_flags());
    auto fn = [&]() { return recon::recon_loss(model(diff::constant(input), flags), target, mask).total; };
    auto ps = model.store().all();
    s.record("masked reconstruction loss (8^3 micro config)",
             diff::grad_check<double>(fn, all_params(ps), {1e-4, kGradTolerance, 4, 1e-6}));
  }
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  GradSuite s;
  primitive_gradients(s);
  module_gradients(s);
  const double t = seconds_since(t0);
  return {s.failed == 0 && t < kGradBudgetS,
          std::to_string(s.checks) + " checks, " + std::to_string(s.failed) + " failed, worst " +
              fmt("%.2e", s.worst) + " (" + s.worst_name + "), " + fmt("%.1f s", t)};
}

// ---- criterion 4 ----

struct HomogeneousField {
  double sigma = 2;
  scene::Vec3 color = scene::Vec3(0.2, 0.5, 0.9);
  scene::FieldSample query(const scene::Vec3&, const scene::Vec3&) const { return {color, sigma}; }
};

Outcome rendering_oracle() {
  const auto t0 = Clock::now();
  const HomogeneousField f;
  const double length = 0.5;
  const scene::Ray ray{scene::Vec3::Zero(), scene::Vec3::UnitX(), 0.0, length};
  const scene::Vec3 expected = f.color * (1.0 - std::exp(-f.sigma * length));
  auto error = [&](int n) {
    scene::RenderConfig cfg;
    cfg.samples_per_ray = n;
    return (scene::render_ray(f, ray, cfg).rgb - expected).cwiseAbs().maxCoeff();
  };
  const double err256 = error(256);
  bool monotone = true;
  double previous = std::numeric_limits<double>::infinity();
  for (int n : {8, 32, 128, 512}) {
    const double e = error(n);
    monotone = monotone && e <= previous + kMonotoneSlack;
    previous = e;
  }
  double energy = 0;
  CounterRng rng(11);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto s = scene::make_synthetic_scene(seed);
    scene::RenderConfig cfg;
    cfg.jitter = true;
    cfg.seed = seed;
    const auto& b = s.scene.bounds;
    for (int i = 0; i < 200;) {
      const scene::Vec3 o = b.center() + 0.5 * scene::Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
      const scene::Vec3 target(rng.uniform(b.min.x(), b.max.x()), rng.uniform(b.min.y(), b.max.y()),
                               rng.uniform(b.min.z(), b.max.z()));
      const auto r = scene::bounded_ray(o, (target - o).normalized(), b);
      if (!r) continue;
      ++i;
      const auto out = scene::render_ray(s.scene, *r, cfg);
      energy = std::max(energy, std::abs(out.weight_sum + out.final_transmittance - 1.0));
    }
  }
  const double t = seconds_since(t0);
  return {err256 < kRenderTolerance && monotone && energy < kEnergyTolerance && t < kRenderBudgetS,
          "error@256 " + fmt("%.2e", err256) + ", monotone " + (monotone ? "yes" : "no") + ", energy defect " +
              fmt("%.2e", energy) + ", " + fmt("%.2f s", t)};
}

// ---- criterion 5 ----

Outcome extraction_oracle() {
  const auto t0 = Clock::now();
  const auto s = scene::make_synthetic_scene(1, {2, 2});
  grid::GridSpec spec;
  spec.resolution = {32, 32, 32};
  spec.bounds = s.scene.bounds;
  const auto cams = scene::sample_camera_trajectory(s.scene.bounds, 12, 3);
  const auto g = grid::extract_grid(s.scene, cams, spec);
  double alpha_err = 0, color_err = 0;
  std::size_t occupied = 0;
  for (std::size_t i = 0; i < 32; ++i) {
    for (std::size_t j = 0; j < 32; ++j) {
      for (std::size_t k = 0; k < 32; ++k) {
        const auto q = s.scene.query(spec.world_of(i, j, k), scene::Vec3::UnitZ());
        const auto v = g.voxel(i, j, k);
        alpha_err = std::max(alpha_err, std::abs(g.alpha(v) - grid::alpha_from_sigma(q.sigma, 0.01)));
        for (int c = 0; c < 3; ++c) color_err = std::max(color_err, std::abs(g.at(v, c) - q.rgb[c]));
        occupied += g.alpha(v) > 0;
      }
    }
  }
  const double t = seconds_since(t0);
  return {alpha_err <= kExtractTolerance && color_err <= kExtractTolerance && occupied > 0 && t < kExtractBudgetS,
          "max alpha error " + fmt("%.2e", alpha_err) + ", max color error " + fmt("%.2e", color_err) + ", " +
              std::to_string(occupied) + " occupied voxels, " + fmt("%.2f s", t)};
}

// ---- criterion 6 ----

Outcome fit_fidelity() {
  const auto t0 = Clock::now();
  const auto s = scene::make_synthetic_scene(1, {2, 2});
  const auto cams = scene::sample_camera_trajectory(s.scene.bounds, 12, 3);
  scene::RenderConfig rc;
  rc.samples_per_ray = 128;
  std::vector<scene::Image> images;
  for (const auto& c : cams) images.push_back(scene::render_image(s.scene, c, s.scene.bounds, rc, true));
  scene::TrainableField field({}, 5);
  scene::fit_field(images, cams, field, {});
  grid::GridSpec spec;
  spec.resolution = {32, 32, 32};
  spec.bounds = s.scene.bounds;
  const auto truth = grid::ground_truth_grid(s.scene, spec);
  const auto fitted = grid::extract_grid(field, cams, spec);
  std::vector<float> p, q;
  for (std::size_t v = 0; v < spec.voxel_count(); ++v) {
    if (truth.alpha(v) <= 0) continue;
    for (int c = 0; c < 4; ++c) {
      p.push_back(fitted.at(v, c));
      q.push_back(truth.at(v, c));
    }
  }
  const auto r = metrics::psnr_mse_3d(p, q);
  const double t = seconds_since(t0);
  return {r.psnr >= kFitPsnrDb && t < kFitBudgetS, "3D PSNR " + fmt("%.2f dB", r.psnr) + " over " +
                                                       std::to_string(p.size() / 4) + " occupied voxels, " +
                                                       fmt("%.0f s", t)};
}

// ---- criteria 7 and 8 share the pretrained model ----

constexpr std::uint64_t kEvalMaskSeed = 99;

std::vector<NdArray<float>> pretraining_grids() {
  std::vector<NdArray<float>> grids;
  for (std::uint64_t s = 0; s < 16; ++s) {
    const auto sc = scene::make_synthetic_scene(100 + s);
    grid::GridSpec spec;
    spec.bounds = sc.scene.bounds;
    grids.push_back(swin::channel_first<float>(grid::ground_truth_grid(sc.scene, spec)));
  }
  return grids;
}

struct Pretrained {
  std::unique_ptr<recon::MaskedAutoencoder<float>> model;
  recon::ReconEvaluation before, after;
  double first_step = 0, last_mean = 0, seconds = 0;
};

const Pretrained& pretrained() {
  static std::optional<Pretrained> cache;
  if (cache) return *cache;
  Pretrained out;
  const auto grids = pretraining_grids();
  const pipeline::RunConfig rc;
  out.model = std::make_unique<recon::MaskedAutoencoder<float>>(pipeline::encoder_config(rc));
  diff::init_parameters(out.model->store(), 1);
  auto cfg = pipeline::pretrain_config(rc);
  out.before = recon::evaluate_reconstruction(*out.model, grids, cfg.mask_ratio, kEvalMaskSeed);
  diff::Adam<float> opt(cfg.adam());
  const auto t0 = Clock::now();
  const auto history = recon::pretrain(*out.model, grids, cfg, opt, [](const recon::LossRow& r) {
    if (r.step % 20 == 0) std::cerr << "  pretrain step " << r.step << " total " << r.total << "\n";
  });
  out.seconds = seconds_since(t0);
  out.first_step = history.front().total;
  const std::size_t tail = std::min<std::size_t>(10, history.size());
  for (std::size_t i = history.size() - tail; i < history.size(); ++i) out.last_mean += history[i].total / tail;
  out.after = recon::evaluate_reconstruction(*out.model, grids, cfg.mask_ratio, kEvalMaskSeed);
  cache = std::move(out);
  return *cache;
}

Outcome pretraining_sanity() {
  const auto& p = pretrained();
  const bool halved = p.after.total < kHalvingRatio * p.before.total && p.last_mean < kHalvingRatio * p.first_step;
  const bool beats = p.after.psnr() >= p.after.baseline_psnr() + kPsnrMarginDb;
  std::ostringstream os;
  os << "held-out-mask loss " << fmt("%.4f", p.before.total) << " -> " << fmt("%.4f", p.after.total)
     << ", training loss first " << fmt("%.4f", p.first_step) << " last-10 mean " << fmt("%.4f", p.last_mean)
     << ", PSNR " << fmt("%.2f", p.after.psnr()) << " dB vs mean baseline " << fmt("%.2f", p.after.baseline_psnr())
     << " dB (need +" << kPsnrMarginDb << "), " << fmt("%.0f s", p.seconds);
  return {halved && beats && p.seconds < kPretrainBudgetS, os.str()};
}

// ---- criterion 8 ----

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Outcome transfer_direction() {
  const auto& pre = pretrained();
  const auto t0 = Clock::now();
  std::vector<downstream::LabeledScene> train, val;
  for (std::uint64_t i = 0; i < 24; ++i) train.push_back(downstream::make_labeled_scene(2000 + i, 32));
  for (std::uint64_t i = 24; i < 32; ++i) val.push_back(downstream::make_labeled_scene(2000 + i, 32));
  const std::string enc_text = pre.model->config().describe();
  const auto ckpt = pipeline::make_checkpoint(pre.model->store(), enc_text, 0);
  std::ostringstream os;
  bool ok = true;
  for (const auto task : {downstream::Task::kLabel, downstream::Task::kDetect}) {
    std::vector<double> arm[2];
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      pipeline::RunConfig rc;
      rc.set("seed", std::to_string(seed));
      for (int scratch = 0; scratch < 2; ++scratch) {
        downstream::TaskModel<float> model(pipeline::encoder_config(rc), pipeline::task_config(rc, task));
        model.initialize(derive_seed(seed, "finetune_init"), false);
        if (!scratch) pipeline::load_parameters(ckpt, model.store(), enc_text, true);
        const auto r = downstream::finetune(model, train, val);
        arm[scratch].push_back(r.best_metric);
        std::cerr << "  " << downstream::task_name(task) << " seed " << seed << (scratch ? " scratch " : " pretrained ")
                  << r.best_metric << "\n";
      }
    }
    const double mp = median(arm[0]), ms = median(arm[1]);
    ok = ok && mp >= ms;
    os << (task == downstream::Task::kLabel ? "mAcc" : "AP50") << " pretrained " << fmt("%.4f", mp) << " scratch "
       << fmt("%.4f", ms) << " delta " << fmt("%+.4f", mp - ms) << ", ";
  }
  const double t = seconds_since(t0);
  os << fmt("%.0f s", t);
  return {ok && t < kTransferBudgetS, os.str()};
}

// ---- criterion 9 ----

metrics::Box3 unit_cube(double x, double score = 1) { return {{x, 0, 0}, {1, 1, 1}, score, 0}; }

/// AP from the top-k precision/recall list, taking at each recall step the
/// best precision at any cutoff with at least that recall.
double brute_force_ap(const std::vector<bool>& hits, std::size_t total_gt) {
  std::vector<double> p, r;
  std::size_t h = 0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    h += hits[k];
    p.push_back(double(h) / double(k + 1));
    r.push_back(double(h) / double(total_gt));
  }
  double ap = 0, prev = 0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    if (!hits[k]) continue;
    double best = 0;
    for (std::size_t j = 0; j < hits.size(); ++j) {
      if (r[j] >= r[k]) best = std::max(best, p[j]);
    }
    ap += (r[k] - prev) * best;
    prev = r[k];
  }
  return ap;
}

Outcome metrics_oracles() {
  const auto t0 = Clock::now();
  const double psnr = metrics::psnr_from_mse(0.019);
  const bool psnr_ok = std::abs(psnr - 17.21) < 0.005 && std::abs(psnr - kReferencePsnr) <= kPsnrAgreementDb;
  const double iou = metrics::iou_aabb(unit_cube(0), unit_cube(0.5));
  const bool iou_ok = std::abs(iou - 1.0 / 3.0) <= kExactTolerance;
  const std::vector<metrics::Box3> gts{unit_cube(0), unit_cube(5)};
  const std::vector<metrics::Box3> dets{unit_cube(0, 0.9), unit_cube(10, 0.8), unit_cube(5, 0.7)};
  const auto ap = metrics::ap_recall(std::vector<std::vector<metrics::Box3>>{dets},
                                     std::vector<std::vector<metrics::Box3>>{gts}, 0.5);
  const double oracle = brute_force_ap({true, false, true}, 2);
  const bool ap_ok = std::abs(ap.ap - 5.0 / 6.0) <= kExactTolerance && std::abs(ap.ap - oracle) <= kExactTolerance;
  metrics::ConfusionMatrix m(2);
  m.counts = {{3, 1}, {1, 3}};
  const auto seg = metrics::segmentation_scores(m);
  const bool seg_ok = std::abs(seg.miou - 0.6) <= kExactTolerance && std::abs(seg.macc - 0.75) <= kExactTolerance &&
                      std::abs(seg.acc - 0.75) <= kExactTolerance;
  const double t = seconds_since(t0);
  std::ostringstream os;
  os << "PSNR(0.019) " << fmt("%.4f", psnr) << " dB, IoU " << fmt("%.15f", iou) << ", AP " << fmt("%.15f", ap.ap)
     << " (oracle " << fmt("%.15f", oracle) << "), confusion (" << seg.miou << ", " << seg.macc << ", " << seg.acc
     << "), " << fmt("%.4f s", t);
  return {psnr_ok && iou_ok && ap_ok && seg_ok && t < kMetricsBudgetS, os.str()};
}

// ---- criterion 10 ----

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "nerfmae");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = pipeline::run_command(static_cast<int>(argv.size()), argv.data(), out, err);
  if (rc != 0) std::cerr << "  command failed: " << args[1] << ": " << err.str() << "\n";
  return rc;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = bytes::read_file(e.path());
  }
  return out;
}

/// Numeric tokens compared to a relative tolerance, other text exactly.
bool tables_close(const std::string& a, const std::string& b) {
  std::istringstream sa(a), sb(b);
  std::string ta, tb;
  while (true) {
    const bool ga = static_cast<bool>(sa >> ta), gb = static_cast<bool>(sb >> tb);
    if (ga != gb) return false;
    if (!ga) return true;
    if (ta == tb) continue;
    try {
      const double x = std::stod(ta), y = std::stod(tb);
      if (!(std::abs(x - y) <= kDeterminismRelTol * std::max(std::abs(x), std::abs(y)))) return false;
    } catch (const std::exception&) {
      return false;
    }
  }
}

/// The echoed config starts with its hash; the rest names directories.
std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

bool is_table(const std::string& name) {
  const auto ext = fs::path(name).extension();
  return ext == ".tsv" || ext == ".txt";
}

Outcome determinism() {
  const auto t0 = Clock::now();
  const auto root = fs::temp_directory_path() / "nerfmae_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto cfg = (root / "run.cfg").string();
  std::ofstream(cfg) << "seed = 11\ncount = 4\nviews = 4\nimage_size = 24\nrender_samples = 64\n"
                        "fit_steps = 50\nfit_rays = 128\nfit_samples = 32\nresolution = 16\npatch = 2\n"
                        "embed_dim = 8\ndepths = 1,1,1,1\nheads = 1,1,2,2\nwindow = 2\nmlp_ratio = 2\n"
                        "steps = 10\nbatch = 2\nfinetune_epochs = 2\nfinetune_batch = 2\n";
  std::map<std::string, std::string> trees[2];
  bool ran = true;
  for (int rep = 0; rep < 2 && ran; ++rep) {
    const auto dir = root / ("run" + std::to_string(rep));
    const auto data = (dir / "data").string(), out = (dir / "out").string();
    const auto pre = out + "/pretrain.ckpt";
    ran = run_cli({"synth", "--config", cfg, "--data", data}) == 0 &&
          run_cli({"fit", "--config", cfg, "--data", data}) == 0 &&
          run_cli({"extract", "--config", cfg, "--data", data}) == 0 &&
          run_cli({"pretrain", "--config", cfg, "--data", data, "--out", out}) == 0 &&
          run_cli({"finetune", "--config", cfg, "--data", data, "--out", out, "--task", "label", "--init", pre}) == 0 &&
          run_cli({"finetune", "--config", cfg, "--data", data, "--out", out, "--task", "detect", "--init", pre}) ==
              0 &&
          run_cli({"eval", "--config", cfg, "--data", data, "--out", out, "--checkpoint",
                   out + "/label.ckpt," + out + "/detect.ckpt," + pre}) == 0;
    if (ran) trees[rep] = tree_contents(dir);
  }
  std::size_t files = 0, exact = 0, mismatched = 0;
  if (ran) {
    for (const auto& [name, bytes] : trees[0]) {
      ++files;
      const auto it = trees[1].find(name);
      const bool skip_paths = fs::path(name).filename() == pipeline::kRunConfigFile;
      if (it == trees[1].end()) {
        ++mismatched;
      } else if (it->second == bytes) {
        ++exact;
      } else if (skip_paths ? first_line(bytes) != first_line(it->second)
                            : !(is_table(name) && tables_close(bytes, it->second))) {
        std::cerr << "  differs: " << name << "\n";
        ++mismatched;
      }
    }
    mismatched += trees[1].size() > trees[0].size() ? trees[1].size() - trees[0].size() : 0;
  }
  const auto m1 = swin::mask_patches({40, 40, 40}, 4, 0.75, 123), m2 = swin::mask_patches({40, 40, 40}, 4, 0.75, 123);
  const bool masks = m1.patch_flags() == m2.patch_flags();
  const double t = seconds_since(t0);
  return {ran && files > 0 && mismatched == 0 && masks && t < kDeterminismBudgetS,
          std::to_string(files) + " files compared, " + std::to_string(exact) + " bit-identical, " +
              std::to_string(mismatched) + " mismatched, masks " + (masks ? "identical" : "differ") + ", " +
              fmt("%.0f s", t)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"masking count", masking_count},
      {"shape pyramid", shape_pyramid},
      {"gradient suite", gradient_suite},
      {"rendering oracle", rendering_oracle},
      {"grid extraction oracle", extraction_oracle},
      {"fit fidelity", fit_fidelity},
      {"pretraining sanity", pretraining_sanity},
      {"transfer direction", transfer_direction},
      {"metrics oracles", metrics_oracles},
      {"determinism", determinism},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(static_cast<std::size_t>(std::stoul(argv[i])));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << (i + 1) << " [" << criteria[i].first << "]: " << (o.pass ? "PASS" : "FAIL") << "  "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
