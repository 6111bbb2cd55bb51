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


#ifndef NERFMAE_SCENEFIELD_TRAINABLE_FIELD_HPP_
#define NERFMAE_SCENEFIELD_TRAINABLE_FIELD_HPP_

#include <array>
#include <cstddef>
#include <type_traits>
#include <vector>

#include "nerfmae/diffcore/ops_elementwise.hpp"
#include "nerfmae/diffcore/optim.hpp"
#include "nerfmae/scenefield/render.hpp"

namespace nerfmae::scene {

struct FieldConfig {
  int resolution = 32;
  int features = 8;
  int hidden = 16;
  double density_scale = 20;
  double init_density = -2;   // raw lattice value before softplus
  double direction_gain = 1;  // scale of the view direction fed to the mixer
  Bounds bounds = cube_bounds(0.2);
};

/// Trilinear corner indices and weights of a point in a lattice whose nodes
/// sit at the cell centers of an R^3 partition of the bounds.
struct LatticeTaps {
  std::array<std::size_t, 8> node{};
  std::array<double, 8> weight{};
};

inline LatticeTaps lattice_taps(const Vec3& x, const Bounds& b, int r) {
  std::array<std::size_t, 2> idx[3];
  std::array<double, 2> w[3];
  for (int a = 0; a < 3; ++a) {
    double g = (x[a] - b.min[a]) / (b.max[a] - b.min[a]) * r - 0.5;
    g = std::clamp(g, 0.0, static_cast<double>(r - 1));
    const auto lo = static_cast<std::size_t>(std::floor(g));
    const std::size_t hi = std::min<std::size_t>(lo + 1, r - 1);
    const double f = g - static_cast<double>(lo);
    idx[a] = {lo, hi};
    w[a] = {1.0 - f, f};
  }
  LatticeTaps t;
  int n = 0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 2; ++k, ++n) {
        t.node[n] = (idx[0][i] * r + idx[1][j]) * r + idx[2][k];
        t.weight[n] = w[0][i] * w[1][j] * w[2][k];
      }
    }
  }
  return t;
}

/// Density and color-feature lattices with a small direction-aware mixer:
/// sigma = s * softplus(density) and
/// rgb = sigmoid(feature[0:3] + W2 relu(W1 [feature, dir] + b1) + b2).
class TrainableField {
 public:
  explicit TrainableField(FieldConfig cfg = {}, std::uint64_t seed = 0) : cfg_(cfg) {
    if (cfg.resolution < 2 || cfg.features < 3 || cfg.hidden < 1) throw ConfigError("field: bad lattice config");
    if (!cfg.bounds.valid()) throw ConfigError("field: degenerate bounds");
    const std::size_t r = cfg.resolution;
    const std::size_t f = cfg.features;
    const std::size_t h = cfg.hidden;
    density_ = store_.create("field.density", {r, r, r}, diff::Init::kZeros);
    color_ = store_.create("field.color", {r, r, r, f}, diff::Init::kTruncNormal);
    w1_ = store_.create("field.mlp.fc1.weight", {h, f + 3}, diff::Init::kTruncNormal);
    b1_ = store_.create("field.mlp.fc1.bias", {h}, diff::Init::kZeros);
    w2_ = store_.create("field.mlp.fc2.weight", {3, h}, diff::Init::kTruncNormal);
    b2_ = store_.create("field.mlp.fc2.bias", {3}, diff::Init::kZeros);
    for (auto& p : store_.all()) {
      double std = 0.02;
      if (p.name == "field.color") std = 0.5;
      if (p.name == "field.mlp.fc1.weight") std = 1.0 / std::sqrt(static_cast<double>(f + 3));
      if (p.name == "field.mlp.fc2.weight") std = 1.0 / std::sqrt(static_cast<double>(h));
      diff::init_parameter(p, seed, std);
    }
    density_.mutable_value().fill(cfg.init_density);
  }

  const FieldConfig& config() const { return cfg_; }
  diff::ParameterStore<double>& parameters() { return store_; }
  const diff::ParameterStore<double>& parameters() const { return store_; }

  /// Forward state of one query, kept for the backward pass.
  struct Eval {
    LatticeTaps taps;
    double raw = 0;
    double sigma = 0;
    std::vector<double> input;   // [feature, dir]
    std::vector<double> hidden;  // post-activation
    Vec3 rgb = Vec3::Zero();
  };

  void evaluate(const Vec3& x, const Vec3& dir, Eval& e) const {
    const std::size_t f = cfg_.features;
    const std::size_t h = cfg_.hidden;
    e.taps = lattice_taps(x, cfg_.bounds, cfg_.resolution);
    const auto& dens = density_.value();
    const auto& col = color_.value();
    e.raw = 0;
    e.input.assign(f + 3, 0.0);
    for (int n = 0; n < 8; ++n) {
      const double w = e.taps.weight[n];
      e.raw += w * dens[e.taps.node[n]];
      const double* c = col.data() + e.taps.node[n] * f;
      for (std::size_t q = 0; q < f; ++q) e.input[q] += w * c[q];
    }
    for (int a = 0; a < 3; ++a) e.input[f + a] = cfg_.direction_gain * dir[a];
    e.sigma = cfg_.density_scale * diff::detail::stable_softplus(e.raw);
    e.hidden.assign(h, 0.0);
    const double* w1 = w1_.value().data();
    for (std::size_t j = 0; j < h; ++j) {
      double s = b1_.value()[j];
      for (std::size_t q = 0; q < f + 3; ++q) s += w1[j * (f + 3) + q] * e.input[q];
      e.hidden[j] = s > 0 ? s : 0;
    }
    const double* w2 = w2_.value().data();
    for (int c = 0; c < 3; ++c) {
      double s = b2_.value()[c] + e.input[c];
      for (std::size_t j = 0; j < h; ++j) s += w2[c * h + j] * e.hidden[j];
      e.rgb[c] = diff::detail::stable_sigmoid(s);
    }
  }

  FieldSample query(const Vec3& x, const Vec3& dir) const {
    Eval e;
    evaluate(x, dir, e);
    return {e.rgb, e.sigma};
  }

  /// Accumulates d loss / d params given d loss / d sigma and d loss / d rgb
  /// at an evaluated point.
  void accumulate(const Eval& e, double g_sigma, const Vec3& g_rgb) {
    const std::size_t f = cfg_.features;
    const std::size_t h = cfg_.hidden;
    auto& gd = density_.mutable_grad();
    auto& gc = color_.mutable_grad();
    auto& gw1 = w1_.mutable_grad();
    auto& gb1 = b1_.mutable_grad();
    auto& gw2 = w2_.mutable_grad();
    auto& gb2 = b2_.mutable_grad();
    const double g_raw = g_sigma * cfg_.density_scale * diff::detail::stable_sigmoid(e.raw);
    std::array<double, 3> g_pre{};
    for (int c = 0; c < 3; ++c) g_pre[c] = g_rgb[c] * e.rgb[c] * (1.0 - e.rgb[c]);
    std::vector<double> g_hidden(h, 0.0);
    const double* w2 = w2_.value().data();
    for (int c = 0; c < 3; ++c) {
      gb2[c] += g_pre[c];
      for (std::size_t j = 0; j < h; ++j) {
        gw2[c * h + j] += g_pre[c] * e.hidden[j];
        g_hidden[j] += g_pre[c] * w2[c * h + j];
      }
    }
    std::vector<double> g_feat(f, 0.0);
    for (int c = 0; c < 3; ++c) g_feat[c] = g_pre[c];
    const double* w1 = w1_.value().data();
    for (std::size_t j = 0; j < h; ++j) {
      if (e.hidden[j] <= 0) continue;
      const double gh = g_hidden[j];
      gb1[j] += gh;
      for (std::size_t q = 0; q < f + 3; ++q) gw1[j * (f + 3) + q] += gh * e.input[q];
      for (std::size_t q = 0; q < f; ++q) g_feat[q] += gh * w1[j * (f + 3) + q];
    }
    for (int n = 0; n < 8; ++n) {
      const double w = e.taps.weight[n];
      if (w == 0) continue;
      gd[e.taps.node[n]] += w * g_raw;
      double* c = gc.data() + e.taps.node[n] * f;
      for (std::size_t q = 0; q < f; ++q) c[q] += w * g_feat[q];
    }
  }

  /// Smoothness prior on the color features: weight * sum over neighboring
  /// lattice nodes of g * |f_n - f_m|^2, where the gate g = min(sigma_n,
  /// sigma_m) / (min(sigma_n, sigma_m) + gate_sigma) restricts smoothing to
  /// occupied space. The gate is held constant. Adds to the color gradient
  /// and returns the penalty.
  double color_smoothness(double weight, double gate_sigma) {
    if (weight <= 0) return 0;
    const std::size_t r = cfg_.resolution;
    const std::size_t f = cfg_.features;
    const std::size_t stride[3] = {r * r, r, 1};
    const auto& dens = density_.value();
    const auto& v = color_.value();
    auto& g = color_.mutable_grad();
    std::vector<double> sigma(dens.size());
    for (std::size_t n = 0; n < sigma.size(); ++n) {
      sigma[n] = cfg_.density_scale * diff::detail::stable_softplus(dens[n]);
    }
    double penalty = 0;
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t k = 0; k < r; ++k) {
          const std::size_t n = (i * r + j) * r + k;
          const std::size_t idx[3] = {i, j, k};
          for (int a = 0; a < 3; ++a) {
            if (idx[a] + 1 >= r) continue;
            const std::size_t m = n + stride[a];
            const double s = std::min(sigma[n], sigma[m]);
            const double w = weight * s / (s + gate_sigma);
            for (std::size_t q = 0; q < f; ++q) {
              const double d = v[n * f + q] - v[m * f + q];
              penalty += w * d * d;
              g[n * f + q] += 2 * w * d;
              g[m * f + q] -= 2 * w * d;
            }
          }
        }
      }
    }
    return penalty;
  }

 private:
  FieldConfig cfg_;
  diff::ParameterStore<double> store_;
  diff::Var<double> density_, color_, w1_, b1_, w2_, b2_;
};

/// Renders a ray through the trainable field. When `grad_of` is given it maps
/// the rendered color C to d loss / d C, which is backpropagated into the
/// field's gradients.
template <typename GradFn = std::nullptr_t>
Vec3 render_train_ray(TrainableField& field, const Ray& ray, int samples, const Vec3& background,
                      CounterRng* jitter, GradFn grad_of = nullptr) {
  const auto t = sample_depths(ray, samples, jitter);
  std::vector<TrainableField::Eval> evals(samples);
  std::vector<double> alpha(samples), trans(samples + 1), delta(samples);
  Vec3 color = Vec3::Zero();
  trans[0] = 1.0;
  for (int i = 0; i < samples; ++i) {
    field.evaluate(ray.at(t[i]), ray.direction, evals[i]);
    delta[i] = t[i + 1] - t[i];
    alpha[i] = 1.0 - std::exp(-evals[i].sigma * delta[i]);
    color += trans[i] * alpha[i] * evals[i].rgb;
    trans[i + 1] = trans[i] * (1.0 - alpha[i]);
  }
  const Vec3 total = color + trans[samples] * background;
  if constexpr (!std::is_same_v<GradFn, std::nullptr_t>) {
    const Vec3 g_rgb = grad_of(total);
    Vec3 prefix = Vec3::Zero();
    for (int i = 0; i < samples; ++i) {
      const double w = trans[i] * alpha[i];
      prefix += w * evals[i].rgb;
      const Vec3 suffix = total - prefix;  // sum_{k>i} w_k c_k + T_n bg
      const Vec3 dc_dsigma = delta[i] * (trans[i + 1] * evals[i].rgb - suffix);
      field.accumulate(evals[i], g_rgb.dot(dc_dsigma), w * g_rgb);
    }
  }
  return total;
}

struct FitConfig {
  int steps = 2000;
  int batch_rays = 512;
  int samples_per_ray = 64;
  double lr = 1e-2;
  Vec3 background = Vec3::Zero();
  double smooth_color = 1e-3;  // weight of the occupancy-gated color prior
  double smooth_gate = 5;      // density at which the gate reaches one half
  std::uint64_t seed = 0;
};

struct FitResult {
  std::vector<double> loss_history;  // mean squared photometric error per step
};

/// Fits the field to posed images by minimizing the mean squared error of
/// randomly sampled pixels. Pixels whose rays miss the bounds are skipped.
/// Images with an alpha channel are composited over a random background per
/// ray, which also supervises transmittance.
inline FitResult fit_field(const std::vector<Image>& images, const std::vector<Camera>& cameras,
                           TrainableField& field, const FitConfig& cfg) {
  if (images.size() != cameras.size()) throw DatasetError("fit_field: image and camera counts differ");
  if (images.size() < 2) throw DatasetError("fit_field: need at least 2 posed images");
  if (cfg.batch_rays < 1 || cfg.samples_per_ray < 2) throw ConfigError("fit_field: bad batch configuration");
  struct Sample {
    Ray ray;
    const Image* image;
    int u, v;
  };
  std::vector<Sample> pool;
  for (std::size_t c = 0; c < cameras.size(); ++c) {
    const auto& img = images[c];
    if (img.width != cameras[c].width || img.height != cameras[c].height) {
      throw DatasetError("fit_field: image " + std::to_string(c) + " does not match its camera size");
    }
    for (int v = 0; v < img.height; ++v) {
      for (int u = 0; u < img.width; ++u) {
        if (auto ray = camera_ray(cameras[c], u, v, field.config().bounds)) pool.push_back({*ray, &img, u, v});
      }
    }
  }
  if (pool.empty()) throw DatasetError("fit_field: no pixel ray intersects the scene bounds");
  diff::Adam<double> adam;
  CounterRng rng(derive_seed(cfg.seed, "fit_field"));
  FitResult result;
  const double norm = 1.0 / (3.0 * cfg.batch_rays);
  for (int step = 0; step < cfg.steps; ++step) {
    field.parameters().zero_grad();
    for (auto& p : field.parameters().all()) p.var.mutable_grad();
    double loss = 0;
    for (int b = 0; b < cfg.batch_rays; ++b) {
      const Sample& s = pool[rng.below(pool.size())];
      Vec3 background = cfg.background;
      if (s.image->has_alpha()) background = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
      const Vec3 target = s.image->over(s.u, s.v, background);
      CounterRng jitter(rng.next_u64());
      render_train_ray(field, s.ray, cfg.samples_per_ray, background, &jitter, [&](const Vec3& pred) {
        const Vec3 r = pred - target;
        loss += r.squaredNorm() * norm;
        return Vec3(2.0 * norm * r);
      });
    }
    result.loss_history.push_back(loss);
    field.color_smoothness(cfg.smooth_color, cfg.smooth_gate);
    adam.step(field.parameters(), cfg.lr);
  }
  return result;
}

}  // namespace nerfmae::scene

#endif  // NERFMAE_SCENEFIELD_TRAINABLE_FIELD_HPP_
