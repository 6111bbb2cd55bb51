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

#ifndef NERFMAE_DIFFCORE_OPTIM_HPP_
#define NERFMAE_DIFFCORE_OPTIM_HPP_

#include <cmath>
#include <numbers>

#include "nerfmae/diffcore/parameters.hpp"

namespace nerfmae::diff {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

/// Adaptive-moment optimizer with decoupled weight decay. Moments are kept
/// per parameter name so they can be checkpointed.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(ParameterStore<T>& store, double lr) {
    ++steps_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (auto& p : store.all()) {
      if (!p.var.has_grad()) continue;
      auto [m, v] = state_for(p);
      auto& w = p.array();
      const auto& g = p.var.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = static_cast<T>(config_.beta1 * static_cast<double>(m[i]) + (1.0 - config_.beta1) * gi);
        v[i] = static_cast<T>(config_.beta2 * static_cast<double>(v[i]) + (1.0 - config_.beta2) * gi * gi);
        const double mhat = static_cast<double>(m[i]) / bc1;
        const double vhat = static_cast<double>(v[i]) / bc2;
        double wi = static_cast<double>(w[i]);
        wi -= lr * config_.weight_decay * wi;
        wi -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
        w[i] = static_cast<T>(wi);
      }
    }
  }

  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t s) { steps_ = s; }
  const AdamConfig& config() const { return config_; }

  struct Moments {
    NdArray<T> m, v;
  };
  std::map<std::string, Moments>& moments() { return state_; }
  const std::map<std::string, Moments>& moments() const { return state_; }

 private:
  std::pair<NdArray<T>&, NdArray<T>&> state_for(const Parameter<T>& p) {
    auto it = state_.find(p.name);
    if (it == state_.end()) {
      it = state_.emplace(p.name, Moments{NdArray<T>(p.var.shape()), NdArray<T>(p.var.shape())}).first;
    }
    return {it->second.m, it->second.v};
  }

  AdamConfig config_;
  std::size_t steps_ = 0;
  std::map<std::string, Moments> state_;
};

/// One-cycle schedule: cosine ramp from max/div to max over the first
/// `pct_start` of the run, then cosine anneal to max/final_div.
struct OneCycleSchedule {
  double max_lr = 3e-4;
  std::size_t total_steps = 1;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;

  std::size_t peak_step() const {
    if (total_steps <= 1) return 0;
    return static_cast<std::size_t>(std::floor(pct_start * static_cast<double>(total_steps - 1)));
  }

  double lr(std::size_t step) const {
    const std::size_t peak = peak_step();
    if (step == peak) return max_lr;
    const double initial = max_lr / div_factor;
    const double final_lr = initial / final_div_factor;
    auto cosine = [](double from, double to, double frac) {
      return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
    };
    if (step < peak) {
      return cosine(initial, max_lr, static_cast<double>(step) / static_cast<double>(peak));
    }
    const std::size_t last = total_steps > 0 ? total_steps - 1 : 0;
    if (step >= last) return final_lr;
    return cosine(max_lr, final_lr, static_cast<double>(step - peak) / static_cast<double>(last - peak));
  }
};

/// Global L2 norm over all parameter gradients.
template <typename T>
double global_grad_norm(const ParameterStore<T>& store) {
  double s = 0.0;
  for (const auto& p : store.all()) {
    if (!p.var.has_grad()) continue;
    for (T g : p.var.grad().values()) s += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(s);
}

/// Rescales gradients so their global norm is at most `max_norm`. Returns the
/// pre-clip norm.
template <typename T>
double clip_grad_norm(ParameterStore<T>& store, double max_norm) {
  if (max_norm <= 0) throw ContractError("clip_grad_norm: max_norm must be positive");
  const double norm = global_grad_norm(store);
  if (norm > max_norm) {
    const double factor = max_norm / (norm + 1e-12);
    for (auto& p : store.all()) {
      if (!p.var.has_grad()) continue;
      for (auto& g : p.var.mutable_grad().values()) g = static_cast<T>(static_cast<double>(g) * factor);
    }
  }
  return norm;
}

}  // namespace nerfmae::diff

#endif  // NERFMAE_DIFFCORE_OPTIM_HPP_
