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

#ifndef NERFMAE_DIFFCORE_GRAD_CHECK_HPP_
#define NERFMAE_DIFFCORE_GRAD_CHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "nerfmae/diffcore/parameters.hpp"

namespace nerfmae::diff {

inline constexpr double kRelErrDenomFloor = 1e-8;

inline double relative_error(double analytic, double numeric, double floor = kRelErrDenomFloor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct ParamGradReport {
  std::string name;
  std::vector<std::size_t> checked;  // flat indices that were probed
  std::vector<double> analytic;
  std::vector<double> numeric;
  double max_rel_error = 0.0;
};

struct GradReport {
  std::vector<ParamGradReport> params;
  double max_rel_error = 0.0;
  std::string worst;  // "name[index]"
  bool passed = false;
};

/// Analytic gradients of a scalar loss w.r.t. `params`; unreachable
/// parameters get zeros.
template <typename T>
std::vector<NdArray<T>> gradients(const Var<T>& loss, std::vector<Var<T>> params) {
  for (auto& p : params) p.zero_grad();
  backward(loss);
  std::vector<NdArray<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.has_grad() ? p.grad() : NdArray<T>(p.shape()));
  return out;
}

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-4;
  // Probe at most this many entries per parameter (evenly strided); 0 = all.
  std::size_t max_entries_per_param = 0;
  // Lower bound on the relative-error denominator; entries whose gradient is
  // structurally zero compare against this instead of rounding noise.
  double denominator_floor = kRelErrDenomFloor;
};

/// Central-difference check of d loss / d params. `loss_fn` rebuilds the loss
/// from the current parameter values each call.
template <typename T>
GradReport grad_check(const std::function<Var<T>()>& loss_fn, std::vector<Parameter<T>*> params,
                      GradCheckOptions opts = {}) {
  if (opts.step <= 0) throw ContractError("grad_check: step must be positive");
  const T base1 = loss_fn().item();
  const T base2 = loss_fn().item();
  if (!(base1 == base2)) {
    throw DeterminismError("grad_check: two baseline evaluations differ (" + std::to_string(base1) + " vs " +
                           std::to_string(base2) + ")");
  }
  std::vector<Var<T>> vars;
  for (auto* p : params) vars.push_back(p->var);
  const auto analytic = gradients(loss_fn(), vars);

  GradReport report;
  report.passed = true;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& arr = params[pi]->array();
    ParamGradReport pr;
    pr.name = params[pi]->name;
    const std::size_t n = arr.size();
    const std::size_t stride =
        (opts.max_entries_per_param == 0 || n <= opts.max_entries_per_param) ? 1 : n / opts.max_entries_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const T saved = arr[i];
      arr[i] = saved + static_cast<T>(opts.step);
      const double fp = static_cast<double>(loss_fn().item());
      arr[i] = saved - static_cast<T>(opts.step);
      const double fm = static_cast<double>(loss_fn().item());
      arr[i] = saved;
      const double num = (fp - fm) / (2.0 * opts.step);
      const double ana = static_cast<double>(analytic[pi][i]);
      const double err = relative_error(ana, num, opts.denominator_floor);
      pr.checked.push_back(i);
      pr.analytic.push_back(ana);
      pr.numeric.push_back(num);
      pr.max_rel_error = std::max(pr.max_rel_error, err);
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = pr.name + "[" + std::to_string(i) + "]";
      }
    }
    report.params.push_back(std::move(pr));
  }
  report.passed = report.max_rel_error < opts.tolerance;
  return report;
}

}  // namespace nerfmae::diff

#endif  // NERFMAE_DIFFCORE_GRAD_CHECK_HPP_
