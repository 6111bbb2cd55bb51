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

#ifndef NERFMAE_DIFFCORE_PARAMETERS_HPP_
#define NERFMAE_DIFFCORE_PARAMETERS_HPP_

#include <map>
#include <string>
#include <vector>

#include "nerfmae/diffcore/autograd.hpp"
#include "nerfmae/rng.hpp"

namespace nerfmae::diff {

enum class Init { kTruncNormal, kZeros, kOnes };

template <typename T>
struct Parameter {
  std::string name;
  Var<T> var;
  Init init = Init::kTruncNormal;

  const NdArray<T>& array() const { return var.value(); }
  NdArray<T>& array() { return var.mutable_value(); }
};

/// Ordered, name-unique collection of trainable arrays. Models register their
/// parameters here at construction and keep the returned handles.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Var<T> create(const std::string& name, Shape shape, Init init) {
    if (index_.count(name)) throw ContractError("parameter name registered twice: " + name);
    const T fill = init == Init::kOnes ? T(1) : T(0);
    Parameter<T> p{name, Var<T>(NdArray<T>(std::move(shape), fill), true), init};
    index_[name] = params_.size();
    params_.push_back(p);
    return p.var;
  }

  std::vector<Parameter<T>>& all() { return params_; }
  const std::vector<Parameter<T>>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  Parameter<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

 private:
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Weight-style parameters draw from a normal(0, 0.02) truncated at +-2 sigma;
/// zeros/ones are exact. Each parameter has its own stream keyed by
/// (seed, name), so results do not depend on registration order.
template <typename T>
void init_parameter(Parameter<T>& p, std::uint64_t seed, double stddev = 0.02) {
  auto& arr = p.array();
  switch (p.init) {
    case Init::kZeros:
      arr.fill(T(0));
      break;
    case Init::kOnes:
      arr.fill(T(1));
      break;
    case Init::kTruncNormal: {
      CounterRng rng(derive_seed(seed, p.name));
      for (auto& v : arr.values()) v = static_cast<T>(rng.truncated_normal(stddev));
      break;
    }
  }
}

template <typename T>
void init_parameters(ParameterStore<T>& store, std::uint64_t seed, double stddev = 0.02) {
  for (auto& p : store.all()) init_parameter(p, seed, stddev);
}

}  // namespace nerfmae::diff

#endif  // NERFMAE_DIFFCORE_PARAMETERS_HPP_
