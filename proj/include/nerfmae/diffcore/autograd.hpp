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

#ifndef NERFMAE_DIFFCORE_AUTOGRAD_HPP_
#define NERFMAE_DIFFCORE_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "nerfmae/diffcore/ndarray.hpp"

namespace nerfmae::diff {

/// Graph recording switch for the current thread.
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

/// Disables graph recording for its lifetime (inference, evaluation).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  NdArray<T> value;
  NdArray<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs that require grad.
  std::function<void(Node&)> backward;

  NdArray<T>& ensure_grad() {
    if (grad.size() != value.size()) grad = NdArray<T>(value.shape());
    return grad;
  }
  bool is_leaf() const { return !backward; }
};

/// Handle to a value in the recorded computation graph.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(NdArray<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const NdArray<T>& value() const { return node_->value; }
  NdArray<T>& mutable_value() { return node_->value; }
  const NdArray<T>& grad() const { return node_->grad; }
  NdArray<T>& mutable_grad() { return node_->ensure_grad(); }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool valid() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  /// Scalar read-out; throws if not a single element.
  T item() const {
    if (node_->value.size() != 1) throw ContractError("item: not a scalar");
    return node_->value[0];
  }

  void zero_grad() {
    if (has_grad()) node_->grad.fill(T(0));
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
Var<T> constant(NdArray<T> value) {
  return Var<T>(std::move(value), false);
}

/// Builds an op result. The backward closure is recorded only when grad mode
/// is on and some input requires grad.
template <typename T, typename Backward>
Var<T> make_result(NdArray<T> value, std::vector<Var<T>> inputs, Backward&& backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::forward<Backward>(backward);
  }
  return Var<T>(std::move(node));
}

/// Input i of `self` wants a gradient contribution.
template <typename T>
inline bool wants_grad(const Node<T>& self, std::size_t i) {
  return self.inputs[i] && self.inputs[i]->requires_grad;
}

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into leaves.
template <typename T>
void backward(const Var<T>& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->is_leaf()) continue;
    if (node->grad.size() == node->value.size()) {
      node->backward(*node);
      node->grad = NdArray<T>();  // interior gradients are transient
    }
  }
}

/// Gradient of `accumulate_into` helper: lazily allocates the input's grad.
template <typename T>
inline NdArray<T>& input_grad(Node<T>& self, std::size_t i) {
  return self.inputs[i]->ensure_grad();
}

}  // namespace nerfmae::diff

#endif  // NERFMAE_DIFFCORE_AUTOGRAD_HPP_
