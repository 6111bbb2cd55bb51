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


#ifndef NERFMAE_SWIN3D_WINDOW_ATTENTION_HPP_
#define NERFMAE_SWIN3D_WINDOW_ATTENTION_HPP_

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "nerfmae/diffcore/layers.hpp"

namespace nerfmae::swin {

using diff::Extent3;
using diff::Var;

/// What to do when a token extent is not a multiple of the window.
enum class WindowPadding {
  kStrict,  // configuration error
  kPad,     // pad with empty tokens that no real token attends to
};

/// Token bookkeeping for one windowed attention pass over an extent.
struct WindowPlan {
  Extent3 extent{};
  Extent3 window{};  // per-axis window, min(W, extent)
  Extent3 shift{};   // cyclic shift per axis
  Extent3 padded{};
  std::size_t window_size = 4;  // configured W, sets the bias table size
  std::size_t windows = 0;
  std::size_t tokens = 0;  // per window
  // Source token row for every windowed slot, -1 for padding.
  std::shared_ptr<std::vector<std::int64_t>> gather;
  // Windowed slot of every source token row.
  std::shared_ptr<std::vector<std::int64_t>> scatter;
  // [windows, tokens, tokens], 1 where attention is forbidden.
  std::shared_ptr<std::vector<std::uint8_t>> forbidden;
  // [tokens, tokens] index into the relative position bias table.
  std::shared_ptr<std::vector<std::int32_t>> relative;

  bool any_forbidden() const {
    for (auto f : *forbidden) {
      if (f) return true;
    }
    return false;
  }
};

/// Builds the partition of `extent` into windows of size W, optionally
/// cyclically shifted by W/2 along axes longer than W. Slots of a shifted
/// window whose tokens were not contiguous before the shift, and padding
/// slots, are marked forbidden.
inline WindowPlan make_window_plan(const Extent3& extent, std::size_t W, bool shifted,
                                   WindowPadding padding = WindowPadding::kStrict) {
  if (W == 0) throw ConfigError("window attention: window size must be positive");
  WindowPlan p;
  p.extent = extent;
  p.window_size = W;
  std::size_t grid_w[3];
  for (int a = 0; a < 3; ++a) {
    if (extent[a] == 0) throw ConfigError("window attention: empty extent");
    p.window[a] = std::min(W, extent[a]);
    if (extent[a] % p.window[a] != 0 && padding == WindowPadding::kStrict) {
      throw ConfigError("window attention: extent " + std::to_string(extent[a]) +
                        " is not divisible by window " + std::to_string(W));
    }
    p.padded[a] = (extent[a] + p.window[a] - 1) / p.window[a] * p.window[a];
    p.shift[a] = shifted && extent[a] > W ? W / 2 : 0;
    grid_w[a] = p.padded[a] / p.window[a];
  }
  p.windows = grid_w[0] * grid_w[1] * grid_w[2];
  p.tokens = p.window[0] * p.window[1] * p.window[2];
  const std::size_t n_tokens = extent[0] * extent[1] * extent[2];
  p.gather = std::make_shared<std::vector<std::int64_t>>(p.windows * p.tokens, -1);
  p.scatter = std::make_shared<std::vector<std::int64_t>>(n_tokens, -1);
  p.forbidden = std::make_shared<std::vector<std::uint8_t>>(p.windows * p.tokens * p.tokens, 0);
  p.relative = std::make_shared<std::vector<std::int32_t>>(p.tokens * p.tokens, 0);

  // Region of a post-shift coordinate: 0 unshifted interior, 1 tail, 2 wrapped.
  auto region = [&p](int a, std::size_t q) -> int {
    if (p.shift[a] == 0) return 0;
    if (q < p.padded[a] - p.window[a]) return 0;
    return q < p.padded[a] - p.shift[a] ? 1 : 2;
  };
  std::vector<int> slot_region(p.tokens);
  std::vector<std::uint8_t> slot_pad(p.tokens);
  std::size_t w = 0;
  for (std::size_t wi = 0; wi < grid_w[0]; ++wi) {
    for (std::size_t wj = 0; wj < grid_w[1]; ++wj) {
      for (std::size_t wk = 0; wk < grid_w[2]; ++wk, ++w) {
        std::size_t t = 0;
        for (std::size_t a = 0; a < p.window[0]; ++a) {
          for (std::size_t b = 0; b < p.window[1]; ++b) {
            for (std::size_t c = 0; c < p.window[2]; ++c, ++t) {
              const std::size_t q[3] = {wi * p.window[0] + a, wj * p.window[1] + b, wk * p.window[2] + c};
              std::size_t src[3];
              bool pad = false;
              for (int ax = 0; ax < 3; ++ax) {
                src[ax] = (q[ax] + p.shift[ax]) % p.padded[ax];
                pad = pad || src[ax] >= extent[ax];
              }
              slot_region[t] = (region(0, q[0]) * 3 + region(1, q[1])) * 3 + region(2, q[2]);
              slot_pad[t] = pad;
              const std::size_t slot = w * p.tokens + t;
              if (!pad) {
                const auto row = static_cast<std::int64_t>((src[0] * extent[1] + src[1]) * extent[2] + src[2]);
                (*p.gather)[slot] = row;
                (*p.scatter)[row] = static_cast<std::int64_t>(slot);
              }
            }
          }
        }
        std::uint8_t* f = p.forbidden->data() + w * p.tokens * p.tokens;
        for (std::size_t i = 0; i < p.tokens; ++i) {
          for (std::size_t j = 0; j < p.tokens; ++j) {
            f[i * p.tokens + j] = (slot_region[i] != slot_region[j] || slot_pad[j]) && i != j;
          }
        }
      }
    }
  }
  const std::size_t span = 2 * W - 1;
  for (std::size_t i = 0; i < p.tokens; ++i) {
    const std::size_t ci[3] = {i / (p.window[1] * p.window[2]), (i / p.window[2]) % p.window[1], i % p.window[2]};
    for (std::size_t j = 0; j < p.tokens; ++j) {
      const std::size_t cj[3] = {j / (p.window[1] * p.window[2]), (j / p.window[2]) % p.window[1], j % p.window[2]};
      std::size_t idx = 0;
      for (int a = 0; a < 3; ++a) idx = idx * span + (ci[a] + W - 1 - cj[a]);
      (*p.relative)[i * p.tokens + j] = static_cast<std::int32_t>(idx);
    }
  }
  return p;
}

/// scores [windows * heads, T, T] + bias_table[relative[i, j], h], with
/// forbidden pairs set to -inf.
template <typename T>
Var<T> window_logits(const Var<T>& scores, const Var<T>& table, const WindowPlan& plan, std::size_t heads) {
  const std::size_t n = plan.tokens;
  if (scores.shape() != diff::Shape{plan.windows * heads, n, n} || table.value().rank() != 2 ||
      table.shape()[1] != heads) {
    throw DimensionError("window_logits: scores " + diff::shape_str(scores.shape()) + " do not match the plan");
  }
  const auto relative = plan.relative;
  const auto forbidden = plan.forbidden;
  const T ninf = -std::numeric_limits<T>::infinity();
  diff::NdArray<T> out = scores.value();
  const T* tb = table.value().data();
  for (std::size_t w = 0; w < plan.windows; ++w) {
    const std::uint8_t* f = forbidden->data() + w * n * n;
    for (std::size_t h = 0; h < heads; ++h) {
      T* o = out.data() + (w * heads + h) * n * n;
      for (std::size_t e = 0; e < n * n; ++e) o[e] = f[e] ? ninf : o[e] + tb[(*relative)[e] * heads + h];
    }
  }
  const std::size_t windows = plan.windows;
  return diff::make_result<T>(std::move(out), {scores, table}, [=](diff::Node<T>& self) {
    const T* g = self.grad.data();
    if (diff::wants_grad(self, 0)) {
      T* gs = diff::input_grad(self, 0).data();
      for (std::size_t w = 0; w < windows; ++w) {
        const std::uint8_t* f = forbidden->data() + w * n * n;
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t o = (w * heads + h) * n * n;
          for (std::size_t e = 0; e < n * n; ++e) {
            if (!f[e]) gs[o + e] += g[o + e];
          }
        }
      }
    }
    if (diff::wants_grad(self, 1)) {
      T* gt = diff::input_grad(self, 1).data();
      for (std::size_t w = 0; w < windows; ++w) {
        const std::uint8_t* f = forbidden->data() + w * n * n;
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t o = (w * heads + h) * n * n;
          for (std::size_t e = 0; e < n * n; ++e) {
            if (!f[e]) gt[(*relative)[e] * heads + h] += g[o + e];
          }
        }
      }
    }
  });
}

/// Multi-head self-attention inside windows with a learned relative position
/// bias.
template <typename T>
class WindowAttention {
 public:
  WindowAttention() = default;
  WindowAttention(diff::ParameterStore<T>& store, const std::string& name, std::size_t channels, std::size_t heads,
                  std::size_t window)
      : channels_(channels), heads_(heads), window_(window) {
    if (heads == 0 || channels % heads != 0) {
      throw ConfigError("window attention: " + std::to_string(heads) + " heads do not divide " +
                        std::to_string(channels) + " channels");
    }
    qkv_ = diff::Linear<T>(store, name + ".qkv", channels, 3 * channels);
    proj_ = diff::Linear<T>(store, name + ".proj", channels, channels);
    const std::size_t span = 2 * window - 1;
    bias_table_ = store.create(name + ".relative_bias", {span * span * span, heads}, diff::Init::kTruncNormal);
  }

  std::size_t heads() const { return heads_; }
  std::size_t window() const { return window_; }

  /// x: [N, C] tokens of `plan.extent`. When `probe` is given it receives
  /// the attention probabilities [windows * heads, T, T].
  Var<T> operator()(const Var<T>& x, const WindowPlan& plan, Var<T>* probe = nullptr) const {
    const std::size_t n = plan.tokens;
    const std::size_t hd = channels_ / heads_;
    if (x.value().rank() != 2 || x.shape()[1] != channels_ ||
        x.shape()[0] != plan.extent[0] * plan.extent[1] * plan.extent[2]) {
      throw DimensionError("window attention: input " + diff::shape_str(x.shape()) + " does not match the plan");
    }
    auto xw = diff::gather_rows(x, plan.gather);
    auto qkv = diff::reshape(qkv_(xw), {plan.windows, n, 3, heads_, hd});
    qkv = diff::permute(qkv, {2, 0, 3, 1, 4});  // [3, windows, heads, T, hd]
    auto part = [&](std::size_t i) { return diff::reshape(diff::slice0(qkv, i, 1), {plan.windows * heads_, n, hd}); };
    auto q = diff::scale(part(0), T(1) / std::sqrt(static_cast<T>(hd)));
    auto k = part(1);
    auto v = part(2);
    auto scores = window_logits(diff::bmm(q, k, false, true), bias_table_, plan, heads_);
    auto attn = diff::softmax(scores);
    if (probe) *probe = attn;
    auto o = diff::bmm(attn, v);  // [windows * heads, T, hd]
    o = diff::permute(diff::reshape(o, {plan.windows, heads_, n, hd}), {0, 2, 1, 3});
    o = proj_(diff::reshape(o, {plan.windows * n, channels_}));
    return diff::gather_rows(o, plan.scatter);
  }

  const diff::Linear<T>& qkv() const { return qkv_; }
  const diff::Linear<T>& proj() const { return proj_; }
  const Var<T>& bias_table() const { return bias_table_; }

 private:
  std::size_t channels_ = 0, heads_ = 1, window_ = 4;
  diff::Linear<T> qkv_, proj_;
  Var<T> bias_table_;
};

}  // namespace nerfmae::swin

#endif  // NERFMAE_SWIN3D_WINDOW_ATTENTION_HPP_
