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


#ifndef NERFMAE_SWIN3D_ENCODER_HPP_
#define NERFMAE_SWIN3D_ENCODER_HPP_

#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "nerfmae/swin3d/masking.hpp"
#include "nerfmae/swin3d/window_attention.hpp"

namespace nerfmae::swin {

struct EncoderConfig {
  Resolution input{32, 32, 32};
  std::size_t patch = 4;
  std::size_t embed_dim = 16;
  std::vector<std::size_t> depths{2, 2, 2, 2};
  std::vector<std::size_t> heads{1, 2, 4, 8};
  std::size_t window = 4;
  std::size_t mlp_ratio = 4;

  static EncoderConfig desk() { return {}; }
  static EncoderConfig full_scale() {
    EncoderConfig c;
    c.input = {160, 160, 160};
    c.embed_dim = 96;
    c.depths = {2, 2, 18, 2};
    c.heads = {3, 6, 12, 24};
    return c;
  }

  std::size_t stages() const { return depths.size(); }
  std::size_t channels(std::size_t stage) const { return embed_dim << stage; }
  Extent3 tokens(std::size_t stage) const {
    Extent3 e{};
    for (int a = 0; a < 3; ++a) e[a] = (input[a] / patch) >> stage;
    return e;
  }

  void validate() const {
    if (patch == 0 || (patch & (patch - 1)) != 0) throw ConfigError("encoder: patch size must be a power of two");
    if (depths.size() != 4 || heads.size() != 4) throw ConfigError("encoder: exactly four stages are required");
    if (embed_dim == 0 || window == 0 || mlp_ratio == 0) throw ConfigError("encoder: sizes must be positive");
    for (std::size_t a = 0; a < 3; ++a) {
      if (input[a] % patch != 0) throw ConfigError("encoder: input extent not divisible by patch size");
      const std::size_t s0 = input[a] / patch;
      if (s0 % window != 0 && s0 > window) {
        throw ConfigError("encoder: stage-1 token extent " + std::to_string(s0) + " not divisible by window " +
                          std::to_string(window));
      }
      if (s0 % 8 != 0) throw ConfigError("encoder: stage-1 token extent must halve three times");
    }
    for (std::size_t s = 0; s < 4; ++s) {
      if (depths[s] == 0) throw ConfigError("encoder: stage depth must be positive");
      if (heads[s] == 0 || channels(s) % heads[s] != 0) {
        throw ConfigError("encoder: heads of stage " + std::to_string(s + 1) + " do not divide its channels");
      }
    }
  }

  /// Canonical key=value description; part of checkpoint identity.
  std::string describe() const {
    std::ostringstream o;
    auto list = [&o](const std::vector<std::size_t>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) o << (i ? "," : "") << v[i];
    };
    o << "encoder.input=" << input[0] << "," << input[1] << "," << input[2] << "\n";
    o << "encoder.patch=" << patch << "\nencoder.embed_dim=" << embed_dim << "\nencoder.depths=";
    list(depths);
    o << "\nencoder.heads=";
    list(heads);
    o << "\nencoder.window=" << window << "\nencoder.mlp_ratio=" << mlp_ratio << "\n";
    return o.str();
  }

  bool operator==(const EncoderConfig&) const = default;
};

/// Strided-convolution patch embedding, mask-token substitution and a learned
/// absolute positional table.
template <typename T>
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(diff::ParameterStore<T>& store, const std::string& name, const EncoderConfig& cfg)
      : patch_(cfg.patch), extent_(cfg.tokens(0)) {
    const std::size_t e = cfg.embed_dim;
    proj_ = diff::Conv3d<T>(store, name + ".proj", 4, e, cfg.patch, cfg.patch, 0);
    mask_token_ = store.create(name + ".mask_token", {e}, diff::Init::kTruncNormal);
    position_ = store.create(name + ".position", {extent_[0] * extent_[1] * extent_[2], e}, diff::Init::kTruncNormal);
  }

  /// grid: [4, H, W, D]; masked: one flag per patch or null.
  Var<T> operator()(const Var<T>& grid, std::shared_ptr<const std::vector<std::uint8_t>> masked) const {
    const auto& s = grid.shape();
    if (s.size() != 4 || s[0] != 4 || s[1] != extent_[0] * patch_ || s[2] != extent_[1] * patch_ ||
        s[3] != extent_[2] * patch_) {
      throw DimensionError("patch embedding: input " + diff::shape_str(s) + " does not match the encoder config");
    }
    auto tokens = diff::volume_to_tokens(proj_(grid));
    if (masked) tokens = diff::replace_rows(tokens, mask_token_, masked);
    return diff::add(tokens, position_);
  }

  const Var<T>& mask_token() const { return mask_token_; }
  const Var<T>& position() const { return position_; }

 private:
  std::size_t patch_ = 4;
  Extent3 extent_{};
  diff::Conv3d<T> proj_;
  Var<T> mask_token_, position_;
};

/// x + attn(LN(x)), then x + MLP(LN(x)) with a GELU hidden layer.
template <typename T>
class SwinBlock {
 public:
  SwinBlock() = default;
  SwinBlock(diff::ParameterStore<T>& store, const std::string& name, std::size_t channels, std::size_t heads,
            std::size_t window, std::size_t mlp_ratio)
      : norm1_(store, name + ".norm1", channels),
        attn_(store, name + ".attn", channels, heads, window),
        norm2_(store, name + ".norm2", channels),
        fc1_(store, name + ".mlp.fc1", channels, mlp_ratio * channels),
        fc2_(store, name + ".mlp.fc2", mlp_ratio * channels, channels) {}

  Var<T> operator()(const Var<T>& x, const WindowPlan& plan, Var<T>* probe = nullptr) const {
    auto h = diff::add(x, attn_(norm1_(x), plan, probe));
    return diff::add(h, fc2_(diff::gelu(fc1_(norm2_(h)))));
  }

  const WindowAttention<T>& attention() const { return attn_; }

 private:
  diff::LayerNorm<T> norm1_;
  WindowAttention<T> attn_;
  diff::LayerNorm<T> norm2_;
  diff::Linear<T> fc1_, fc2_;
};

/// Gather row indices that list each 2x2x2 neighborhood contiguously.
inline std::shared_ptr<std::vector<std::int64_t>> merge_index(const Extent3& e) {
  for (auto s : e) {
    if (s % 2 != 0) throw ConfigError("patch merging: odd token extent " + std::to_string(s));
  }
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  idx->reserve(e[0] * e[1] * e[2]);
  for (std::size_t i = 0; i < e[0] / 2; ++i) {
    for (std::size_t j = 0; j < e[1] / 2; ++j) {
      for (std::size_t k = 0; k < e[2] / 2; ++k) {
        for (std::size_t d = 0; d < 8; ++d) {
          const std::size_t a = 2 * i + (d >> 2), b = 2 * j + ((d >> 1) & 1), c = 2 * k + (d & 1);
          idx->push_back(static_cast<std::int64_t>((a * e[1] + b) * e[2] + c));
        }
      }
    }
  }
  return idx;
}

/// Concatenates each 2x2x2 neighborhood (8C), then LN and a linear 8C -> 2C.
template <typename T>
class PatchMerging {
 public:
  PatchMerging() = default;
  PatchMerging(diff::ParameterStore<T>& store, const std::string& name, std::size_t channels)
      : channels_(channels),
        norm_(store, name + ".norm", 8 * channels),
        reduction_(store, name + ".reduction", 8 * channels, 2 * channels, false) {}

  Var<T> operator()(const Var<T>& x, const Extent3& extent) const {
    if (x.value().rank() != 2 || x.shape()[1] != channels_ || x.shape()[0] != extent[0] * extent[1] * extent[2]) {
      throw DimensionError("patch merging: input " + diff::shape_str(x.shape()) + " does not match extent");
    }
    auto grouped = diff::reshape(diff::gather_rows(x, merge_index(extent)), {x.shape()[0] / 8, 8 * channels_});
    return reduction_(norm_(grouped));
  }

 private:
  std::size_t channels_ = 0;
  diff::LayerNorm<T> norm_;
  diff::Linear<T> reduction_;
};

/// Four encoder levels as token rows, plus the stage-1 embedding.
template <typename T>
struct FeaturePyramid {
  std::vector<Var<T>> levels;  // [N_i, C_i]
  std::vector<Extent3> extents;
  Var<T> embedding;  // stage-1 tokens before the first block

  Var<T> volume(std::size_t i) const { return diff::tokens_to_volume(levels.at(i), extents.at(i)); }
};

/// Hierarchical shifted-window transformer encoder.
template <typename T>
class SwinEncoder {
 public:
  SwinEncoder(diff::ParameterStore<T>& store, const EncoderConfig& cfg, const std::string& name = "encoder")
      : cfg_(cfg) {
    cfg.validate();
    embed_ = PatchEmbed<T>(store, name + ".embed", cfg);
    for (std::size_t s = 0; s < 4; ++s) {
      const std::size_t c = cfg.channels(s);
      std::vector<SwinBlock<T>> blocks;
      for (std::size_t b = 0; b < cfg.depths[s]; ++b) {
        blocks.emplace_back(store, name + ".stage" + std::to_string(s) + ".block" + std::to_string(b), c,
                            cfg.heads[s], cfg.window, cfg.mlp_ratio);
      }
      stages_.push_back(std::move(blocks));
      norms_.emplace_back(store, name + ".norm" + std::to_string(s), c);
      if (s < 3) merges_.emplace_back(store, name + ".merge" + std::to_string(s), c);
    }
  }

  const EncoderConfig& config() const { return cfg_; }

  /// grid: masked [4, H, W, D]; masked_patches: flags per patch, or null for
  /// an unmasked pass.
  FeaturePyramid<T> operator()(const Var<T>& grid,
                               std::shared_ptr<const std::vector<std::uint8_t>> masked_patches = nullptr) const {
    FeaturePyramid<T> out;
    auto x = embed_(grid, std::move(masked_patches));
    out.embedding = x;
    for (std::size_t s = 0; s < 4; ++s) {
      const Extent3 e = cfg_.tokens(s);
      for (std::size_t b = 0; b < stages_[s].size(); ++b) x = stages_[s][b](x, plan(e, b % 2 == 1));
      out.levels.push_back(norms_[s](x));
      out.extents.push_back(e);
      if (s < 3) x = merges_[s](x, e);
    }
    return out;
  }

  /// Window partition used at `extent`; ragged extents are padded.
  const WindowPlan& plan(const Extent3& extent, bool shifted) const {
    const auto key = std::make_tuple(extent[0], extent[1], extent[2], shifted);
    auto it = plans_.find(key);
    if (it == plans_.end()) {
      it = plans_.emplace(key, make_window_plan(extent, cfg_.window, shifted, WindowPadding::kPad)).first;
    }
    return it->second;
  }

  const std::vector<std::vector<SwinBlock<T>>>& stages() const { return stages_; }

 private:
  EncoderConfig cfg_;
  PatchEmbed<T> embed_;
  std::vector<std::vector<SwinBlock<T>>> stages_;
  std::vector<diff::LayerNorm<T>> norms_;
  std::vector<PatchMerging<T>> merges_;
  mutable std::map<std::tuple<std::size_t, std::size_t, std::size_t, bool>, WindowPlan> plans_;
};

}  // namespace nerfmae::swin

#endif  // NERFMAE_SWIN3D_ENCODER_HPP_
