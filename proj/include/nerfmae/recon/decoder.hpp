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


#ifndef NERFMAE_RECON_DECODER_HPP_
#define NERFMAE_RECON_DECODER_HPP_

#include <string>
#include <vector>

#include "nerfmae/swin3d/encoder.hpp"

namespace nerfmae::recon {

using diff::Var;

struct DecoderConfig {
  std::size_t out_channels = 4;
  std::size_t min_channels = 8;  // floor for the skip-free upsampling stages
  bool embedding_skip = false;   // extra skip from the stage-1 embedding
  bool sigmoid_output = true;
};

/// Skip-connected transposed-convolution decoder from the feature pyramid
/// back to the input resolution.
template <typename T>
class PyramidDecoder {
 public:
  PyramidDecoder() = default;
  PyramidDecoder(diff::ParameterStore<T>& store, const std::string& name, const swin::EncoderConfig& enc,
                 DecoderConfig cfg = {})
      : cfg_(cfg) {
    enc.validate();
    for (int l = 2; l >= 0; --l) {
      const std::size_t c = enc.channels(static_cast<std::size_t>(l));
      const std::string s = name + ".skip" + std::to_string(l);
      ups_.emplace_back(store, s + ".up", 2 * c, c);
      projs_.emplace_back(store, s + ".proj", c, c, 1);
      convs_.emplace_back(store, s + ".conv", c, c, 3);
    }
    if (cfg.embedding_skip) embed_proj_ = diff::Conv3d<T>(store, name + ".embed_proj", enc.embed_dim, enc.embed_dim, 1);
    std::size_t c = enc.embed_dim;
    for (std::size_t p = enc.patch, i = 0; p > 1; p /= 2, ++i) {
      const std::size_t next = std::max(c / 2, cfg.min_channels);
      lifts_.emplace_back(store, name + ".lift" + std::to_string(i), c, next);
      c = next;
    }
    hidden_ = c;
    residual_ = diff::Conv3d<T>(store, name + ".residual", c, c, 3);
    head_ = diff::Conv3d<T>(store, name + ".head", c, cfg.out_channels, 1);
  }

  /// Returns [out_channels, H, W, D].
  Var<T> operator()(const swin::FeaturePyramid<T>& f) const {
    auto d = f.volume(3);
    for (std::size_t s = 0; s < 3; ++s) {
      const std::size_t level = 2 - s;
      auto up = ups_[s](d);
      auto skip = f.volume(level);
      if (up.shape() != skip.shape()) {
        throw DimensionError("decoder stage " + std::to_string(s + 1) + ": upsampled " + diff::shape_str(up.shape()) +
                             " vs skip " + diff::shape_str(skip.shape()));
      }
      auto sum = diff::add(up, projs_[s](skip));
      if (level == 0 && cfg_.embedding_skip) {
        sum = diff::add(sum, embed_proj_(diff::tokens_to_volume(f.embedding, f.extents[0])));
      }
      d = diff::gelu(convs_[s](sum));
    }
    for (const auto& lift : lifts_) d = diff::gelu(lift(d));
    d = diff::gelu(diff::add(d, residual_(d)));
    auto out = head_(d);
    return cfg_.sigmoid_output ? diff::sigmoid(out) : out;
  }

  std::size_t hidden_channels() const { return hidden_; }

 private:
  DecoderConfig cfg_;
  std::vector<diff::Upsample2x<T>> ups_;
  std::vector<diff::Conv3d<T>> projs_, convs_;
  diff::Conv3d<T> embed_proj_;
  std::vector<diff::Upsample2x<T>> lifts_;
  std::size_t hidden_ = 0;
  diff::Conv3d<T> residual_, head_;
};

/// Encoder plus reconstruction decoder; owns its parameters.
template <typename T>
class MaskedAutoencoder {
 public:
  explicit MaskedAutoencoder(const swin::EncoderConfig& cfg)
      : encoder_(store_, cfg, "encoder"), decoder_(store_, "decoder", cfg) {}
  MaskedAutoencoder(const MaskedAutoencoder&) = delete;
  MaskedAutoencoder& operator=(const MaskedAutoencoder&) = delete;

  /// grid: masked [4, H, W, D]; returns the sigmoid reconstruction.
  Var<T> operator()(const Var<T>& grid, std::shared_ptr<const std::vector<std::uint8_t>> masked_patches) const {
    return decoder_(encoder_(grid, std::move(masked_patches)));
  }

  diff::ParameterStore<T>& store() { return store_; }
  const diff::ParameterStore<T>& store() const { return store_; }
  const swin::SwinEncoder<T>& encoder() const { return encoder_; }
  const swin::EncoderConfig& config() const { return encoder_.config(); }

 private:
  diff::ParameterStore<T> store_;
  swin::SwinEncoder<T> encoder_;
  PyramidDecoder<T> decoder_;
};

}  // namespace nerfmae::recon

#endif  // NERFMAE_RECON_DECODER_HPP_
