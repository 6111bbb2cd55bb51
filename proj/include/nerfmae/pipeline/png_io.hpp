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


#ifndef NERFMAE_PIPELINE_PNG_IO_HPP_
#define NERFMAE_PIPELINE_PNG_IO_HPP_

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "nerfmae/errors.hpp"
#include "nerfmae/scenefield/render.hpp"

namespace nerfmae::pipeline {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

inline void png_error_fn(png_structp png, png_const_charp msg) {
  *static_cast<std::string*>(png_get_error_ptr(png)) = msg;
  png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline void write_rows(png_structp png, png_infop info, std::FILE* f, const scene::Image& img) {
  const int channels = img.has_alpha() ? 4 : 3;
  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * channels);
  png_init_io(png, f);
  png_set_IHDR(png, info, img.width, img.height, 8, img.has_alpha() ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const auto c = img.pixel(u, v);
      png_byte* px = row.data() + static_cast<std::size_t>(u) * channels;
      for (int a = 0; a < 3; ++a) px[a] = quantize(c[a]);
      if (channels == 4) px[3] = quantize(img.alpha[img.index(u, v)]);
    }
    png_write_row(png, row.data());
  }
}

inline void read_rows(png_structp png, png_infop info, std::FILE* f, scene::Image* out) {
  png_init_io(png, f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto type = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (type == PNG_COLOR_TYPE_GRAY || type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  scene::Image img(width, height, channels == 4);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (int v = 0; v < height; ++v) {
    png_read_row(png, row.data(), nullptr);
    for (int u = 0; u < width; ++u) {
      const png_byte* px = row.data() + static_cast<std::size_t>(u) * channels;
      img.set(u, v, {px[0] / 255.0, px[1] / 255.0, px[2] / 255.0});
      if (channels == 4) img.alpha[img.index(u, v)] = static_cast<float>(px[3] / 255.0);
    }
  }
  png_read_end(png, nullptr);
  *out = std::move(img);
}

}  // namespace detail

/// Writes 8-bit RGB, or RGBA when the image carries opacity.
inline void write_png(const scene::Image& img, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "wb"));
  if (!f) throw FormatError("cannot write " + path.string());
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw FormatError("libpng: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError(path.string() + ": " + err);
  }
  detail::write_rows(png, info, f.get(), img);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Reads any PNG as 8-bit RGB, keeping an alpha channel when present.
inline scene::Image read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "rb"));
  if (!f) throw FormatError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError(path.string() + ": not a PNG file");
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError("libpng: out of memory");
  }
  scene::Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": " + err);
  }
  detail::read_rows(png, info, f.get(), &img);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace nerfmae::pipeline

#endif  // NERFMAE_PIPELINE_PNG_IO_HPP_
