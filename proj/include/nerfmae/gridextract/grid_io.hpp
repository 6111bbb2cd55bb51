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


#ifndef NERFMAE_GRIDEXTRACT_GRID_IO_HPP_
#define NERFMAE_GRIDEXTRACT_GRID_IO_HPP_

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "nerfmae/gridextract/grid.hpp"

namespace nerfmae {

/// Little-endian binary writer/reader over a byte buffer.
namespace bytes {

static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

template <typename T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  template <typename T>
  T get(const char* field) {
    need(sizeof(T), field);
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n, const char* field) {
    need(n, field);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* field) const {
    if (buf_.size() - pos_ < n) {
      throw FormatError(what_ + ": truncated while reading " + field + " (need " + std::to_string(n) +
                        " bytes, have " + std::to_string(buf_.size() - pos_) + ")");
    }
  }

  std::size_t remaining() const { return buf_.size() - pos_; }
  const char* cursor() const { return buf_.data() + pos_; }
  void skip(std::size_t n) { pos_ += n; }
  const std::string& what() const { return what_; }

 private:
  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::string& buf) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

}  // namespace bytes

namespace grid {

inline constexpr char kGridMagic[4] = {'N', 'F', 'M', 'G'};
enum class ChannelType : std::uint8_t { kFloat32 = 0, kInt32 = 1 };

namespace detail {

inline void put_header(std::string& buf, std::uint32_t version, const GridSpec& spec, std::uint32_t channels,
                       ChannelType type) {
  buf.append(kGridMagic, 4);
  bytes::put<std::uint32_t>(buf, version);
  for (auto r : spec.resolution) bytes::put<std::uint32_t>(buf, static_cast<std::uint32_t>(r));
  bytes::put<std::uint32_t>(buf, channels);
  if (version >= 2) bytes::put<std::uint8_t>(buf, static_cast<std::uint8_t>(type));
  for (int a = 0; a < 3; ++a) bytes::put<double>(buf, spec.bounds.min[a]);
  for (int a = 0; a < 3; ++a) bytes::put<double>(buf, spec.bounds.max[a]);
  bytes::put<double>(buf, spec.delta);
}

struct Header {
  std::uint32_t version = 0;
  GridSpec spec;
  std::uint32_t channels = 0;
  ChannelType type = ChannelType::kFloat32;
};

inline Header get_header(bytes::Reader& r) {
  Header h;
  if (r.get_string(4, "magic") != std::string(kGridMagic, 4)) throw FormatError(r.what() + ": bad magic");
  h.version = r.get<std::uint32_t>("version");
  if (h.version != 1 && h.version != 2) {
    throw FormatError(r.what() + ": unsupported version " + std::to_string(h.version));
  }
  const char* names[3] = {"H", "W", "D"};
  for (int a = 0; a < 3; ++a) {
    h.spec.resolution[a] = r.get<std::uint32_t>(names[a]);
    if (h.spec.resolution[a] == 0) throw FormatError(r.what() + ": zero extent in header field " + names[a]);
  }
  h.channels = r.get<std::uint32_t>("channels");
  if (h.channels == 0) throw FormatError(r.what() + ": zero channels");
  if (h.version >= 2) {
    const auto t = r.get<std::uint8_t>("channel type");
    if (t > 1) throw FormatError(r.what() + ": unknown channel type " + std::to_string(t));
    h.type = static_cast<ChannelType>(t);
  }
  for (int a = 0; a < 3; ++a) h.spec.bounds.min[a] = r.get<double>("bounds min");
  for (int a = 0; a < 3; ++a) h.spec.bounds.max[a] = r.get<double>("bounds max");
  h.spec.delta = r.get<double>("delta");
  return h;
}

template <typename T>
void get_payload(bytes::Reader& r, std::size_t count, T* out) {
  r.need(count * sizeof(T), "payload");
  std::memcpy(out, r.cursor(), count * sizeof(T));
  r.skip(count * sizeof(T));
  if (r.remaining() != 0) throw FormatError(r.what() + ": " + std::to_string(r.remaining()) + " trailing bytes");
}

}  // namespace detail

inline std::string encode_grid(const RadianceDensityGrid& g) {
  std::string buf;
  detail::put_header(buf, 1, g.spec, 4, ChannelType::kFloat32);
  buf.append(reinterpret_cast<const char*>(g.values.data()), g.values.size() * sizeof(float));
  return buf;
}

inline RadianceDensityGrid decode_grid(const std::string& buf, const std::string& what = "grid") {
  bytes::Reader r(buf, what);
  const auto h = detail::get_header(r);
  if (h.type != ChannelType::kFloat32 || h.channels != 4) {
    throw FormatError(what + ": expected 4 float channels, found " + std::to_string(h.channels) +
                      (h.type == ChannelType::kInt32 ? " integer" : "") + " channels");
  }
  RadianceDensityGrid g(h.spec);
  detail::get_payload(r, g.values.size(), g.values.data());
  return g;
}

inline void write_grid(const RadianceDensityGrid& g, const std::filesystem::path& path) {
  bytes::write_file(path, encode_grid(g));
}

inline RadianceDensityGrid read_grid(const std::filesystem::path& path) {
  return decode_grid(bytes::read_file(path), path.string());
}

/// Label grids use format version 2 with one int32 channel.
inline std::string encode_label_grid(const LabelGrid& g) {
  std::string buf;
  detail::put_header(buf, 2, g.spec, 1, ChannelType::kInt32);
  buf.append(reinterpret_cast<const char*>(g.labels.data()), g.labels.size() * sizeof(std::int32_t));
  return buf;
}

inline LabelGrid decode_label_grid(const std::string& buf, const std::string& what = "label grid") {
  bytes::Reader r(buf, what);
  const auto h = detail::get_header(r);
  if (h.type != ChannelType::kInt32 || h.channels != 1) throw FormatError(what + ": expected one integer channel");
  LabelGrid g(h.spec);
  detail::get_payload(r, g.labels.size(), g.labels.data());
  return g;
}

inline void write_label_grid(const LabelGrid& g, const std::filesystem::path& path) {
  bytes::write_file(path, encode_label_grid(g));
}

inline LabelGrid read_label_grid(const std::filesystem::path& path) {
  return decode_label_grid(bytes::read_file(path), path.string());
}

}  // namespace grid
}  // namespace nerfmae

#endif  // NERFMAE_GRIDEXTRACT_GRID_IO_HPP_
