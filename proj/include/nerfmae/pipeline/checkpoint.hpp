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


#ifndef NERFMAE_PIPELINE_CHECKPOINT_HPP_
#define NERFMAE_PIPELINE_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nerfmae/diffcore/optim.hpp"
#include "nerfmae/gridextract/grid_io.hpp"
#include "nerfmae/pipeline/run_config.hpp"

namespace nerfmae::pipeline {

inline constexpr char kCheckpointMagic[4] = {'N', 'F', 'M', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  diff::Shape shape;
  std::vector<float> values;
};

struct TrainingState {
  std::uint64_t step = 0;
  std::vector<TensorRecord> first_moments;
  std::vector<TensorRecord> second_moments;
};

/// Checkpoint container. Layout (little-endian):
///   "NFMC", u32 version, u64 config hash, u64 seed,
///   u32 config text length, text,
///   u32 meta count, then (u32 len, key, u32 len, value) pairs,
///   u32 parameter count, then records,
///   u8 has training state, [u64 step, u32 count, records (m), u32 count, records (v)].
/// A record is u32 name length, name, u32 rank, rank x u64 dims,
/// u64 payload bytes, float32 payload.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string config_text;
  std::map<std::string, std::string> meta;
  std::vector<TensorRecord> parameters;
  bool has_state = false;
  TrainingState state;

  const TensorRecord* find(const std::string& name) const {
    for (const auto& r : parameters) {
      if (r.name == name) return &r;
    }
    return nullptr;
  }

  std::string meta_or(const std::string& key, const std::string& fallback = "") const {
    const auto it = meta.find(key);
    return it == meta.end() ? fallback : it->second;
  }
};

namespace detail {

inline void put_string(std::string& buf, const std::string& s) {
  bytes::put<std::uint32_t>(buf, static_cast<std::uint32_t>(s.size()));
  buf += s;
}

inline std::string get_string(bytes::Reader& r, const std::string& field) {
  const auto n = r.get<std::uint32_t>(field.c_str());
  return r.get_string(n, field.c_str());
}

inline void put_record(std::string& buf, const TensorRecord& rec) {
  put_string(buf, rec.name);
  bytes::put<std::uint32_t>(buf, static_cast<std::uint32_t>(rec.shape.size()));
  for (auto d : rec.shape) bytes::put<std::uint64_t>(buf, d);
  bytes::put<std::uint64_t>(buf, rec.values.size() * sizeof(float));
  buf.append(reinterpret_cast<const char*>(rec.values.data()), rec.values.size() * sizeof(float));
}

inline TensorRecord get_record(bytes::Reader& r) {
  TensorRecord rec;
  rec.name = get_string(r, "record name");
  const auto rank = r.get<std::uint32_t>("record rank");
  if (rank > 8) throw CheckpointError(r.what() + ": record '" + rec.name + "' has implausible rank " + std::to_string(rank));
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    rec.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("record dims")));
    count *= rec.shape.back();
  }
  const auto bytes_len = r.get<std::uint64_t>("record length");
  if (bytes_len != count * sizeof(float)) {
    throw CheckpointError(r.what() + ": record '" + rec.name + "' declares " + std::to_string(bytes_len) +
                          " bytes for " + std::to_string(count) + " values");
  }
  if (r.remaining() < bytes_len) {
    throw CheckpointError(r.what() + ": truncated blob for '" + rec.name + "' (need " + std::to_string(bytes_len) +
                          " bytes, have " + std::to_string(r.remaining()) + ")");
  }
  rec.values.resize(count);
  std::memcpy(rec.values.data(), r.cursor(), bytes_len);
  r.skip(bytes_len);
  return rec;
}

inline void put_records(std::string& buf, const std::vector<TensorRecord>& recs) {
  bytes::put<std::uint32_t>(buf, static_cast<std::uint32_t>(recs.size()));
  for (const auto& rec : recs) put_record(buf, rec);
}

inline std::vector<TensorRecord> get_records(bytes::Reader& r) {
  const auto n = r.get<std::uint32_t>("record count");
  std::vector<TensorRecord> out;
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(get_record(r));
  return out;
}

template <typename T>
TensorRecord to_record(const std::string& name, const diff::NdArray<T>& a) {
  TensorRecord rec{name, a.shape(), std::vector<float>(a.size())};
  for (std::size_t i = 0; i < a.size(); ++i) rec.values[i] = static_cast<float>(a[i]);
  return rec;
}

template <typename T>
void from_record(const TensorRecord& rec, diff::NdArray<T>& a) {
  if (rec.shape != a.shape()) {
    throw CheckpointError("checkpoint record '" + rec.name + "' has shape " + diff::shape_str(rec.shape) +
                          ", model expects " + diff::shape_str(a.shape()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<T>(rec.values[i]);
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& c) {
  std::string buf(kCheckpointMagic, 4);
  bytes::put<std::uint32_t>(buf, kCheckpointVersion);
  bytes::put<std::uint64_t>(buf, c.config_hash);
  bytes::put<std::uint64_t>(buf, c.seed);
  detail::put_string(buf, c.config_text);
  bytes::put<std::uint32_t>(buf, static_cast<std::uint32_t>(c.meta.size()));
  for (const auto& [k, v] : c.meta) {
    detail::put_string(buf, k);
    detail::put_string(buf, v);
  }
  detail::put_records(buf, c.parameters);
  bytes::put<std::uint8_t>(buf, c.has_state ? 1 : 0);
  if (c.has_state) {
    bytes::put<std::uint64_t>(buf, c.state.step);
    detail::put_records(buf, c.state.first_moments);
    detail::put_records(buf, c.state.second_moments);
  }
  return buf;
}

inline Checkpoint decode_checkpoint(const std::string& buf, const std::string& what = "checkpoint") {
  try {
    bytes::Reader r(buf, what);
    if (r.get_string(4, "magic") != std::string(kCheckpointMagic, 4)) throw CheckpointError(what + ": bad magic");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) throw CheckpointError(what + ": unsupported version " + std::to_string(version));
    Checkpoint c;
    c.config_hash = r.get<std::uint64_t>("config hash");
    c.seed = r.get<std::uint64_t>("seed");
    c.config_text = detail::get_string(r, "config text");
    const auto nmeta = r.get<std::uint32_t>("meta count");
    for (std::uint32_t i = 0; i < nmeta; ++i) {
      auto k = detail::get_string(r, "meta key");
      c.meta[k] = detail::get_string(r, "meta value");
    }
    c.parameters = detail::get_records(r);
    c.has_state = r.get<std::uint8_t>("state flag") != 0;
    if (c.has_state) {
      c.state.step = r.get<std::uint64_t>("step");
      c.state.first_moments = detail::get_records(r);
      c.state.second_moments = detail::get_records(r);
    }
    if (r.remaining() != 0) throw CheckpointError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
    return c;
  } catch (const FormatError& e) {
    throw CheckpointError(e.what());
  }
}

inline void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  bytes::write_file(path, encode_checkpoint(c));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::string buf;
  try {
    buf = bytes::read_file(path);
  } catch (const FormatError& e) {
    throw CheckpointError(e.what());
  }
  return decode_checkpoint(buf, path.string());
}

/// Snapshot of a parameter store, optionally with the optimizer state.
template <typename T>
Checkpoint make_checkpoint(const diff::ParameterStore<T>& store, const std::string& config_text, std::uint64_t seed,
                           const diff::Adam<T>* optimizer = nullptr) {
  Checkpoint c;
  c.config_text = config_text;
  c.config_hash = fnv1a(config_text);
  c.seed = seed;
  for (const auto& p : store.all()) c.parameters.push_back(detail::to_record(p.name, p.array()));
  if (optimizer) {
    c.has_state = true;
    c.state.step = optimizer->steps();
    for (const auto& [name, m] : optimizer->moments()) {
      c.state.first_moments.push_back(detail::to_record(name, m.m));
      c.state.second_moments.push_back(detail::to_record(name, m.v));
    }
  }
  return c;
}

struct LoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> fresh;    // model parameters absent from the checkpoint
  std::vector<std::string> ignored;  // checkpoint records the model does not have
};

/// Copies matching parameters into `store`. The checkpoint's config hash must
/// equal fnv1a(`config_text`). With `partial`, model parameters missing from
/// the checkpoint keep their values and are reported as fresh; otherwise they
/// raise CheckpointError.
template <typename T>
LoadReport load_parameters(const Checkpoint& c, diff::ParameterStore<T>& store, const std::string& config_text,
                           bool partial = false) {
  if (c.config_hash != fnv1a(config_text)) {
    throw CheckpointError("checkpoint config hash " + hex64(c.config_hash) + " does not match the model config hash " +
                          hex64(fnv1a(config_text)));
  }
  LoadReport rep;
  for (auto& p : store.all()) {
    const auto* rec = c.find(p.name);
    if (!rec) {
      if (!partial) throw CheckpointError("checkpoint has no parameter '" + p.name + "'");
      rep.fresh.push_back(p.name);
      continue;
    }
    detail::from_record(*rec, p.array());
    rep.loaded.push_back(p.name);
  }
  for (const auto& rec : c.parameters) {
    if (!store.find(rec.name)) rep.ignored.push_back(rec.name);
  }
  return rep;
}

/// Restores optimizer moments and step count.
template <typename T>
void load_optimizer_state(const Checkpoint& c, diff::Adam<T>& opt) {
  if (!c.has_state) throw CheckpointError("checkpoint has no training state");
  auto& moments = opt.moments();
  moments.clear();
  if (c.state.first_moments.size() != c.state.second_moments.size()) {
    throw CheckpointError("checkpoint moment counts differ");
  }
  for (std::size_t i = 0; i < c.state.first_moments.size(); ++i) {
    const auto& m = c.state.first_moments[i];
    const auto& v = c.state.second_moments[i];
    if (m.name != v.name || m.shape != v.shape) throw CheckpointError("checkpoint moments of '" + m.name + "' disagree");
    typename diff::Adam<T>::Moments mv{diff::NdArray<T>(m.shape), diff::NdArray<T>(v.shape)};
    detail::from_record(m, mv.m);
    detail::from_record(v, mv.v);
    moments.emplace(m.name, std::move(mv));
  }
  opt.set_steps(static_cast<std::size_t>(c.state.step));
}

}  // namespace nerfmae::pipeline

#endif  // NERFMAE_PIPELINE_CHECKPOINT_HPP_
