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


#ifndef NERFMAE_PIPELINE_RUN_CONFIG_HPP_
#define NERFMAE_PIPELINE_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nerfmae/errors.hpp"
#include "nerfmae/rng.hpp"

namespace nerfmae::pipeline {

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a64(s); }

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
  bool hashed = true;  // part of the experiment identity
};

/// Every tunable of a run. Paths and per-invocation selectors are not hashed.
inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "0", "run seed; per-stage seeds are derived from it"},
      {"count", "16", "scenes emitted by synth"},
      {"views", "12", "camera views per scene"},
      {"image_size", "64", "rendered image width and height"},
      {"render_samples", "256", "samples per ray when rendering synthetic images"},
      {"fit_steps", "2000", "field optimization steps"},
      {"fit_rays", "512", "rays per field step"},
      {"fit_samples", "64", "samples per ray during fitting"},
      {"fit_lr", "0.01", "field learning rate"},
      {"resolution", "32", "grid resolution per axis"},
      {"delta", "0.01", "opacity threshold and alpha step"},
      {"grid_name", "grid.grid", "grid file read from each scene package"},
      {"patch", "4", "patch size"},
      {"embed_dim", "16", "embedding dimension"},
      {"depths", "2,2,2,2", "blocks per stage"},
      {"heads", "1,2,4,8", "attention heads per stage"},
      {"window", "4", "attention window"},
      {"mlp_ratio", "4", "MLP expansion ratio"},
      {"steps", "200", "pretraining steps (used when epochs = 0)"},
      {"epochs", "0", "pretraining epochs"},
      {"batch", "4", "pretraining batch size"},
      {"max_lr", "0.0003", "peak learning rate"},
      {"weight_decay", "0.001", "decoupled weight decay"},
      {"clip", "0.1", "global gradient-norm clip"},
      {"augment_probability", "0.5", "probability of each augmentation"},
      {"mask_ratio", "0.75", "fraction of masked patches"},
      {"finetune_epochs", "60", "fine-tuning epochs"},
      {"finetune_batch", "2", "fine-tuning batch size"},
      {"finetune_lr", "0.0003", "fine-tuning peak learning rate"},
      {"val_fraction", "0.25", "trailing fraction of scenes used for validation"},
      {"classes", "2", "semantic classes"},
      {"sr_factor", "2.4", "super-resolution factor (1.6 or 2.4)"},
      {"task", "label", "fine-tuning task: label, sr or detect", false},
      {"from_scratch", "false", "fine-tune without loading the pretrained encoder", false},
      {"allow_mixed", "false", "let eval combine artifacts of different configs", false},
      {"data", "data", "scene package directory", false},
      {"out", "out", "output directory", false},
      {"init", "", "checkpoint used to initialize or resume", false},
      {"checkpoint", "", "comma-separated checkpoints evaluated by eval", false},
      {"scene", "", "single scene package for fit and extract (default: every scene in data)", false},
  };
  return keys;
}

/// Resolved key=value configuration: defaults < file < flags.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_schema()) values_[k.name] = k.default_value;
  }

  static bool known(const std::string& key) {
    for (const auto& k : config_schema()) {
      if (k.name == key) return true;
    }
    return false;
  }

  void set(const std::string& key, const std::string& value) {
    if (!known(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  /// Applies a flat key=value text; '#' starts a comment.
  void merge_text(const std::string& text, const std::string& what = "config") {
    std::istringstream in(text);
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
      line = trim(line.substr(0, line.find('#')));
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ParseError(what + ":" + std::to_string(n) + ": expected key=value, got '" + line + "'");
      }
      const auto key = trim(line.substr(0, eq));
      if (!known(key)) throw ConfigError(what + ":" + std::to_string(n) + ": unknown config key '" + key + "'");
      values_[key] = trim(line.substr(eq + 1));
    }
  }

  void merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    merge_text(ss.str(), path.string());
  }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const auto& s = str(key);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
  }

  std::int64_t integer(const std::string& key) const {
    const auto& s = str(key);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "': expected an integer, got '" + s + "'");
  }

  std::size_t count(const std::string& key) const {
    const auto v = integer(key);
    if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  }

  bool flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no" || s.empty()) return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + s + "'");
  }

  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      std::size_t used = 0;
      long long v = -1;
      try {
        v = std::stoll(item, &used);
      } catch (const std::exception&) {
      }
      if (v < 0 || used != item.size()) throw ConfigError("config key '" + key + "': bad list '" + str(key) + "'");
      out.push_back(static_cast<std::size_t>(v));
    }
    return out;
  }

  /// Checks that every typed key parses.
  void validate() const {
    for (const char* k : {"seed"}) integer(k);
    for (const char* k : {"count", "views", "image_size", "render_samples", "fit_steps", "fit_rays", "fit_samples",
                          "resolution", "patch", "embed_dim", "window", "mlp_ratio", "steps", "epochs", "batch",
                          "finetune_epochs", "finetune_batch", "classes"}) {
      count(k);
    }
    for (const char* k : {"fit_lr", "delta", "max_lr", "weight_decay", "clip", "augment_probability", "mask_ratio",
                          "finetune_lr", "val_fraction", "sr_factor"}) {
      real(k);
    }
    for (const char* k : {"depths", "heads"}) counts(k);
    for (const char* k : {"from_scratch", "allow_mixed"}) flag(k);
  }

  /// Canonical text: one key=value line per schema key, schema order.
  std::string text() const {
    std::string out;
    for (const auto& k : config_schema()) out += k.name + "=" + values_.at(k.name) + "\n";
    return out;
  }

  /// Hash of the experiment keys.
  std::uint64_t hash() const {
    std::string s;
    for (const auto& k : config_schema()) {
      if (k.hashed) s += k.name + "=" + values_.at(k.name) + "\n";
    }
    return fnv1a(s);
  }

  /// Writes the resolved config plus its hash as a comment.
  void echo(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write " + path.string());
    out << "# config_hash " << hex64(hash()) << "\n" << text();
  }

 private:
  std::map<std::string, std::string> values_;
};

inline constexpr const char* kRunConfigFile = "run_config.txt";

/// Config hash recorded in an echoed config file.
inline std::uint64_t echoed_hash(const std::filesystem::path& path) {
  RunConfig c;
  c.merge_file(path);
  return c.hash();
}

}  // namespace nerfmae::pipeline

#endif  // NERFMAE_PIPELINE_RUN_CONFIG_HPP_
