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


#ifndef NERFMAE_PIPELINE_COMMANDS_HPP_
#define NERFMAE_PIPELINE_COMMANDS_HPP_

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nerfmae/downstream.hpp"
#include "nerfmae/gridextract.hpp"
#include "nerfmae/pipeline/checkpoint.hpp"
#include "nerfmae/pipeline/manifest.hpp"
#include "nerfmae/pipeline/png_io.hpp"
#include "nerfmae/pipeline/run_config.hpp"
#include "nerfmae/recon.hpp"
#include "nerfmae/scenefield.hpp"

namespace nerfmae::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kManifestFile = "transforms.json";
inline constexpr const char* kGroundTruthGrid = "scene_gt.grid";
inline constexpr const char* kHiresGrid = "hires.grid";
inline constexpr const char* kLabelsFile = "labels.grid";
inline constexpr const char* kBoxesFile = "boxes.json";
inline constexpr const char* kFieldCheckpoint = "field.ckpt";
inline constexpr const char* kPretrainCheckpoint = "pretrain.ckpt";

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline swin::EncoderConfig encoder_config(const RunConfig& c) {
  swin::EncoderConfig e;
  const std::size_t r = c.count("resolution");
  e.input = {r, r, r};
  e.patch = c.count("patch");
  e.embed_dim = c.count("embed_dim");
  const auto depths = c.counts("depths");
  const auto heads = c.counts("heads");
  if (depths.size() != 4 || heads.size() != 4) throw ConfigError("depths and heads need four entries");
  std::copy(depths.begin(), depths.end(), e.depths.begin());
  std::copy(heads.begin(), heads.end(), e.heads.begin());
  e.window = c.count("window");
  e.mlp_ratio = c.count("mlp_ratio");
  e.validate();
  return e;
}

inline recon::TrainConfig pretrain_config(const RunConfig& c) {
  recon::TrainConfig t;
  t.steps = c.count("steps");
  t.epochs = c.count("epochs");
  t.batch = c.count("batch");
  t.max_lr = c.real("max_lr");
  t.weight_decay = c.real("weight_decay");
  t.clip = c.real("clip");
  t.augment_probability = c.real("augment_probability");
  t.mask_ratio = c.real("mask_ratio");
  t.delta = c.real("delta");
  t.seed = derive_seed(static_cast<std::uint64_t>(c.integer("seed")), "pretrain");
  t.validate();
  return t;
}

inline downstream::TaskConfig task_config(const RunConfig& c, downstream::Task task) {
  downstream::TaskConfig t;
  t.task = task;
  t.classes = c.count("classes");
  t.sr_factor = c.real("sr_factor");
  t.epochs = c.count("finetune_epochs");
  t.batch = c.count("finetune_batch");
  t.max_lr = c.real("finetune_lr");
  t.weight_decay = c.real("weight_decay");
  t.clip = c.real("clip");
  t.augment_probability = c.real("augment_probability");
  t.seed = derive_seed(static_cast<std::uint64_t>(c.integer("seed")), "finetune");
  t.validate();
  return t;
}

inline grid::GridSpec grid_spec(const RunConfig& c, const scene::Bounds& bounds) {
  grid::GridSpec s;
  const std::size_t r = c.count("resolution");
  s.resolution = {r, r, r};
  s.bounds = bounds;
  s.delta = c.real("delta");
  s.validate();
  return s;
}

inline std::string field_config_text(const scene::FieldConfig& f) {
  std::ostringstream os;
  os << "field.resolution=" << f.resolution << "\nfield.features=" << f.features << "\nfield.hidden=" << f.hidden
     << "\nfield.density_scale=" << format_real(f.density_scale) << "\nfield.init_density="
     << format_real(f.init_density) << "\nfield.direction_gain=" << format_real(f.direction_gain);
  for (int a = 0; a < 3; ++a) os << "\nfield.min" << a << "=" << format_real(f.bounds.min[a]);
  for (int a = 0; a < 3; ++a) os << "\nfield.max" << a << "=" << format_real(f.bounds.max[a]);
  os << "\n";
  return os.str();
}

inline scene::FieldConfig parse_field_config(const std::string& text) {
  std::map<std::string, double> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
  }
  auto get = [&](const std::string& k) {
    const auto it = kv.find("field." + k);
    if (it == kv.end()) throw CheckpointError("field checkpoint: config lacks '" + k + "'");
    return it->second;
  };
  scene::FieldConfig f;
  f.resolution = static_cast<int>(get("resolution"));
  f.features = static_cast<int>(get("features"));
  f.hidden = static_cast<int>(get("hidden"));
  f.density_scale = get("density_scale");
  f.init_density = get("init_density");
  f.direction_gain = get("direction_gain");
  for (int a = 0; a < 3; ++a) {
    f.bounds.min[a] = get("min" + std::to_string(a));
    f.bounds.max[a] = get("max" + std::to_string(a));
  }
  return f;
}

/// Scene package directories under `data`, sorted by name.
inline std::vector<fs::path> list_scenes(const fs::path& data) {
  if (!fs::is_directory(data)) throw UsageError("data directory " + data.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(data)) {
    if (e.is_directory() && fs::exists(e.path() / kManifestFile)) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw UsageError("no scene packages (directories with " + std::string(kManifestFile) + ") in " +
                                    data.string());
  return out;
}

inline fs::path require_file(const fs::path& p, const std::string& hint = "") {
  if (!fs::exists(p)) throw UsageError("missing input " + p.string() + (hint.empty() ? "" : " (" + hint + ")"));
  return p;
}

inline std::uint64_t run_seed(const RunConfig& c) { return static_cast<std::uint64_t>(c.integer("seed")); }

/// Per-command context: resolved config plus output streams.
struct Context {
  RunConfig config;
  std::ostream* out = &std::cout;
  std::ostream& log() const { return *out; }
};

inline void echo_config(const Context& ctx, const fs::path& dir) {
  ctx.log() << "# resolved config (hash " << hex64(ctx.config.hash()) << ")\n" << ctx.config.text();
  ctx.config.echo(dir / kRunConfigFile);
}

// ---- synth ----

inline void cmd_synth(const Context& ctx) {
  const auto& c = ctx.config;
  const fs::path data = c.str("data");
  const std::size_t count = c.count("count");
  if (count == 0) throw UsageError("synth: --count must be positive");
  const int views = static_cast<int>(c.count("views"));
  const int size = static_cast<int>(c.count("image_size"));
  echo_config(ctx, data);
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04zu", i);
    const fs::path dir = data / name;
    fs::create_directories(dir / "images");
    const auto s = scene::make_synthetic_scene(derive_seed(run_seed(c), "scene", i));
    scene::TrajectoryConfig traj;
    traj.width = traj.height = size;
    const auto cams = scene::sample_camera_trajectory(s.scene.bounds, views, derive_seed(run_seed(c), "cameras", i), traj);
    scene::RenderConfig rc;
    rc.samples_per_ray = static_cast<int>(c.count("render_samples"));
    std::vector<std::string> files;
    for (std::size_t v = 0; v < cams.size(); ++v) {
      char file[32];
      std::snprintf(file, sizeof file, "images/%04zu.png", v);
      write_png(scene::render_image(s.scene, cams[v], s.scene.bounds, rc, true), dir / file);
      files.push_back(file);
    }
    std::ofstream(dir / kManifestFile) << manifest_json(cams, files, s.scene.bounds).dump(2) << "\n";
    const auto spec = grid_spec(c, s.scene.bounds);
    grid::write_grid(grid::ground_truth_grid(s.scene, spec), dir / kGroundTruthGrid);
    grid::write_label_grid(grid::label_grid(s, spec), dir / kLabelsFile);
    auto hi = spec;
    const std::size_t e = downstream::superres_extent(spec.resolution[0], c.real("sr_factor"));
    hi.resolution = {e, e, e};
    grid::write_grid(grid::ground_truth_grid(s.scene, hi), dir / kHiresGrid);
    std::vector<metrics::Box3> world;
    for (std::size_t b = 0; b < s.boxes.size(); ++b) {
      world.push_back(metrics::Box3::from_corners(s.boxes[b].min, s.boxes[b].max, 1.0, s.labels[b]));
    }
    std::ofstream(dir / kBoxesFile) << boxes_json(world, downstream::grid_boxes(s, spec)).dump(2) << "\n";
    ctx.log() << "synth: " << dir.string() << " (" << s.boxes.size() << " objects, " << cams.size() << " views)\n";
  }
}

// ---- fit / extract ----

inline std::vector<fs::path> selected_scenes(const RunConfig& c) {
  if (!c.str("scene").empty()) {
    const fs::path dir = c.str("scene");
    require_file(dir / kManifestFile, "not a scene package");
    return {dir};
  }
  return list_scenes(c.str("data"));
}

inline scene::Bounds manifest_bounds(const SceneManifest& m, const std::vector<scene::Camera>& cams) {
  return m.bounds ? *m.bounds : grid::compute_scene_bounds(cams);
}

inline void cmd_fit(const Context& ctx) {
  const auto& c = ctx.config;
  const auto scenes = selected_scenes(c);
  for (const auto& dir : scenes) {
    echo_config(ctx, dir);
    const auto m = parse_manifest(dir / kManifestFile);
    const auto cams = m.cameras();
    std::vector<scene::Image> images;
    for (const auto& f : m.frames) images.push_back(read_png(f.image));
    scene::FieldConfig fcfg;
    fcfg.bounds = manifest_bounds(m, cams);
    const std::string id = dir.filename().string();
    scene::TrainableField field(fcfg, derive_seed(run_seed(c), "field:" + id));
    scene::FitConfig fit;
    fit.steps = static_cast<int>(c.count("fit_steps"));
    fit.batch_rays = static_cast<int>(c.count("fit_rays"));
    fit.samples_per_ray = static_cast<int>(c.count("fit_samples"));
    fit.lr = c.real("fit_lr");
    fit.seed = derive_seed(run_seed(c), "fit:" + id);
    const auto r = scene::fit_field(images, cams, field, fit);
    auto ckpt = make_checkpoint(field.parameters(), field_config_text(fcfg), run_seed(c));
    ckpt.meta["kind"] = "field";
    ckpt.meta["run_hash"] = hex64(c.hash());
    write_checkpoint(ckpt, dir / kFieldCheckpoint);
    std::ofstream table(dir / "fit_loss.tsv");
    table << "step\tmse\n" << std::setprecision(9);
    for (std::size_t s = 0; s < r.loss_history.size(); ++s) table << s << '\t' << r.loss_history[s] << '\n';
    ctx.log() << "fit: " << dir.string() << " loss " << r.loss_history.front() << " -> " << r.loss_history.back()
              << "\n";
  }
}

inline scene::TrainableField load_field(const fs::path& path) {
  const auto ckpt = read_checkpoint(path);
  if (ckpt.meta_or("kind") != "field") throw CheckpointError(path.string() + " is not a field checkpoint");
  scene::TrainableField field(parse_field_config(ckpt.config_text));
  load_parameters(ckpt, field.parameters(), ckpt.config_text);
  return field;
}

inline void cmd_extract(const Context& ctx) {
  const auto& c = ctx.config;
  for (const auto& dir : selected_scenes(c)) {
    echo_config(ctx, dir);
    const auto field = load_field(require_file(dir / kFieldCheckpoint, "run fit first"));
    const auto m = parse_manifest(dir / kManifestFile);
    const auto g = grid::extract_grid(field, m.cameras(), grid_spec(c, field.config().bounds));
    grid::write_grid(g, dir / c.str("grid_name"));
    ctx.log() << "extract: " << (dir / c.str("grid_name")).string() << "\n";
  }
}

// ---- pretrain ----

inline std::vector<diff::NdArray<float>> load_grids(const RunConfig& c, const std::vector<fs::path>& scenes) {
  std::vector<diff::NdArray<float>> grids;
  for (const auto& dir : scenes) {
    const auto path = require_file(dir / c.str("grid_name"), "run extract first or set grid_name=scene_gt.grid");
    grids.push_back(swin::channel_first<float>(grid::read_grid(path)));
  }
  return grids;
}

inline void cmd_pretrain(const Context& ctx) {
  const auto& c = ctx.config;
  const fs::path out = c.str("out");
  echo_config(ctx, out);
  const auto enc = encoder_config(c);
  const auto train = pretrain_config(c);
  const auto grids = load_grids(c, list_scenes(c.str("data")));
  recon::MaskedAutoencoder<float> model(enc);
  diff::Adam<float> opt(train.adam());
  const std::string enc_text = enc.describe();
  if (!c.str("init").empty()) {
    const auto ckpt = read_checkpoint(require_file(c.str("init")));
    load_parameters(ckpt, model.store(), enc_text);
    load_optimizer_state(ckpt, opt);
    ctx.log() << "pretrain: resuming at step " << opt.steps() << "\n";
  } else {
    diff::init_parameters(model.store(), derive_seed(run_seed(c), "init"));
  }
  const auto history = recon::pretrain(model, grids, train, opt, [&](const recon::LossRow& r) {
    if (r.step % 10 == 0) ctx.log() << "pretrain: step " << r.step << " total " << r.total << "\n";
  });
  std::ofstream table(out / "pretrain_loss.tsv");
  recon::write_loss_table(table, history);
  auto ckpt = make_checkpoint(model.store(), enc_text, run_seed(c), &opt);
  ckpt.meta["kind"] = "pretrain";
  ckpt.meta["run_hash"] = hex64(c.hash());
  write_checkpoint(ckpt, out / kPretrainCheckpoint);
  ctx.log() << "pretrain: wrote " << (out / kPretrainCheckpoint).string() << "\n";
}

// ---- finetune / eval ----

inline downstream::LabeledScene load_labeled_scene(const RunConfig& c, const fs::path& dir, bool hires) {
  downstream::LabeledScene s;
  s.grid = swin::channel_first<float>(grid::read_grid(require_file(dir / c.str("grid_name"))));
  s.labels = grid::read_label_grid(require_file(dir / kLabelsFile)).labels;
  s.boxes = read_grid_boxes(require_file(dir / kBoxesFile));
  if (hires) s.hires = swin::channel_first<float>(grid::read_grid(require_file(dir / kHiresGrid)));
  return s;
}

struct Split {
  std::vector<downstream::LabeledScene> train, val;
};

inline Split load_split(const RunConfig& c, bool hires) {
  const auto scenes = list_scenes(c.str("data"));
  if (scenes.size() < 2) throw UsageError("finetune: need at least 2 scenes (train and validation)");
  const double f = c.real("val_fraction");
  if (!(f > 0 && f < 1)) throw ConfigError("val_fraction must lie in (0, 1)");
  const std::size_t nval = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(f * scenes.size())), 1,
                                                   scenes.size() - 1);
  Split s;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    (i + nval < scenes.size() ? s.train : s.val).push_back(load_labeled_scene(c, scenes[i], hires));
  }
  return s;
}

inline std::string task_file(downstream::Task t) { return downstream::task_name(t) + ".ckpt"; }

inline void cmd_finetune(const Context& ctx) {
  const auto& c = ctx.config;
  const fs::path out = c.str("out");
  echo_config(ctx, out);
  const auto task = downstream::parse_task(c.str("task"));
  const auto enc = encoder_config(c);
  const auto tcfg = task_config(c, task);
  const auto split = load_split(c, task == downstream::Task::kSuperRes);
  downstream::TaskModel<float> model(enc, tcfg);
  model.initialize(derive_seed(run_seed(c), "finetune_init"), false);
  const bool scratch = c.flag("from_scratch");
  if (!scratch) {
    if (c.str("init").empty()) throw UsageError("finetune: --init <pretrain checkpoint> or --from-scratch required");
    const auto ckpt = read_checkpoint(require_file(c.str("init")));
    const auto rep = load_parameters(ckpt, model.store(), enc.describe(), true);
    ctx.log() << "finetune: loaded " << rep.loaded.size() << " parameters from " << c.str("init") << "\n";
    for (const auto& n : rep.fresh) ctx.log() << "finetune: fresh parameter " << n << "\n";
  }
  const auto result = downstream::finetune(model, split.train, split.val, [&](const downstream::EpochRow& r) {
    ctx.log() << "finetune: epoch " << r.epoch << " loss " << r.train_loss << " val " << r.val_metric << "\n";
  });
  std::ofstream table(out / ("finetune_" + downstream::task_name(task) + ".tsv"));
  table << "epoch\ttrain_loss\tval_metric\n" << std::setprecision(9);
  for (const auto& r : result.history) table << r.epoch << '\t' << r.train_loss << '\t' << r.val_metric << '\n';
  std::ofstream report(out / ("metrics_" + downstream::task_name(task) + ".txt"));
  result.best_report.write_text(report);
  auto ckpt = make_checkpoint(model.store(), enc.describe(), run_seed(c));
  ckpt.meta["kind"] = "task";
  ckpt.meta["task"] = downstream::task_name(task);
  ckpt.meta["classes"] = std::to_string(tcfg.classes);
  ckpt.meta["sr_factor"] = format_real(tcfg.sr_factor);
  ckpt.meta["from_scratch"] = scratch ? "true" : "false";
  ckpt.meta["run_hash"] = hex64(c.hash());
  write_checkpoint(ckpt, out / task_file(task));
  ctx.log() << "finetune: best epoch " << result.best_epoch << " metric " << result.best_metric << "\n";
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline metrics::MetricsReport cmd_eval(const Context& ctx) {
  const auto& c = ctx.config;
  const fs::path out = c.str("out");
  echo_config(ctx, out);
  const auto paths = split_list(c.str("checkpoint"));
  if (paths.empty()) throw UsageError("eval: --checkpoint is required");
  const auto enc = encoder_config(c);
  const auto scenes = list_scenes(c.str("data"));
  std::vector<Checkpoint> ckpts;
  std::set<std::string> hashes;
  for (const auto& p : paths) {
    ckpts.push_back(read_checkpoint(require_file(p)));
    hashes.insert(ckpts.back().meta_or("run_hash", "unknown"));
  }
  const fs::path data_config = fs::path(c.str("data")) / kRunConfigFile;
  if (fs::exists(data_config)) hashes.insert(hex64(echoed_hash(data_config)));
  if (hashes.size() > 1 && !c.flag("allow_mixed")) {
    std::string list;
    for (const auto& h : hashes) list += " " + h;
    throw UsageError("eval: inputs come from different configs (hashes" + list + "); pass --allow-mixed to combine");
  }
  metrics::MetricsReport report;
  bool have_sr = false;
  for (std::size_t i = 0; i < ckpts.size(); ++i) {
    const auto& ck = ckpts[i];
    const auto kind = ck.meta_or("kind");
    if (kind == "task") {
      auto task = downstream::parse_task(ck.meta_or("task"));
      auto tcfg = task_config(c, task);
      tcfg.classes = std::stoul(ck.meta_or("classes", "2"));
      tcfg.sr_factor = std::stod(ck.meta_or("sr_factor", "2.4"));
      downstream::TaskModel<float> model(enc, tcfg);
      load_parameters(ck, model.store(), enc.describe());
      std::vector<downstream::LabeledScene> labeled;
      for (const auto& dir : scenes) labeled.push_back(load_labeled_scene(c, dir, task == downstream::Task::kSuperRes));
      const auto r = downstream::evaluate_task(model, labeled);
      for (const auto& [k, v] : r.values) report.set(k, v);
      have_sr = have_sr || task == downstream::Task::kSuperRes;
    } else if (kind == "pretrain") {
      if (have_sr) continue;
      recon::MaskedAutoencoder<float> model(enc);
      load_parameters(ck, model.store(), enc.describe());
      const auto ev = recon::evaluate_reconstruction(model, load_grids(c, scenes), c.real("mask_ratio"),
                                                     derive_seed(run_seed(c), "eval"), c.real("delta"));
      report.set("psnr_3d", ev.psnr());
      report.set("mse_3d", ev.mse);
    } else {
      throw UsageError("eval: " + paths[i] + " is a '" + kind + "' checkpoint, expected a task or pretrain checkpoint");
    }
  }
  std::ofstream text(out / "metrics.txt");
  report.write_text(text);
  std::ofstream table(out / "metrics.tsv");
  report.write_table(table);
  report.write_text(ctx.log());
  return report;
}

// ---- command line ----

inline std::string flag_name(const std::string& key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', '-');
  return "--" + s;
}

/// Parses argv and runs one subcommand. Returns the process exit status.
inline int run_command(int argc, const char* const* argv, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"nerfmae: radiance grids, masked pretraining and 3D fine-tuning"};
  app.require_subcommand(1, 1);
  struct Sub {
    CLI::App* app;
    std::string config_file;
    std::map<std::string, std::string> values;
    std::map<std::string, bool> flags;
  };
  const std::vector<std::pair<std::string, std::string>> names = {
      {"synth", "emit synthetic scene packages"},
      {"fit", "fit radiance fields to scene packages"},
      {"extract", "sample fitted fields into radiance and density grids"},
      {"pretrain", "masked-autoencoder pretraining on grids"},
      {"finetune", "train a task head (label, sr or detect)"},
      {"eval", "evaluate task or pretraining checkpoints"}};
  std::vector<Sub> subs(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto& s = subs[i];
    s.app = app.add_subcommand(names[i].first, names[i].second);
    s.app->add_option("--config", s.config_file, "key=value configuration file");
    for (const auto& k : config_schema()) {
      if (k.name == "from_scratch" || k.name == "allow_mixed") {
        s.app->add_flag(flag_name(k.name), s.flags[k.name], k.help);
      } else {
        s.app->add_option(flag_name(k.name), s.values[k.name], k.help + " [" + k.default_value + "]");
      }
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  for (std::size_t i = 0; i < subs.size(); ++i) {
    auto& s = subs[i];
    if (!s.app->parsed()) continue;
    try {
      Context ctx;
      ctx.out = &out;
      if (!s.config_file.empty()) ctx.config.merge_file(s.config_file);
      for (const auto& k : config_schema()) {
        const auto* opt = s.app->get_option(flag_name(k.name));
        if (opt->count() == 0) continue;
        if (s.flags.count(k.name)) {
          ctx.config.set(k.name, s.flags[k.name] ? "true" : "false");
        } else {
          ctx.config.set(k.name, s.values[k.name]);
        }
      }
      ctx.config.validate();
      const auto& cmd = names[i].first;
      if (cmd == "synth") cmd_synth(ctx);
      if (cmd == "fit") cmd_fit(ctx);
      if (cmd == "extract") cmd_extract(ctx);
      if (cmd == "pretrain") cmd_pretrain(ctx);
      if (cmd == "finetune") cmd_finetune(ctx);
      if (cmd == "eval") cmd_eval(ctx);
      return 0;
    } catch (const UsageError& e) {
      err << "usage error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}

}  // namespace nerfmae::pipeline

#endif  // NERFMAE_PIPELINE_COMMANDS_HPP_
