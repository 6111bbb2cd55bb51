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


#ifndef NERFMAE_PIPELINE_MANIFEST_HPP_
#define NERFMAE_PIPELINE_MANIFEST_HPP_

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nerfmae/metrics/box.hpp"
#include "nerfmae/pipeline/png_io.hpp"
#include "nerfmae/scenefield/geometry.hpp"
#include "nerfmae/scenefield/scene.hpp"

namespace nerfmae::pipeline {

using Json = nlohmann::json;

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
};

struct ManifestFrame {
  std::filesystem::path image;        // resolved against the manifest directory
  Eigen::Matrix4d world_from_camera;  // camera looks down -z, y up
  Intrinsics intrinsics;              // per-frame focal lengths and center
};

/// Posed-image manifest in the transforms.json convention:
/// { "camera_angle_x" | "fl_x"[, "fl_y"], ["cx", "cy"], ["w", "h"],
///   "frames": [{"file_path", "transform_matrix", ["fl_x", "fl_y", "cx", "cy"]}],
///   ["aabb"], ["units"] }. Per-frame intrinsics override the shared block.
struct SceneManifest {
  Intrinsics intrinsics;
  std::vector<ManifestFrame> frames;
  std::optional<scene::Bounds> bounds;
  std::string units;

  std::vector<scene::Camera> cameras() const {
    std::vector<scene::Camera> out;
    for (const auto& f : frames) {
      scene::Camera c;
      c.fx = f.intrinsics.fx;
      c.fy = f.intrinsics.fy;
      c.cx = f.intrinsics.cx;
      c.cy = f.intrinsics.cy;
      c.width = f.intrinsics.width;
      c.height = f.intrinsics.height;
      c.rotation = f.world_from_camera.topLeftCorner<3, 3>();
      c.translation = f.world_from_camera.topRightCorner<3, 1>();
      out.push_back(c);
    }
    return out;
  }
};

namespace detail {

inline double number(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
  if (!j[key].is_number()) throw ParseError(where + ": field '" + key + "' must be a number");
  return j[key].get<double>();
}

inline Eigen::Matrix4d matrix4(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) throw ParseError(where + ": transform_matrix must be 4x4");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    if (!j[r].is_array() || j[r].size() != 4) throw ParseError(where + ": transform_matrix must be 4x4");
    for (int c = 0; c < 4; ++c) {
      if (!j[r][c].is_number()) throw ParseError(where + ": transform_matrix entries must be numbers");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

}  // namespace detail

/// Parses and validates a manifest. Image sizes are checked against the
/// declared intrinsics (read from the first image when "w"/"h" are absent).
inline SceneManifest parse_manifest_text(const std::string& text, const std::filesystem::path& dir,
                                         const std::string& what = "manifest") {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(what + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw ParseError(what + ": top level must be an object");
  SceneManifest m;
  if (j.contains("units") && j["units"].is_string()) m.units = j["units"].get<std::string>();
  if (!j.contains("frames") || !j["frames"].is_array()) throw ParseError(what + ": missing 'frames' array");
  if (j["frames"].empty()) throw ParseError(what + ": 'frames' is empty");
  for (std::size_t i = 0; i < j["frames"].size(); ++i) {
    const auto& f = j["frames"][i];
    const std::string where = what + ": frame " + std::to_string(i);
    if (!f.is_object() || !f.contains("file_path") || !f["file_path"].is_string()) {
      throw ParseError(where + ": missing 'file_path'");
    }
    if (!f.contains("transform_matrix")) throw ParseError(where + ": missing 'transform_matrix'");
    ManifestFrame frame;
    std::filesystem::path p = f["file_path"].get<std::string>();
    if (!p.has_extension()) p += ".png";
    frame.image = p.is_absolute() ? p : (dir / p).lexically_normal();
    frame.world_from_camera = detail::matrix4(f["transform_matrix"], where);
    const Eigen::Matrix3d r = frame.world_from_camera.topLeftCorner<3, 3>();
    const double det = frame.world_from_camera.determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-9) throw ParseError(where + ": singular transform_matrix");
    if (!(r.transpose() * r).isApprox(Eigen::Matrix3d::Identity(), 1e-4) || r.determinant() < 0) {
      throw ParseError(where + ": transform_matrix rotation is not a proper rotation");
    }
    if (!std::filesystem::exists(frame.image)) {
      throw ParseError(where + ": image " + frame.image.string() + " does not exist");
    }
    m.frames.push_back(std::move(frame));
  }

  auto& in = m.intrinsics;
  const bool has_w = j.contains("w") && j.contains("h");
  if (has_w) {
    in.width = static_cast<int>(detail::number(j, "w", what));
    in.height = static_cast<int>(detail::number(j, "h", what));
  } else {
    const auto first = read_png(m.frames[0].image);
    in.width = first.width;
    in.height = first.height;
  }
  if (in.width < 1 || in.height < 1) throw ParseError(what + ": intrinsics: image size must be positive");
  if (j.contains("fl_x")) {
    in.fx = detail::number(j, "fl_x", what + ": intrinsics");
    in.fy = j.contains("fl_y") ? detail::number(j, "fl_y", what + ": intrinsics") : in.fx;
  } else if (j.contains("camera_angle_x")) {
    const double angle = detail::number(j, "camera_angle_x", what + ": intrinsics");
    if (!(angle > 0 && angle < 3.14159)) throw ParseError(what + ": intrinsics: camera_angle_x out of range");
    in.fx = in.fy = 0.5 * in.width / std::tan(0.5 * angle);
  } else {
    throw ParseError(what + ": missing intrinsics (camera_angle_x or fl_x)");
  }
  if (!(in.fx > 0) || !(in.fy > 0)) throw ParseError(what + ": intrinsics: focal lengths must be positive");
  in.cx = j.contains("cx") ? detail::number(j, "cx", what + ": intrinsics") : 0.5 * in.width;
  in.cy = j.contains("cy") ? detail::number(j, "cy", what + ": intrinsics") : 0.5 * in.height;

  for (std::size_t i = 0; i < m.frames.size(); ++i) {
    const auto& f = j["frames"][i];
    const std::string where = what + ": frame " + std::to_string(i) + ": intrinsics";
    auto& fi = m.frames[i].intrinsics;
    fi = in;
    if (f.contains("fl_x")) {
      fi.fx = detail::number(f, "fl_x", where);
      fi.fy = f.contains("fl_y") ? detail::number(f, "fl_y", where) : fi.fx;
    }
    if (f.contains("cx")) fi.cx = detail::number(f, "cx", where);
    if (f.contains("cy")) fi.cy = detail::number(f, "cy", where);
    if (!(fi.fx > 0) || !(fi.fy > 0)) throw ParseError(where + ": focal lengths must be positive");
    const auto img = read_png(m.frames[i].image);
    if (img.width != in.width || img.height != in.height) {
      throw ParseError(what + ": frame " + std::to_string(i) + ": image is " + std::to_string(img.width) + "x" +
                       std::to_string(img.height) + ", manifest declares " + std::to_string(in.width) + "x" +
                       std::to_string(in.height));
    }
  }

  if (j.contains("aabb")) {
    const auto& a = j["aabb"];
    if (!a.is_array() || a.size() != 2 || !a[0].is_array() || !a[1].is_array() || a[0].size() != 3 ||
        a[1].size() != 3) {
      throw ParseError(what + ": aabb must be [[x,y,z],[x,y,z]]");
    }
    scene::Bounds b;
    for (int k = 0; k < 3; ++k) {
      b.min[k] = a[0][k].get<double>();
      b.max[k] = a[1][k].get<double>();
    }
    if (!b.valid()) throw ParseError(what + ": aabb is degenerate");
    m.bounds = b;
  }
  return m;
}

inline SceneManifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest_text(ss.str(), path.parent_path(), path.string());
}

inline Json manifest_json(const std::vector<scene::Camera>& cameras, const std::vector<std::string>& files,
                          const std::optional<scene::Bounds>& bounds, const std::string& units = "scene units") {
  if (cameras.empty() || cameras.size() != files.size()) throw ContractError("manifest_json: one file per camera");
  const auto& c0 = cameras[0];
  Json j;
  j["fl_x"] = c0.fx;
  j["fl_y"] = c0.fy;
  j["cx"] = c0.cx;
  j["cy"] = c0.cy;
  j["w"] = c0.width;
  j["h"] = c0.height;
  j["units"] = units;
  if (bounds) {
    j["aabb"] = {{bounds->min[0], bounds->min[1], bounds->min[2]}, {bounds->max[0], bounds->max[1], bounds->max[2]}};
  }
  j["frames"] = Json::array();
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    Json rows = Json::array();
    for (int r = 0; r < 4; ++r) {
      Json row = Json::array();
      for (int c = 0; c < 4; ++c) {
        double v = r == 3 ? (c == 3 ? 1.0 : 0.0) : (c < 3 ? cameras[i].rotation(r, c) : cameras[i].translation[r]);
        row.push_back(v);
      }
      rows.push_back(row);
    }
    j["frames"].push_back({{"file_path", files[i]},
                           {"transform_matrix", rows},
                           {"fl_x", cameras[i].fx},
                           {"fl_y", cameras[i].fy},
                           {"cx", cameras[i].cx},
                           {"cy", cameras[i].cy}});
  }
  return j;
}

/// boxes.json: per object its class and axis-aligned box in world and grid
/// coordinates.
inline Json boxes_json(const std::vector<metrics::Box3>& world, const std::vector<metrics::Box3>& grid) {
  Json j = Json::array();
  for (std::size_t i = 0; i < world.size(); ++i) {
    auto corners = [](const metrics::Box3& b) {
      return Json{{b.lo()[0], b.lo()[1], b.lo()[2]}, {b.hi()[0], b.hi()[1], b.hi()[2]}};
    };
    j.push_back({{"class", world[i].class_id}, {"world", corners(world[i])}, {"grid", corners(grid[i])}});
  }
  return j;
}

/// Grid-coordinate boxes from boxes.json.
inline std::vector<metrics::Box3> read_grid_boxes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON: " + e.what());
  }
  if (!j.is_array()) throw ParseError(path.string() + ": expected an array of boxes");
  std::vector<metrics::Box3> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& b = j[i];
    if (!b.contains("grid") || !b["grid"].is_array() || b["grid"].size() != 2) {
      throw ParseError(path.string() + ": box " + std::to_string(i) + ": missing 'grid' corners");
    }
    Eigen::Vector3d lo, hi;
    for (int k = 0; k < 3; ++k) {
      lo[k] = b["grid"][0][k].get<double>();
      hi[k] = b["grid"][1][k].get<double>();
    }
    out.push_back(metrics::Box3::from_corners(lo, hi, 1.0, b.value("class", 0)));
  }
  return out;
}

}  // namespace nerfmae::pipeline

#endif  // NERFMAE_PIPELINE_MANIFEST_HPP_
