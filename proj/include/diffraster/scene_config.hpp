#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffraster/errors.hpp"
#include "diffraster/obj_io.hpp"
#include "diffraster/png_io.hpp"
#include "diffraster/rng.hpp"
#include "diffraster/scene.hpp"
#include "diffraster/tasks.hpp"

namespace diffraster {

struct CameraConfig {
  std::array<double, 3> eye{0.0, 0.0, 2.5};
  std::array<double, 3> center{0.0, 0.0, 0.0};
  std::array<double, 3> up{0.0, 1.0, 0.0};
  double fov_y_deg = 45.0;
  double aspect = 1.0;
  double near = 0.1;
  double far = 10.0;
};

struct TaskConfig {
  std::string kind = "vertex_color";
  int iterations = 500;
  int snapshot_every = 0;
  int views = 1;
  // Initialization recipe; negative / empty values select per-kind defaults.
  double vertex_noise = -1.0;
  int init_sphere_level = -1;
  double init_sphere_radius = -1.0;
  double color_value = -1.0;
  double texture_value = -1.0;
  double uv_noise = -1.0;
  std::optional<std::array<double, 3>> eye_offset;
  std::vector<double> sh_init;
  double kd_init = -1.0, ks_init = -1.0, shininess_init = -1.0;
};

struct GradcheckConfig {
  int samples = 100;
  double h = 1e-4;
  double tolerance = 1e-3;
};

struct SceneConfig {
  std::string mesh = "icosphere:2";  // template "icosphere:N" or an OBJ path
  std::array<double, 3> mesh_scale{1.0, 1.0, 1.0};
  std::string base = "vertex_colors";  // or "texture"
  std::string texture_path;            // empty selects a generated texture
  int texture_size = 32;
  std::string texture_pattern = "checker";
  std::string lighting = "none";  // none|lambertian|phong|spherical_harmonics
  double k_d = 1.0, k_s = 0.4, shininess = 10.0;
  std::array<double, 3> light_dir{0.0, 0.0, 1.0};
  std::array<double, 9> sh_coeffs{3.5449077018110318, 0, 0, 0, 0, 0, 0, 0, 0};
  CameraConfig camera;
  double delta = 1e-4;
  double cutoff = 1e-7;
  int width = 64, height = 64;
  double lambda_col = 1.0, lambda_sm = 0.001, lambda_lap = 0.01;
  double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t seed = 0;
  TaskConfig task;
  GradcheckConfig gradcheck;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown_keys(const json& j, const std::string& path,
                                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok) throw SchemaError(path + ": unknown field '" + key + "'");
  }
}

inline double num_field(const json& j, const std::string& path, const char* key,
                        double def) {
  if (!j.contains(key)) return def;
  if (!j[key].is_number())
    throw SchemaError(path + "." + key + ": expected a number");
  return j[key].get<double>();
}

inline int int_field(const json& j, const std::string& path, const char* key,
                     int def) {
  if (!j.contains(key)) return def;
  if (!j[key].is_number_integer())
    throw SchemaError(path + "." + key + ": expected an integer");
  return j[key].get<int>();
}

inline std::string str_field(const json& j, const std::string& path,
                             const char* key, const std::string& def) {
  if (!j.contains(key)) return def;
  if (!j[key].is_string())
    throw SchemaError(path + "." + key + ": expected a string");
  return j[key].get<std::string>();
}

template <std::size_t N>
std::array<double, N> vec_field(const json& j, const std::string& path,
                                const char* key, std::array<double, N> def) {
  if (!j.contains(key)) return def;
  const json& v = j[key];
  if (!v.is_array() || v.size() != N)
    throw SchemaError(path + "." + key + ": expected an array of " +
                      std::to_string(N) + " numbers");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!v[i].is_number())
      throw SchemaError(path + "." + key + "[" + std::to_string(i) +
                        "]: expected a number");
    out[i] = v[i].get<double>();
  }
  return out;
}

}  // namespace detail

inline TaskKind task_kind_from_string(const std::string& s) {
  if (s == "geometry" || s == "a") return TaskKind::VertexGeometry;
  if (s == "vertex_color" || s == "b") return TaskKind::VertexColor;
  if (s == "texture" || s == "c") return TaskKind::TextureRecovery;
  if (s == "texcoords" || s == "d") return TaskKind::TexCoordRecovery;
  if (s == "geometry_lambertian" || s == "e") return TaskKind::VertexLambertian;
  if (s == "camera" || s == "f") return TaskKind::CameraEyeRecovery;
  if (s == "sh_lighting" || s == "g") return TaskKind::ShRecovery;
  if (s == "phong_material" || s == "h") return TaskKind::PhongMaterial;
  throw SchemaError("task.kind: unknown task '" + s + "'");
}

inline SceneConfig parse_scene_json(const nlohmann::json& j) {
  using detail::int_field;
  using detail::num_field;
  using detail::str_field;
  using detail::vec_field;

  if (!j.is_object()) throw SchemaError("$: config must be a JSON object");
  detail::reject_unknown_keys(
      j, "$",
      {"mesh", "mesh_scale", "base", "texture", "lighting", "camera", "soft",
       "resolution", "loss_weights", "adam", "seed", "task", "gradcheck"});

  SceneConfig c;
  c.mesh = str_field(j, "$", "mesh", c.mesh);
  c.mesh_scale = vec_field<3>(j, "$", "mesh_scale", c.mesh_scale);
  c.base = str_field(j, "$", "base", c.base);
  if (c.base != "vertex_colors" && c.base != "texture")
    throw SchemaError("$.base: unknown base color model '" + c.base + "'");

  if (j.contains("texture")) {
    const auto& t = j["texture"];
    if (!t.is_object()) throw SchemaError("$.texture: expected an object");
    detail::reject_unknown_keys(t, "$.texture", {"path", "size", "pattern"});
    c.texture_path = str_field(t, "$.texture", "path", "");
    c.texture_size = int_field(t, "$.texture", "size", c.texture_size);
    c.texture_pattern = str_field(t, "$.texture", "pattern", c.texture_pattern);
    if (c.texture_size < 1)
      throw SchemaError("$.texture.size: must be at least 1");
    if (c.texture_pattern != "checker" && c.texture_pattern != "gradient")
      throw SchemaError("$.texture.pattern: unknown pattern '" +
                        c.texture_pattern + "'");
  }

  if (j.contains("lighting")) {
    const auto& l = j["lighting"];
    if (!l.is_object()) throw SchemaError("$.lighting: expected an object");
    detail::reject_unknown_keys(
        l, "$.lighting",
        {"model", "k_d", "k_s", "shininess", "light_dir", "sh_coeffs"});
    c.lighting = str_field(l, "$.lighting", "model", "none");
    if (c.lighting != "none" && c.lighting != "lambertian" &&
        c.lighting != "phong" && c.lighting != "spherical_harmonics")
      throw SchemaError("$.lighting.model: unknown shading model '" +
                        c.lighting + "'");
    c.k_d = num_field(l, "$.lighting", "k_d", c.k_d);
    c.k_s = num_field(l, "$.lighting", "k_s", c.k_s);
    c.shininess = num_field(l, "$.lighting", "shininess", c.shininess);
    c.light_dir = vec_field<3>(l, "$.lighting", "light_dir", c.light_dir);
    c.sh_coeffs = vec_field<9>(l, "$.lighting", "sh_coeffs", c.sh_coeffs);
  }

  if (j.contains("camera")) {
    const auto& cam = j["camera"];
    if (!cam.is_object()) throw SchemaError("$.camera: expected an object");
    detail::reject_unknown_keys(
        cam, "$.camera",
        {"eye", "center", "up", "fov_y_deg", "aspect", "near", "far"});
    c.camera.eye = vec_field<3>(cam, "$.camera", "eye", c.camera.eye);
    c.camera.center = vec_field<3>(cam, "$.camera", "center", c.camera.center);
    c.camera.up = vec_field<3>(cam, "$.camera", "up", c.camera.up);
    c.camera.fov_y_deg = num_field(cam, "$.camera", "fov_y_deg", c.camera.fov_y_deg);
    c.camera.aspect = num_field(cam, "$.camera", "aspect", c.camera.aspect);
    c.camera.near = num_field(cam, "$.camera", "near", c.camera.near);
    c.camera.far = num_field(cam, "$.camera", "far", c.camera.far);
  }

  if (j.contains("soft")) {
    const auto& s = j["soft"];
    if (!s.is_object()) throw SchemaError("$.soft: expected an object");
    detail::reject_unknown_keys(s, "$.soft", {"delta", "cutoff"});
    c.delta = num_field(s, "$.soft", "delta", c.delta);
    c.cutoff = num_field(s, "$.soft", "cutoff", c.cutoff);
    if (!(c.delta > 0)) throw SchemaError("$.soft.delta: must be positive");
    if (!(c.cutoff > 0) || !(c.cutoff < 1))
      throw SchemaError("$.soft.cutoff: must be in (0, 1)");
  }

  if (j.contains("resolution")) {
    const auto r = vec_field<2>(j, "$", "resolution", {64, 64});
    c.width = static_cast<int>(r[0]);
    c.height = static_cast<int>(r[1]);
    if (c.width < 8 || c.height < 8)
      throw SchemaError("$.resolution: must be at least 8x8");
  }

  if (j.contains("loss_weights")) {
    const auto& w = j["loss_weights"];
    if (!w.is_object()) throw SchemaError("$.loss_weights: expected an object");
    detail::reject_unknown_keys(w, "$.loss_weights", {"col", "sm", "lap"});
    c.lambda_col = num_field(w, "$.loss_weights", "col", c.lambda_col);
    c.lambda_sm = num_field(w, "$.loss_weights", "sm", c.lambda_sm);
    c.lambda_lap = num_field(w, "$.loss_weights", "lap", c.lambda_lap);
    if (c.lambda_col < 0 || c.lambda_sm < 0 || c.lambda_lap < 0)
      throw SchemaError("$.loss_weights: weights must be non-negative");
  }

  if (j.contains("adam")) {
    const auto& a = j["adam"];
    if (!a.is_object()) throw SchemaError("$.adam: expected an object");
    detail::reject_unknown_keys(a, "$.adam", {"lr", "beta1", "beta2", "eps"});
    c.lr = num_field(a, "$.adam", "lr", c.lr);
    c.beta1 = num_field(a, "$.adam", "beta1", c.beta1);
    c.beta2 = num_field(a, "$.adam", "beta2", c.beta2);
    c.eps = num_field(a, "$.adam", "eps", c.eps);
  }

  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer())
      throw SchemaError("$.seed: expected an integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }

  if (j.contains("task")) {
    const auto& t = j["task"];
    if (!t.is_object()) throw SchemaError("$.task: expected an object");
    detail::reject_unknown_keys(
        t, "$.task",
        {"kind", "iterations", "snapshot_every", "views", "init"});
    c.task.kind = str_field(t, "$.task", "kind", c.task.kind);
    task_kind_from_string(c.task.kind);  // validate early
    c.task.iterations = int_field(t, "$.task", "iterations", c.task.iterations);
    c.task.snapshot_every =
        int_field(t, "$.task", "snapshot_every", c.task.snapshot_every);
    c.task.views = int_field(t, "$.task", "views", c.task.views);
    if (c.task.iterations < 1)
      throw SchemaError("$.task.iterations: must be at least 1");
    if (c.task.views < 1) throw SchemaError("$.task.views: must be at least 1");
    if (t.contains("init")) {
      const auto& in = t["init"];
      if (!in.is_object()) throw SchemaError("$.task.init: expected an object");
      detail::reject_unknown_keys(
          in, "$.task.init",
          {"vertex_noise", "sphere_level", "sphere_radius", "color_value",
           "texture_value", "uv_noise", "eye_offset", "sh", "k_d", "k_s",
           "shininess"});
      c.task.vertex_noise =
          detail::num_field(in, "$.task.init", "vertex_noise", c.task.vertex_noise);
      c.task.init_sphere_level =
          int_field(in, "$.task.init", "sphere_level", c.task.init_sphere_level);
      c.task.init_sphere_radius = detail::num_field(
          in, "$.task.init", "sphere_radius", c.task.init_sphere_radius);
      c.task.color_value =
          detail::num_field(in, "$.task.init", "color_value", c.task.color_value);
      c.task.texture_value = detail::num_field(in, "$.task.init", "texture_value",
                                               c.task.texture_value);
      c.task.uv_noise =
          detail::num_field(in, "$.task.init", "uv_noise", c.task.uv_noise);
      if (in.contains("eye_offset"))
        c.task.eye_offset =
            detail::vec_field<3>(in, "$.task.init", "eye_offset", {0, 0, 0});
      if (in.contains("sh")) {
        const auto sh = detail::vec_field<9>(in, "$.task.init", "sh", {});
        c.task.sh_init.assign(sh.begin(), sh.end());
      }
      c.task.kd_init = detail::num_field(in, "$.task.init", "k_d", c.task.kd_init);
      c.task.ks_init = detail::num_field(in, "$.task.init", "k_s", c.task.ks_init);
      c.task.shininess_init =
          detail::num_field(in, "$.task.init", "shininess", c.task.shininess_init);
    }
  }

  if (j.contains("gradcheck")) {
    const auto& g = j["gradcheck"];
    if (!g.is_object()) throw SchemaError("$.gradcheck: expected an object");
    detail::reject_unknown_keys(g, "$.gradcheck", {"samples", "h", "tolerance"});
    c.gradcheck.samples = int_field(g, "$.gradcheck", "samples", c.gradcheck.samples);
    c.gradcheck.h = num_field(g, "$.gradcheck", "h", c.gradcheck.h);
    c.gradcheck.tolerance =
        num_field(g, "$.gradcheck", "tolerance", c.gradcheck.tolerance);
  }
  return c;
}

inline SceneConfig parse_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("parse_scene: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("parse_scene: " + path + ": " + e.what());
  }
  return parse_scene_json(j);
}

// Serializes the fully-resolved configuration so every artifact is
// self-describing.
inline nlohmann::json config_to_json(const SceneConfig& c) {
  nlohmann::json j;
  j["mesh"] = c.mesh;
  j["mesh_scale"] = c.mesh_scale;
  j["base"] = c.base;
  j["texture"] = {{"path", c.texture_path},
                  {"size", c.texture_size},
                  {"pattern", c.texture_pattern}};
  j["lighting"] = {{"model", c.lighting},
                   {"k_d", c.k_d},
                   {"k_s", c.k_s},
                   {"shininess", c.shininess},
                   {"light_dir", c.light_dir},
                   {"sh_coeffs", c.sh_coeffs}};
  j["camera"] = {{"eye", c.camera.eye},     {"center", c.camera.center},
                 {"up", c.camera.up},       {"fov_y_deg", c.camera.fov_y_deg},
                 {"aspect", c.camera.aspect}, {"near", c.camera.near},
                 {"far", c.camera.far}};
  j["soft"] = {{"delta", c.delta}, {"cutoff", c.cutoff}};
  j["resolution"] = {c.width, c.height};
  j["loss_weights"] = {{"col", c.lambda_col}, {"sm", c.lambda_sm}, {"lap", c.lambda_lap}};
  j["adam"] = {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
  j["seed"] = c.seed;
  j["task"] = {{"kind", c.task.kind},
               {"iterations", c.task.iterations},
               {"snapshot_every", c.task.snapshot_every},
               {"views", c.task.views}};
  j["gradcheck"] = {{"samples", c.gradcheck.samples},
                    {"h", c.gradcheck.h},
                    {"tolerance", c.gradcheck.tolerance}};
  return j;
}

namespace detail {

template <typename T>
Image<T> generate_texture(const std::string& pattern, int size) {
  Image<T> tex(size, size, 3);
  if (pattern == "checker") {
    const int block = std::max(1, size / 8);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const bool on = ((x / block) + (y / block)) % 2 == 0;
        tex.at(y, x, 0) = on ? T(0.9) : T(0.15);
        tex.at(y, x, 1) = on ? T(0.6) : T(0.3);
        tex.at(y, x, 2) = on ? T(0.2) : T(0.75);
      }
  } else {  // gradient
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        tex.at(y, x, 0) = T(x) / T(size - 1 > 0 ? size - 1 : 1);
        tex.at(y, x, 1) = T(y) / T(size - 1 > 0 ? size - 1 : 1);
        tex.at(y, x, 2) = T(0.5);
      }
  }
  return tex;
}

// Latitude/longitude unwrap; the seam duplicates are acceptable for the
// sanity tasks because targets and predictions share the same mapping.
template <typename T>
std::vector<Vec2<T>> spherical_uvs(const std::vector<Vec3<T>>& vertices) {
  std::vector<Vec2<T>> uvs(vertices.size());
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const Vec3<T>& p = vertices[i];
    const T r = std::max(norm(p), T(1e-12));
    const T u = std::atan2(p.x, p.z) / T(2 * 3.14159265358979323846) + T(0.5);
    const T v = T(0.5) - std::asin(std::clamp(p.y / r, T(-1), T(1))) /
                             T(3.14159265358979323846);
    uvs[i] = {std::clamp(u, T(0), T(1)), std::clamp(v, T(0), T(1))};
  }
  return uvs;
}

template <typename T>
std::vector<Vec3<T>> position_colors(const std::vector<Vec3<T>>& vertices) {
  T radius = T(0);
  for (const auto& v : vertices) radius = std::max(radius, norm(v));
  if (radius <= T(0)) radius = T(1);
  std::vector<Vec3<T>> colors(vertices.size());
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const Vec3<T> n = vertices[i] / radius;
    colors[i] = {std::clamp((n.x + T(1)) / T(2), T(0), T(1)),
                 std::clamp((n.y + T(1)) / T(2), T(0), T(1)),
                 std::clamp((n.z + T(1)) / T(2), T(0), T(1))};
  }
  return colors;
}

}  // namespace detail

template <typename T>
Scene<T> build_scene(const SceneConfig& c) {
  Scene<T> scene;

  // Geometry.
  if (c.mesh.rfind("icosphere:", 0) == 0) {
    int level;
    try {
      level = std::stoi(c.mesh.substr(10));
    } catch (...) {
      throw SchemaError("$.mesh: bad template '" + c.mesh + "'");
    }
    scene.mesh = unit_sphere<T>(level);
  } else {
    scene.mesh = load_obj<T>(c.mesh);
  }
  for (auto& v : scene.mesh.vertices) {
    v.x *= T(c.mesh_scale[0]);
    v.y *= T(c.mesh_scale[1]);
    v.z *= T(c.mesh_scale[2]);
  }

  // Base color model.
  if (c.base == "vertex_colors") {
    scene.base = BaseColorModel::VertexColors;
    if (!scene.mesh.has_colors())
      scene.mesh.colors = detail::position_colors(scene.mesh.vertices);
  } else {
    scene.base = BaseColorModel::Texture;
    if (!scene.mesh.has_uvs())
      scene.mesh.uvs = detail::spherical_uvs(scene.mesh.vertices);
    if (!c.texture_path.empty()) {
      Image<T> tex = load_png<T>(c.texture_path);
      if (tex.channels == 4) {
        Image<T> rgb(tex.height, tex.width, 3);
        for (int y = 0; y < tex.height; ++y)
          for (int x = 0; x < tex.width; ++x)
            for (int ch = 0; ch < 3; ++ch) rgb.at(y, x, ch) = tex.at(y, x, ch);
        tex = std::move(rgb);
      }
      scene.texture = std::move(tex);
    } else {
      scene.texture = detail::generate_texture<T>(c.texture_pattern, c.texture_size);
    }
  }

  // Lighting.
  if (c.lighting == "none") {
    scene.lighting = NoneLighting{};
  } else if (c.lighting == "lambertian") {
    Lambertian<T> lam;
    lam.k_d = T(c.k_d);
    lam.light_dir = normalized(Vec3<T>{T(c.light_dir[0]), T(c.light_dir[1]),
                                       T(c.light_dir[2])});
    scene.lighting = lam;
  } else if (c.lighting == "phong") {
    Phong<T> ph;
    ph.k_d = T(c.k_d);
    ph.k_s = T(c.k_s);
    ph.shininess = T(c.shininess);
    ph.light_dir = normalized(Vec3<T>{T(c.light_dir[0]), T(c.light_dir[1]),
                                      T(c.light_dir[2])});
    scene.lighting = ph;
  } else {
    SphericalHarmonics<T> sh;
    for (int i = 0; i < 9; ++i) sh.coeffs[i] = T(c.sh_coeffs[i]);
    scene.lighting = sh;
  }

  // Camera.
  scene.camera.eye = {T(c.camera.eye[0]), T(c.camera.eye[1]), T(c.camera.eye[2])};
  scene.camera.center = {T(c.camera.center[0]), T(c.camera.center[1]),
                         T(c.camera.center[2])};
  scene.camera.up = {T(c.camera.up[0]), T(c.camera.up[1]), T(c.camera.up[2])};
  scene.camera.fov_y = T(c.camera.fov_y_deg * 3.14159265358979323846 / 180.0);
  scene.camera.aspect = T(c.camera.aspect);
  scene.camera.near = T(c.camera.near);
  scene.camera.far = T(c.camera.far);
  scene.camera.validate();
  return scene;
}

// Builds the self-supervised round trip for the configured task: the config
// describes the ground-truth scene, the initial scene applies the task's
// perturbation recipe.
template <typename T>
TaskSetup<T> make_task_setup(const SceneConfig& c) {
  TaskSetup<T> setup;
  setup.kind = task_kind_from_string(c.task.kind);
  setup.target = build_scene<T>(c);
  setup.initial = setup.target;
  setup.soft.delta = T(c.delta);
  setup.soft.cutoff_eps = T(c.cutoff);
  setup.width = c.width;
  setup.height = c.height;
  setup.weights.col = T(c.lambda_col);
  setup.weights.sm = T(c.lambda_sm);
  setup.weights.lap = T(c.lambda_lap);
  setup.adam.lr = T(c.lr);
  setup.adam.beta1 = T(c.beta1);
  setup.adam.beta2 = T(c.beta2);
  setup.adam.eps = T(c.eps);
  setup.iterations = c.task.iterations;
  setup.snapshot_every = c.task.snapshot_every;
  setup.views = c.task.views;
  setup.seed = c.seed;

  Rng rng(c.seed + 1);
  T radius = T(0);
  for (const auto& v : setup.target.mesh.vertices)
    radius = std::max(radius, norm(v));
  if (radius <= T(0)) radius = T(1);

  switch (setup.kind) {
    case TaskKind::VertexGeometry: {
      // Start from a round sphere; the silhouette pulls it to the target.
      int level = c.task.init_sphere_level;
      if (level < 0) {
        level = 2;
        if (c.mesh.rfind("icosphere:", 0) == 0) level = std::stoi(c.mesh.substr(10));
      }
      T r0 = T(c.task.init_sphere_radius);
      if (!(r0 > T(0))) {
        T sum = T(0);
        for (const auto& v : setup.target.mesh.vertices) sum += norm(v);
        r0 = sum / T(setup.target.mesh.vertices.size());
      }
      Mesh<T> sphere = unit_sphere<T>(level);
      for (auto& v : sphere.vertices) v *= r0;
      sphere.colors = detail::position_colors(sphere.vertices);
      setup.initial.mesh = std::move(sphere);
      // Silhouette-driven task: the color term is off.
      setup.weights.col = T(0);
      break;
    }
    case TaskKind::VertexColor: {
      const T value = c.task.color_value >= 0 ? T(c.task.color_value) : T(0.5);
      for (auto& col : setup.initial.mesh.colors) col = {value, value, value};
      break;
    }
    case TaskKind::TextureRecovery: {
      const T value = c.task.texture_value >= 0 ? T(c.task.texture_value) : T(0.5);
      setup.initial.texture.fill(value);
      break;
    }
    case TaskKind::TexCoordRecovery: {
      const T noise = c.task.uv_noise >= 0 ? T(c.task.uv_noise) : T(0.05);
      for (auto& uv : setup.initial.mesh.uvs) {
        uv.x = std::clamp(uv.x + T(rng.uniform(-1.0, 1.0)) * noise, T(0), T(1));
        uv.y = std::clamp(uv.y + T(rng.uniform(-1.0, 1.0)) * noise, T(0), T(1));
      }
      break;
    }
    case TaskKind::VertexLambertian: {
      const T noise =
          c.task.vertex_noise >= 0 ? T(c.task.vertex_noise) : T(0.05) * radius;
      for (auto& v : setup.initial.mesh.vertices) {
        v.x += T(rng.normal()) * noise;
        v.y += T(rng.normal()) * noise;
        v.z += T(rng.normal()) * noise;
      }
      break;
    }
    case TaskKind::CameraEyeRecovery: {
      const std::array<double, 3> off =
          c.task.eye_offset.value_or(std::array<double, 3>{0.25, 0.18, -0.2});
      setup.initial.camera.eye += Vec3<T>{T(off[0]), T(off[1]), T(off[2])};
      break;
    }
    case TaskKind::ShRecovery: {
      auto* sh = std::get_if<SphericalHarmonics<T>>(&setup.initial.lighting);
      if (!sh)
        throw SchemaError("task 'sh_lighting' needs spherical-harmonics lighting");
      if (!c.task.sh_init.empty()) {
        for (int i = 0; i < 9; ++i) sh->coeffs[i] = T(c.task.sh_init[i]);
      } else {
        sh->coeffs = {T(1.7724538509055159), 0, 0, 0, 0, 0, 0, 0, 0};
      }
      break;
    }
    case TaskKind::PhongMaterial: {
      auto* ph = std::get_if<Phong<T>>(&setup.initial.lighting);
      if (!ph) throw SchemaError("task 'phong_material' needs phong lighting");
      ph->k_d = c.task.kd_init >= 0 ? T(c.task.kd_init) : T(0.6);
      ph->k_s = c.task.ks_init >= 0 ? T(c.task.ks_init) : T(0.1);
      ph->shininess =
          c.task.shininess_init >= 0 ? T(c.task.shininess_init) : T(4);
      break;
    }
  }
  return setup;
}

}  // namespace diffraster
