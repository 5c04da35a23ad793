#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "diffraster/adam.hpp"
#include "diffraster/errors.hpp"
#include "diffraster/losses.hpp"
#include "diffraster/rng.hpp"
#include "diffraster/scene.hpp"

namespace diffraster {

// ---------------------------------------------------------------------------
// Flat parameter-group access
// ---------------------------------------------------------------------------

enum class GroupKind {
  VertexPositions,
  VertexColors,
  Uvs,
  Texture,
  Light,  // variant-dependent: [k_d, (k_s, shininess,) dir] or 9 SH coeffs
  CameraEye,
};

inline ParamFlags flags_for_group(GroupKind g) {
  ParamFlags f;
  switch (g) {
    case GroupKind::VertexPositions: f.vertex_positions = true; break;
    case GroupKind::VertexColors: f.vertex_colors = true; break;
    case GroupKind::Uvs: f.uvs = true; break;
    case GroupKind::Texture: f.texture = true; break;
    case GroupKind::Light: f.light = true; break;
    case GroupKind::CameraEye: f.camera_eye = true; break;
  }
  return f;
}

template <typename T>
std::vector<T> get_group(const Scene<T>& scene, GroupKind g) {
  std::vector<T> out;
  switch (g) {
    case GroupKind::VertexPositions:
      for (const auto& v : scene.mesh.vertices) {
        out.push_back(v.x);
        out.push_back(v.y);
        out.push_back(v.z);
      }
      break;
    case GroupKind::VertexColors:
      for (const auto& c : scene.mesh.colors) {
        out.push_back(c.x);
        out.push_back(c.y);
        out.push_back(c.z);
      }
      break;
    case GroupKind::Uvs:
      for (const auto& uv : scene.mesh.uvs) {
        out.push_back(uv.x);
        out.push_back(uv.y);
      }
      break;
    case GroupKind::Texture:
      out = scene.texture.data;
      break;
    case GroupKind::Light:
      if (const auto* lam = std::get_if<Lambertian<T>>(&scene.lighting)) {
        out = {lam->k_d, lam->light_dir.x, lam->light_dir.y, lam->light_dir.z};
      } else if (const auto* ph = std::get_if<Phong<T>>(&scene.lighting)) {
        out = {ph->k_d,         ph->k_s,         ph->shininess,
               ph->light_dir.x, ph->light_dir.y, ph->light_dir.z};
      } else if (const auto* sh = std::get_if<SphericalHarmonics<T>>(&scene.lighting)) {
        out.assign(sh->coeffs.begin(), sh->coeffs.end());
      } else {
        throw WrongSpecVariant("get_group: scene has no lighting parameters");
      }
      break;
    case GroupKind::CameraEye:
      out = {scene.camera.eye.x, scene.camera.eye.y, scene.camera.eye.z};
      break;
  }
  return out;
}

template <typename T>
void set_group(Scene<T>& scene, GroupKind g, std::span<const T> values) {
  const auto expect = [&](std::size_t n) {
    if (values.size() != n)
      throw ShapeMismatch("set_group: expected " + std::to_string(n) +
                          " values, got " + std::to_string(values.size()));
  };
  switch (g) {
    case GroupKind::VertexPositions:
      expect(scene.mesh.vertices.size() * 3);
      for (std::size_t v = 0; v < scene.mesh.vertices.size(); ++v)
        scene.mesh.vertices[v] = {values[3 * v], values[3 * v + 1], values[3 * v + 2]};
      break;
    case GroupKind::VertexColors:
      expect(scene.mesh.colors.size() * 3);
      for (std::size_t v = 0; v < scene.mesh.colors.size(); ++v)
        scene.mesh.colors[v] = {values[3 * v], values[3 * v + 1], values[3 * v + 2]};
      break;
    case GroupKind::Uvs:
      expect(scene.mesh.uvs.size() * 2);
      for (std::size_t v = 0; v < scene.mesh.uvs.size(); ++v)
        scene.mesh.uvs[v] = {values[2 * v], values[2 * v + 1]};
      break;
    case GroupKind::Texture:
      expect(scene.texture.data.size());
      std::copy(values.begin(), values.end(), scene.texture.data.begin());
      break;
    case GroupKind::Light:
      if (auto* lam = std::get_if<Lambertian<T>>(&scene.lighting)) {
        expect(4);
        lam->k_d = values[0];
        lam->light_dir = {values[1], values[2], values[3]};
      } else if (auto* ph = std::get_if<Phong<T>>(&scene.lighting)) {
        expect(6);
        ph->k_d = values[0];
        ph->k_s = values[1];
        ph->shininess = values[2];
        ph->light_dir = {values[3], values[4], values[5]};
      } else if (auto* sh = std::get_if<SphericalHarmonics<T>>(&scene.lighting)) {
        expect(9);
        std::copy(values.begin(), values.end(), sh->coeffs.begin());
      } else {
        throw WrongSpecVariant("set_group: scene has no lighting parameters");
      }
      break;
    case GroupKind::CameraEye:
      expect(3);
      scene.camera.eye = {values[0], values[1], values[2]};
      break;
  }
}

template <typename T>
std::vector<T> flatten_group_grads(const GradientSet<T>& grads, GroupKind g) {
  std::vector<T> out;
  const auto missing = [] {
    return TapeMismatch("flatten_group_grads: group was not enabled");
  };
  switch (g) {
    case GroupKind::VertexPositions: {
      if (!grads.vertices) throw missing();
      for (const auto& v : *grads.vertices) {
        out.push_back(v.x);
        out.push_back(v.y);
        out.push_back(v.z);
      }
      break;
    }
    case GroupKind::VertexColors: {
      if (!grads.colors) throw missing();
      for (const auto& c : *grads.colors) {
        out.push_back(c.x);
        out.push_back(c.y);
        out.push_back(c.z);
      }
      break;
    }
    case GroupKind::Uvs: {
      if (!grads.uvs) throw missing();
      for (const auto& uv : *grads.uvs) {
        out.push_back(uv.x);
        out.push_back(uv.y);
      }
      break;
    }
    case GroupKind::Texture: {
      if (!grads.texels) throw missing();
      out = grads.texels->data;
      break;
    }
    case GroupKind::Light:
      // The flat layout depends on the lighting variant; use the scene-aware
      // overload below.
      throw TapeMismatch("flatten_group_grads: light needs the scene overload");
    case GroupKind::CameraEye: {
      if (!grads.eye) throw missing();
      out = {grads.eye->x, grads.eye->y, grads.eye->z};
      break;
    }
  }
  return out;
}

// Scene-aware variant: resolves the light layout from the active variant.
template <typename T>
std::vector<T> flatten_group_grads(const GradientSet<T>& grads,
                                   const Scene<T>& scene, GroupKind g) {
  if (g != GroupKind::Light) return flatten_group_grads(grads, g);
  if (!grads.light) throw TapeMismatch("flatten_group_grads: light not enabled");
  const LightGrads<T>& lg = *grads.light;
  if (std::holds_alternative<Lambertian<T>>(scene.lighting))
    return {lg.k_d, lg.light_dir.x, lg.light_dir.y, lg.light_dir.z};
  if (std::holds_alternative<Phong<T>>(scene.lighting))
    return {lg.k_d,          lg.k_s,          lg.shininess,
            lg.light_dir.x, lg.light_dir.y, lg.light_dir.z};
  if (std::holds_alternative<SphericalHarmonics<T>>(scene.lighting))
    return std::vector<T>(lg.sh.begin(), lg.sh.end());
  throw WrongSpecVariant("flatten_group_grads: scene has no lighting parameters");
}

// Re-establish parameter invariants after a gradient step: unit light
// direction, non-negative reflectances, shininess >= 1, colors in [0,1].
template <typename T>
void project_constraints(Scene<T>& scene) {
  if (auto* lam = std::get_if<Lambertian<T>>(&scene.lighting)) {
    lam->light_dir = normalized(lam->light_dir);
    lam->k_d = std::max(T(0), lam->k_d);
  } else if (auto* ph = std::get_if<Phong<T>>(&scene.lighting)) {
    ph->light_dir = normalized(ph->light_dir);
    ph->k_d = std::max(T(0), ph->k_d);
    ph->k_s = std::max(T(0), ph->k_s);
    ph->shininess = std::max(T(1), ph->shininess);
  }
  for (auto& c : scene.mesh.colors) {
    c.x = std::clamp(c.x, T(0), T(1));
    c.y = std::clamp(c.y, T(0), T(1));
    c.z = std::clamp(c.z, T(0), T(1));
  }
  for (auto& uv : scene.mesh.uvs) {
    uv.x = std::clamp(uv.x, T(0), T(1));
    uv.y = std::clamp(uv.y, T(0), T(1));
  }
  for (auto& t : scene.texture.data) t = std::clamp(t, T(0), T(1));
}

// ---------------------------------------------------------------------------
// Combined loss evaluation over one or more views
// ---------------------------------------------------------------------------

template <typename T>
struct TargetImages {
  Image<T> color;  // H x W x 3
  Image<T> alpha;  // H x W x 1
};

template <typename T>
struct LossEval {
  LossReport<T> report;
  GradientSet<T> grads;
  std::vector<std::int32_t> view0_face_id;
  RenderOutput<T> view0;
};

namespace detail {

template <typename T>
void accumulate_grads(GradientSet<T>& acc, const GradientSet<T>& g) {
  auto add_vecs = [](auto& dst, const auto& src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  };
  if (g.vertices) {
    if (!acc.vertices) acc.vertices = std::vector<Vec3<T>>(g.vertices->size());
    add_vecs(*acc.vertices, *g.vertices);
  }
  if (g.colors) {
    if (!acc.colors) acc.colors = std::vector<Vec3<T>>(g.colors->size());
    add_vecs(*acc.colors, *g.colors);
  }
  if (g.uvs) {
    if (!acc.uvs) acc.uvs = std::vector<Vec2<T>>(g.uvs->size());
    add_vecs(*acc.uvs, *g.uvs);
  }
  if (g.texels) {
    if (!acc.texels)
      acc.texels = Image<T>(g.texels->height, g.texels->width, g.texels->channels);
    for (std::size_t i = 0; i < g.texels->data.size(); ++i)
      acc.texels->data[i] += g.texels->data[i];
  }
  if (g.light) {
    if (!acc.light) acc.light = LightGrads<T>{};
    acc.light->k_d += g.light->k_d;
    acc.light->k_s += g.light->k_s;
    acc.light->shininess += g.light->shininess;
    acc.light->light_dir += g.light->light_dir;
    for (int i = 0; i < 9; ++i) acc.light->sh[i] += g.light->sh[i];
  }
  if (g.eye) {
    if (!acc.eye) acc.eye = Vec3<T>{};
    *acc.eye += *g.eye;
  }
}

}  // namespace detail

// Renders the scene from each camera, compares against the paired targets
// with the IOU + weighted L1 objective, adds the mesh regularizers, and (when
// requested) back-propagates the combined gradient for the enabled groups.
// Image losses are averaged over views; regularizers enter once.
template <typename T>
LossEval<T> evaluate_loss(const Scene<T>& scene,
                          const std::vector<Camera<T>>& cameras,
                          const std::vector<TargetImages<T>>& targets,
                          const SoftConfig<T>& soft, int width, int height,
                          const LossWeights<T>& weights, const ParamFlags& flags,
                          bool want_grads, int workers = 1) {
  if (cameras.empty() || cameras.size() != targets.size())
    throw ShapeMismatch("evaluate_loss: cameras/targets mismatch");
  const T inv_views = T(1) / T(cameras.size());

  LossEval<T> eval;
  LossComponents<T> parts;
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    auto [out, tapes] = forward_render(scene, cameras[v], soft, width, height, workers);
    auto [iou, g_alpha] = iou_loss(targets[v].alpha, out.alpha);
    auto [col, g_color] = l1_loss(targets[v].color, out.color);
    parts.iou += iou * inv_views;
    parts.col += col * inv_views;
    if (want_grads && flags.any()) {
      for (auto& g : g_alpha.data) g *= inv_views;
      for (auto& g : g_color.data) g *= weights.col * inv_views;
      detail::accumulate_grads(eval.grads,
                               backward_render(g_color, g_alpha, tapes, flags, workers));
    }
    if (v == 0) {
      eval.view0_face_id = out.frame.face_id;
      eval.view0 = std::move(out);
    }
  }

  const Adjacency adj = adjacency(scene.mesh);
  auto [sm, g_sm] = smoothness_loss(scene.mesh, adj);
  auto [lap, g_lap] = laplacian_loss(scene.mesh, adj);
  parts.sm = sm;
  parts.lap = lap;
  if (want_grads && flags.vertex_positions) {
    if (!eval.grads.vertices)
      eval.grads.vertices = std::vector<Vec3<T>>(scene.mesh.vertices.size());
    for (std::size_t i = 0; i < g_sm.size(); ++i)
      (*eval.grads.vertices)[i] += g_sm[i] * weights.sm + g_lap[i] * weights.lap;
  }
  eval.report = combined_loss(parts, weights);
  return eval;
}

// ---------------------------------------------------------------------------
// Task runner
// ---------------------------------------------------------------------------

enum class TaskKind {
  VertexGeometry,    // (a) positions from silhouettes
  VertexColor,       // (b) per-vertex colors
  TextureRecovery,   // (c) texels
  TexCoordRecovery,  // (d) uv coordinates
  VertexLambertian,  // (e) positions under Lambertian shading
  CameraEyeRecovery, // (f) camera position
  ShRecovery,        // (g) spherical-harmonics coefficients
  PhongMaterial,     // (h) Phong material constants; known-weak
};

inline GroupKind group_for_task(TaskKind kind) {
  switch (kind) {
    case TaskKind::VertexGeometry:
    case TaskKind::VertexLambertian: return GroupKind::VertexPositions;
    case TaskKind::VertexColor: return GroupKind::VertexColors;
    case TaskKind::TextureRecovery: return GroupKind::Texture;
    case TaskKind::TexCoordRecovery: return GroupKind::Uvs;
    case TaskKind::CameraEyeRecovery: return GroupKind::CameraEye;
    case TaskKind::ShRecovery:
    case TaskKind::PhongMaterial: return GroupKind::Light;
  }
  return GroupKind::VertexPositions;
}

template <typename T>
struct TaskSetup {
  TaskKind kind = TaskKind::VertexColor;
  Scene<T> target;   // ground truth; supplies the supervision images
  Scene<T> initial;  // perturbed start
  SoftConfig<T> soft;
  int width = 64, height = 64;
  LossWeights<T> weights;
  AdamConfig<T> adam;
  int iterations = 500;
  int snapshot_every = 0;  // 0 disables snapshots
  int views = 1;
  std::uint64_t seed = 0;
};

template <typename T>
struct OptimizationReport {
  std::vector<LossReport<T>> series;  // one entry per iteration, pre-update
  double wall_seconds = 0;
  Scene<T> final_scene;
};

// Secondary supervision views are drawn uniformly over azimuth at the primary
// camera's elevation and radius.
template <typename T>
Camera<T> camera_at_azimuth(const Camera<T>& base, T azimuth) {
  const Vec3<T> rel = base.eye - base.center;
  const T radius = norm(rel);
  const T elevation = std::asin(std::clamp(rel.y / radius, T(-1), T(1)));
  Camera<T> cam = base;
  cam.eye = base.center +
            Vec3<T>{radius * std::cos(elevation) * std::sin(azimuth),
                    radius * std::sin(elevation),
                    radius * std::cos(elevation) * std::cos(azimuth)};
  return cam;
}

template <typename T>
using SnapshotFn =
    std::function<void(int iteration, const Scene<T>&, const RenderOutput<T>&)>;

// Self-supervised round trip: targets are rendered from the ground-truth
// scene (view 0 once, every random extra view per iteration), the initial
// scene descends on the combined loss with Adam.
template <typename T>
OptimizationReport<T> run_task(const TaskSetup<T>& setup, int workers = 1,
                               const SnapshotFn<T>& on_snapshot = {}) {
  const auto t_start = std::chrono::steady_clock::now();
  const GroupKind group = group_for_task(setup.kind);
  const ParamFlags flags = flags_for_group(group);

  Scene<T> scene = setup.initial;
  Rng rng(setup.seed);

  // Fixed primary target.
  std::vector<Camera<T>> cameras{setup.target.camera};
  std::vector<TargetImages<T>> targets;
  {
    auto [out, tapes] = forward_render(setup.target, setup.target.camera,
                                       setup.soft, setup.width, setup.height, workers);
    (void)tapes;
    targets.push_back(TargetImages<T>{std::move(out.color), std::move(out.alpha)});
  }

  std::vector<T> params = get_group(scene, group);
  AdamState<T> state(params.size(), setup.adam);

  OptimizationReport<T> report;
  report.series.reserve(setup.iterations);

  for (int iter = 0; iter < setup.iterations; ++iter) {
    cameras.resize(1);
    targets.resize(1);
    for (int v = 1; v < setup.views; ++v) {
      const T azimuth = T(rng.uniform(0.0, 2.0 * 3.14159265358979323846));
      Camera<T> cam = camera_at_azimuth(setup.target.camera, azimuth);
      auto [out, tapes] = forward_render(setup.target, cam, setup.soft,
                                         setup.width, setup.height, workers);
      (void)tapes;
      cameras.push_back(cam);
      targets.push_back(TargetImages<T>{std::move(out.color), std::move(out.alpha)});
      // The predicted scene renders with its own camera only for the camera
      // task; extra views supervise through the same camera as the target.
    }

    LossEval<T> eval;
    try {
      // For the camera task the prediction's own camera must be used for the
      // primary view; extra views would not make sense there (views = 1).
      std::vector<Camera<T>> pred_cams = cameras;
      if (setup.kind == TaskKind::CameraEyeRecovery) pred_cams[0] = scene.camera;
      eval = evaluate_loss(scene, pred_cams, targets, setup.soft, setup.width,
                           setup.height, setup.weights, flags, true, workers);
    } catch (const NonFiniteComponent& e) {
      if (on_snapshot) {
        auto [out, tapes] = forward_render(scene, setup.soft, setup.width,
                                           setup.height, workers);
        (void)tapes;
        on_snapshot(iter, scene, out);
      }
      throw NonFiniteLoss(std::string("run_task: ") + e.what());
    }
    report.series.push_back(eval.report);

    std::vector<T> grads = flatten_group_grads(eval.grads, scene, group);
    adam_step(std::span<T>(params), std::span<const T>(grads), state);
    set_group(scene, group, std::span<const T>(params));
    project_constraints(scene);
    // Projection may clamp; keep the optimizer state aligned with the stored
    // values so moments do not fight the constraint set.
    params = get_group(scene, group);

    if (setup.snapshot_every > 0 && on_snapshot &&
        ((iter + 1) % setup.snapshot_every == 0 || iter + 1 == setup.iterations)) {
      on_snapshot(iter + 1, scene, eval.view0);
    }
  }

  report.final_scene = std::move(scene);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

template <typename T>
struct GradcheckOptions {
  int samples = 100;
  T h = T(1e-4);
  T tolerance = T(1e-3);
  T abs_floor = T(1e-8);
  std::uint64_t seed = 0;
};

template <typename T>
struct GradcheckSample {
  std::size_t coord = 0;
  T analytic = T(0);
  T numeric = T(0);
  bool skipped = false;  // perturbation flipped pixel coverage or winner
  bool passed = false;
};

template <typename T>
struct GradcheckReport {
  std::string group;
  int total = 0, skipped = 0, passed = 0, failed = 0;
  std::vector<GradcheckSample<T>> samples;
  std::string precondition_error;

  bool ok() const { return precondition_error.empty() && failed == 0; }
  double pass_rate() const {
    const int checked = total - skipped;
    return checked > 0 ? static_cast<double>(passed) / checked : 1.0;
  }
};

// Maps gradcheck group names onto a base group plus a coordinate subset.
template <typename T>
std::pair<GroupKind, std::vector<std::size_t>> resolve_check_group(
    const Scene<T>& scene, const std::string& name) {
  auto all = [&](GroupKind g) {
    const std::size_t n = get_group(scene, g).size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return std::make_pair(g, std::move(idx));
  };
  if (name == "vertex_positions") return all(GroupKind::VertexPositions);
  if (name == "vertex_colors") return all(GroupKind::VertexColors);
  if (name == "uvs") return all(GroupKind::Uvs);
  if (name == "texture") return all(GroupKind::Texture);
  if (name == "camera_eye") return all(GroupKind::CameraEye);
  if (name == "light") return all(GroupKind::Light);
  if (name == "sh_coeffs") {
    if (!std::holds_alternative<SphericalHarmonics<T>>(scene.lighting))
      throw WrongSpecVariant("sh_coeffs group needs spherical-harmonics lighting");
    return all(GroupKind::Light);
  }
  if (name == "light_dir") {
    if (std::holds_alternative<Lambertian<T>>(scene.lighting))
      return {GroupKind::Light, {1, 2, 3}};
    if (std::holds_alternative<Phong<T>>(scene.lighting))
      return {GroupKind::Light, {3, 4, 5}};
    throw WrongSpecVariant("light_dir group needs a directional lighting model");
  }
  if (name == "material") {
    if (std::holds_alternative<Lambertian<T>>(scene.lighting))
      return {GroupKind::Light, {0}};
    if (std::holds_alternative<Phong<T>>(scene.lighting))
      return {GroupKind::Light, {0, 1}};
    throw WrongSpecVariant("material group needs Lambertian or Phong lighting");
  }
  throw SchemaError("unknown gradcheck group '" + name + "'");
}

// Central-difference check of the combined-loss gradient for one group.
// Samples whose perturbation changes any pixel's winning face (in either
// direction) are skipped: those cross the rasterization discontinuity where
// no derivative exists.
template <typename T>
GradcheckReport<T> gradcheck(const Scene<T>& scene, const std::string& group_name,
                             const std::vector<TargetImages<T>>& targets,
                             const SoftConfig<T>& soft, int width, int height,
                             const LossWeights<T>& weights,
                             const GradcheckOptions<T>& options, int workers = 1) {
  GradcheckReport<T> report;
  report.group = group_name;
  if (!(options.h > T(0))) {
    report.precondition_error = "step size h must be positive";
    return report;
  }
  const auto [group, coords] = resolve_check_group(scene, group_name);
  const ParamFlags flags = flags_for_group(group);
  const std::vector<Camera<T>> cameras{scene.camera};

  const LossEval<T> base = evaluate_loss(scene, cameras, targets, soft, width,
                                         height, weights, flags, true, workers);
  const std::vector<T> analytic = flatten_group_grads(base.grads, scene, group);

  std::vector<T> params = get_group(scene, group);
  Rng rng(options.seed);

  std::vector<std::size_t> picks;
  if (coords.size() <= static_cast<std::size_t>(options.samples)) {
    picks = coords;
  } else {
    for (int i = 0; i < options.samples; ++i)
      picks.push_back(coords[rng.below(coords.size())]);
  }

  auto loss_at = [&](std::vector<T> p, std::vector<std::int32_t>* face_id) {
    Scene<T> s = scene;
    set_group(s, group, std::span<const T>(p));
    std::vector<Camera<T>> cams = cameras;
    if (group == GroupKind::CameraEye) cams[0] = s.camera;
    const LossEval<T> e = evaluate_loss(s, cams, targets, soft, width, height,
                                        weights, flags, false, workers);
    if (face_id) *face_id = e.view0_face_id;
    return e.report.total;
  };

  for (const std::size_t coord : picks) {
    GradcheckSample<T> sample;
    sample.coord = coord;
    sample.analytic = analytic[coord];

    std::vector<T> plus = params, minus = params;
    plus[coord] += options.h;
    minus[coord] -= options.h;
    std::vector<std::int32_t> fid_plus, fid_minus;
    const T loss_plus = loss_at(plus, &fid_plus);
    const T loss_minus = loss_at(minus, &fid_minus);

    if (fid_plus != base.view0_face_id || fid_minus != base.view0_face_id) {
      sample.skipped = true;
      ++report.skipped;
    } else {
      sample.numeric = (loss_plus - loss_minus) / (T(2) * options.h);
      const T err = std::abs(sample.analytic - sample.numeric);
      const T scale = std::max(std::abs(sample.analytic), std::abs(sample.numeric));
      sample.passed = err <= std::max(options.tolerance * scale, options.abs_floor);
      if (sample.passed)
        ++report.passed;
      else
        ++report.failed;
    }
    ++report.total;
    report.samples.push_back(sample);
  }
  return report;
}

// Jittered copy of a scene: used to manufacture non-trivial gradcheck targets
// from the scene itself.
template <typename T>
Scene<T> jitter_scene(const Scene<T>& scene, std::uint64_t seed) {
  Scene<T> s = scene;
  Rng rng(seed);
  T radius = T(0);
  for (const auto& v : s.mesh.vertices) radius = std::max(radius, norm(v));
  if (radius <= T(0)) radius = T(1);
  for (auto& v : s.mesh.vertices) {
    v.x += T(rng.normal()) * T(0.02) * radius;
    v.y += T(rng.normal()) * T(0.02) * radius;
    v.z += T(rng.normal()) * T(0.02) * radius;
  }
  for (auto& c : s.mesh.colors) {
    c.x = std::clamp(c.x + T(rng.normal()) * T(0.15), T(0), T(1));
    c.y = std::clamp(c.y + T(rng.normal()) * T(0.15), T(0), T(1));
    c.z = std::clamp(c.z + T(rng.normal()) * T(0.15), T(0), T(1));
  }
  for (auto& t : s.texture.data)
    t = std::clamp(t + T(rng.normal()) * T(0.15), T(0), T(1));
  if (auto* lam = std::get_if<Lambertian<T>>(&s.lighting)) {
    lam->light_dir = normalized(lam->light_dir +
                                Vec3<T>{T(rng.normal()), T(rng.normal()),
                                        T(rng.normal())} * T(0.1));
    lam->k_d = std::max(T(0.05), lam->k_d * T(1 + 0.1 * rng.normal()));
  } else if (auto* ph = std::get_if<Phong<T>>(&s.lighting)) {
    ph->light_dir = normalized(ph->light_dir +
                               Vec3<T>{T(rng.normal()), T(rng.normal()),
                                       T(rng.normal())} * T(0.1));
    ph->k_d = std::max(T(0.05), ph->k_d * T(1 + 0.1 * rng.normal()));
    ph->k_s = std::max(T(0.0), ph->k_s * T(1 + 0.1 * rng.normal()));
  } else if (auto* sh = std::get_if<SphericalHarmonics<T>>(&s.lighting)) {
    for (auto& c : sh->coeffs) c += T(rng.normal()) * T(0.1);
  }
  s.camera.eye += Vec3<T>{T(rng.normal()), T(rng.normal()), T(rng.normal())} *
                  (T(0.02) * norm(s.camera.eye - s.camera.center));
  return s;
}

template <typename T>
std::vector<TargetImages<T>> make_gradcheck_targets(const Scene<T>& scene,
                                                    const SoftConfig<T>& soft,
                                                    int width, int height,
                                                    std::uint64_t seed,
                                                    int workers = 1) {
  const Scene<T> jittered = jitter_scene(scene, seed);
  auto [out, tapes] = forward_render(jittered, jittered.camera, soft, width,
                                     height, workers);
  (void)tapes;
  return {TargetImages<T>{std::move(out.color), std::move(out.alpha)}};
}

}  // namespace diffraster
