#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "diffraster/errors.hpp"
#include "diffraster/mesh.hpp"
#include "diffraster/vec.hpp"

namespace diffraster {

// Look-at pose plus perspective intrinsics. Only the eye position is
// differentiable; center and up are treated as constants.
template <typename T>
struct Camera {
  Vec3<T> eye{T(0), T(0), T(2)};
  Vec3<T> center{T(0), T(0), T(0)};
  Vec3<T> up{T(0), T(1), T(0)};
  T fov_y = T(0.7853981633974483);  // pi/4
  T aspect = T(1);
  T near = T(0.01);
  T far = T(100);

  void validate() const {
    if (!(fov_y > T(0)) || !(fov_y < T(3.14159265358979323846)))
      throw DegenerateCamera("fov_y outside (0, pi)");
    if (!(aspect > T(0))) throw DegenerateCamera("aspect must be positive");
    if (!(near > T(0)) || !(near < far))
      throw DegenerateCamera("require 0 < near < far");
    const Vec3<T> d = center - eye;
    const T dn = norm(d);
    if (dn < T(1e-12)) throw DegenerateCamera("eye coincides with center");
    const T sine = norm(cross(d / dn, normalized(up)));
    if (sine < T(1e-6))
      throw DegenerateCamera("up is parallel to the view direction");
  }
};

// Rigid view transform: maps eye to the origin with the view direction along
// -z, x right, y up.
template <typename T>
Mat4<T> look_at_matrix(const Camera<T>& camera) {
  camera.validate();
  const Vec3<T> f = normalized(camera.center - camera.eye);
  const Vec3<T> s = normalized(cross(f, camera.up));
  const Vec3<T> u = cross(s, f);
  Mat4<T> m = Mat4<T>::identity();
  m.m[0] = {s.x, s.y, s.z, -dot(s, camera.eye)};
  m.m[1] = {u.x, u.y, u.z, -dot(u, camera.eye)};
  m.m[2] = {-f.x, -f.y, -f.z, dot(f, camera.eye)};
  return m;
}

// Perspective projection mapping camera-space z = -near to NDC z = -1 and
// z = -far to NDC z = +1.
template <typename T>
Mat4<T> perspective_matrix(const Camera<T>& camera) {
  const T t = std::tan(camera.fov_y / T(2));
  Mat4<T> m;
  m.m[0][0] = T(1) / (camera.aspect * t);
  m.m[1][1] = T(1) / t;
  m.m[2][2] = -(camera.far + camera.near) / (camera.far - camera.near);
  m.m[2][3] = T(-2) * camera.far * camera.near / (camera.far - camera.near);
  m.m[3][2] = T(-1);
  return m;
}

template <typename T>
struct ScreenVertices {
  std::vector<Vec2<T>> ndc;          // [-1,1]^2 nominal
  std::vector<T> depth;              // camera-space depth, positive in front
  std::vector<T> inv_w;              // reciprocal clip w (= 1/depth)
  std::vector<std::uint8_t> behind;  // depth <= near
  int count() const { return static_cast<int>(ndc.size()); }
};

// Saved forward intermediates for project_backward.
template <typename T>
struct VertexStageTape {
  Camera<T> camera;
  Vec3<T> f, s, u;          // view basis (forward, right, up)
  T d_len{}, s0_len{};      // |center-eye|, |f x up|
  std::vector<Vec3<T>> positions;       // object-space inputs
  std::vector<T> x_cam, y_cam, z_depth;  // camera-space coordinates
  std::vector<std::uint8_t> behind;
  std::uint64_t id = 0;
};

namespace detail {
inline std::uint64_t next_tape_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}
}  // namespace detail

template <typename T>
std::pair<ScreenVertices<T>, VertexStageTape<T>> project_vertices(
    const Mesh<T>& mesh, const Camera<T>& camera) {
  camera.validate();
  const Vec3<T> d = camera.center - camera.eye;
  const T d_len = norm(d);
  const Vec3<T> f = d / d_len;
  const Vec3<T> s0 = cross(f, camera.up);
  const T s0_len = norm(s0);
  const Vec3<T> s = s0 / s0_len;
  const Vec3<T> u = cross(s, f);
  const T t = std::tan(camera.fov_y / T(2));

  const int nv = mesh.vertex_count();
  ScreenVertices<T> sv;
  sv.ndc.resize(nv);
  sv.depth.resize(nv);
  sv.inv_w.resize(nv);
  sv.behind.assign(nv, 0);

  VertexStageTape<T> tape;
  tape.camera = camera;
  tape.f = f;
  tape.s = s;
  tape.u = u;
  tape.d_len = d_len;
  tape.s0_len = s0_len;
  tape.positions = mesh.vertices;
  tape.x_cam.resize(nv);
  tape.y_cam.resize(nv);
  tape.z_depth.resize(nv);
  tape.id = detail::next_tape_id();

  for (int i = 0; i < nv; ++i) {
    const Vec3<T> r = mesh.vertices[i] - camera.eye;
    const T x = dot(s, r);
    const T y = dot(u, r);
    const T depth = dot(f, r);
    tape.x_cam[i] = x;
    tape.y_cam[i] = y;
    tape.z_depth[i] = depth;
    sv.depth[i] = depth;
    if (depth <= camera.near) {
      sv.behind[i] = 1;
      sv.ndc[i] = Vec2<T>{T(0), T(0)};
      sv.inv_w[i] = T(0);
    } else {
      sv.ndc[i] = Vec2<T>{x / (camera.aspect * t * depth), y / (t * depth)};
      sv.inv_w[i] = T(1) / depth;
    }
  }
  tape.behind = sv.behind;
  return {std::move(sv), std::move(tape)};
}

template <typename T>
struct ProjectGrads {
  std::vector<Vec3<T>> vertices;
  Vec3<T> eye{};
};

// Exact reverse-mode derivatives of ndc and depth with respect to every
// vertex position and the camera eye. Behind-flagged vertices pass zero.
template <typename T>
ProjectGrads<T> project_backward(const std::vector<Vec2<T>>& grad_ndc,
                                 const std::vector<T>& grad_depth,
                                 const VertexStageTape<T>& tape) {
  const std::size_t nv = tape.positions.size();
  if (grad_ndc.size() != nv || grad_depth.size() != nv)
    throw TapeMismatch("project_backward: gradient count " +
                       std::to_string(grad_ndc.size()) + " does not match tape (" +
                       std::to_string(nv) + " vertices)");
  const Camera<T>& cam = tape.camera;
  const T t = std::tan(cam.fov_y / T(2));

  ProjectGrads<T> out;
  out.vertices.assign(nv, Vec3<T>{});
  Vec3<T> g_s{}, g_u{}, g_f{};

  for (std::size_t i = 0; i < nv; ++i) {
    if (tape.behind[i]) continue;
    const T depth = tape.z_depth[i];
    const T gx_ndc = grad_ndc[i].x;
    const T gy_ndc = grad_ndc[i].y;
    const T inv_ax = T(1) / (cam.aspect * t * depth);
    const T inv_ty = T(1) / (t * depth);
    // ndc_x = x_cam/(a t depth), ndc_y = y_cam/(t depth), depth passthrough.
    const T g_x = gx_ndc * inv_ax;
    const T g_y = gy_ndc * inv_ty;
    const T g_d = grad_depth[i] - gx_ndc * tape.x_cam[i] * inv_ax / depth -
                  gy_ndc * tape.y_cam[i] * inv_ty / depth;
    if (g_x == T(0) && g_y == T(0) && g_d == T(0)) continue;
    const Vec3<T> r = tape.positions[i] - cam.eye;
    // x = s.r, y = u.r, depth = f.r
    const Vec3<T> g_r = tape.s * g_x + tape.u * g_y + tape.f * g_d;
    out.vertices[i] += g_r;
    out.eye -= g_r;
    g_s += r * g_x;
    g_u += r * g_y;
    g_f += r * g_d;
  }

  // Basis adjoints back to the eye. u = s x f:
  g_s += cross(tape.f, g_u);
  g_f += cross(g_u, tape.s);
  // s = s0/|s0| with s0 = f x up:
  const Vec3<T> g_s0 = (g_s - tape.s * dot(g_s, tape.s)) / tape.s0_len;
  g_f += cross(cam.up, g_s0);
  // f = d/|d| with d = center - eye:
  const Vec3<T> g_d_vec = (g_f - tape.f * dot(g_f, tape.f)) / tape.d_len;
  out.eye -= g_d_vec;
  return out;
}

}  // namespace diffraster
