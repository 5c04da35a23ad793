#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "diffraster/errors.hpp"
#include "diffraster/image.hpp"
#include "diffraster/mesh.hpp"
#include "diffraster/vec.hpp"

namespace diffraster {

template <typename T>
struct LossWeights {
  T col = T(1);
  T sm = T(0.001);
  T lap = T(0.01);
};

template <typename T>
struct LossComponents {
  T iou = T(0), col = T(0), sm = T(0), lap = T(0);
};

template <typename T>
struct LossReport {
  T total = T(0), iou = T(0), col = T(0), sm = T(0), lap = T(0);
};

// Silhouette loss 1 - |S.S~|_1 / |S + S~ - S.S~|_1 with the elementwise
// gradient of the ratio with respect to the prediction.
template <typename T>
std::pair<T, Image<T>> iou_loss(const Image<T>& target, const Image<T>& pred) {
  require_same_shape(target, pred, "iou_loss");
  T inter = T(0), uni = T(0);
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const T s = target.data[i], sp = pred.data[i];
    inter += s * sp;
    uni += s + sp - s * sp;
  }
  if (!(uni > T(0))) throw EmptyUnion("iou_loss: union is empty");
  Image<T> grad(pred.height, pred.width, pred.channels);
  const T inv_u2 = T(1) / (uni * uni);
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const T s = target.data[i];
    grad.data[i] = -(s * uni - inter * (T(1) - s)) * inv_u2;
  }
  return {T(1) - inter / uni, std::move(grad)};
}

// Mean absolute difference; gradient is sign/count, zero at exact ties.
template <typename T>
std::pair<T, Image<T>> l1_loss(const Image<T>& target, const Image<T>& pred) {
  require_same_shape(target, pred, "l1_loss");
  const T inv_count = T(1) / T(pred.data.size());
  T loss = T(0);
  Image<T> grad(pred.height, pred.width, pred.channels);
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const T d = pred.data[i] - target.data[i];
    loss += std::abs(d);
    grad.data[i] = d > T(0) ? inv_count : (d < T(0) ? -inv_count : T(0));
  }
  return {loss * inv_count, std::move(grad)};
}

// Sum over interior edges of (1 - n_a . n_b) between unit face normals.
// Edges touching a degenerate face are skipped; edges shared by more than two
// faces are skipped as non-manifold.
template <typename T>
std::pair<T, std::vector<Vec3<T>>> smoothness_loss(const Mesh<T>& mesh,
                                                   const Adjacency& adj) {
  const auto fn = face_normals(mesh);
  T loss = T(0);
  // Accumulate the adjoint on each face's unit normal, then push through the
  // normalize(cross(..)) chain once per face.
  std::vector<Vec3<T>> g_unit(mesh.faces.size(), Vec3<T>{});
  for (const auto& [edge, face_list] : adj.edge_faces) {
    if (face_list.size() != 2) continue;
    const int fa = face_list[0], fb = face_list[1];
    if (fn.degenerate[fa] || fn.degenerate[fb]) continue;
    loss += T(1) - dot(fn.normals[fa], fn.normals[fb]);
    g_unit[fa] -= fn.normals[fb];
    g_unit[fb] -= fn.normals[fa];
  }
  std::vector<Vec3<T>> grad(mesh.vertices.size(), Vec3<T>{});
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    if (fn.degenerate[f]) continue;
    if (g_unit[f] == Vec3<T>{}) continue;
    const auto& [a, b, c] = mesh.faces[f];
    const Vec3<T> e1 = mesh.vertices[b] - mesh.vertices[a];
    const Vec3<T> e2 = mesh.vertices[c] - mesh.vertices[a];
    const Vec3<T> raw = cross(e1, e2);
    const Vec3<T> g_raw = normalize_backward(raw, g_unit[f]);
    Vec3<T> ge1{}, ge2{};
    cross_backward(e1, e2, g_raw, ge1, ge2);
    grad[b] += ge1;
    grad[c] += ge2;
    grad[a] -= ge1 + ge2;
  }
  return {loss, std::move(grad)};
}

// Uniform-umbrella Laplacian: mean over vertices of |v - mean(N(v))|^2. The
// gradient includes both the center term and each vertex's appearances in its
// neighbors' means.
template <typename T>
std::pair<T, std::vector<Vec3<T>>> laplacian_loss(const Mesh<T>& mesh,
                                                  const Adjacency& adj) {
  const std::size_t nv = mesh.vertices.size();
  if (adj.vertex_neighbors.size() != nv)
    throw ShapeMismatch("laplacian_loss: adjacency from a different mesh");
  for (std::size_t v = 0; v < nv; ++v)
    if (adj.vertex_neighbors[v].empty())
      throw IsolatedVertex("laplacian_loss: vertex " + std::to_string(v) +
                           " has no neighbors");
  const T inv_v = T(1) / T(nv);
  T loss = T(0);
  std::vector<Vec3<T>> grad(nv, Vec3<T>{});
  for (std::size_t v = 0; v < nv; ++v) {
    const auto& nbrs = adj.vertex_neighbors[v];
    Vec3<T> mean{};
    for (const int u : nbrs) mean += mesh.vertices[u];
    mean = mean / T(nbrs.size());
    const Vec3<T> t = mesh.vertices[v] - mean;
    loss += dot(t, t) * inv_v;
    const Vec3<T> g_t = t * (T(2) * inv_v);
    grad[v] += g_t;
    const Vec3<T> g_per_nbr = g_t / T(nbrs.size());
    for (const int u : nbrs) grad[u] -= g_per_nbr;
  }
  return {loss, std::move(grad)};
}

// Weighted combination: total = iou + col*L_col + sm*L_sm + lap*L_lap.
template <typename T>
LossReport<T> combined_loss(const LossComponents<T>& parts,
                            const LossWeights<T>& weights) {
  auto check = [](T v, const char* name) {
    if (!std::isfinite(v))
      throw NonFiniteComponent(std::string("combined_loss: ") + name +
                               " is not finite");
  };
  check(parts.iou, "iou");
  check(parts.col, "col");
  check(parts.sm, "sm");
  check(parts.lap, "lap");
  LossReport<T> r;
  r.iou = parts.iou;
  r.col = parts.col;
  r.sm = parts.sm;
  r.lap = parts.lap;
  r.total = parts.iou + weights.col * parts.col + weights.sm * parts.sm +
            weights.lap * parts.lap;
  return r;
}

}  // namespace diffraster
