#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "diffraster/errors.hpp"
#include "diffraster/vec.hpp"

namespace diffraster {

// Triangle mesh in object space. Attribute arrays are either empty or hold
// exactly one entry per vertex. Values are immutable by convention: edits go
// through constructing a new Mesh.
template <typename T>
struct Mesh {
  std::vector<Vec3<T>> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec3<T>> colors;   // RGB in [0,1]
  std::vector<Vec2<T>> uvs;      // in [0,1]^2
  std::vector<Vec3<T>> normals;  // unit vectors

  bool has_colors() const { return !colors.empty(); }
  bool has_uvs() const { return !uvs.empty(); }
  bool has_normals() const { return !normals.empty(); }
  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }
};

template <typename T>
Mesh<T> build_mesh(std::vector<Vec3<T>> vertices,
                   std::vector<std::array<int, 3>> faces,
                   std::vector<Vec3<T>> colors = {},
                   std::vector<Vec2<T>> uvs = {},
                   std::vector<Vec3<T>> normals = {}) {
  if (vertices.empty()) throw InvalidAttribute("mesh has no vertices");
  if (faces.empty()) throw InvalidAttribute("mesh has no faces");
  const int nv = static_cast<int>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& [a, b, c] = faces[f];
    if (a < 0 || b < 0 || c < 0 || a >= nv || b >= nv || c >= nv)
      throw IndexOutOfRange("face " + std::to_string(f) +
                            " references a missing vertex");
    if (a == b || b == c || a == c)
      throw DegenerateFace("face " + std::to_string(f) +
                           " repeats a vertex index");
  }
  auto check_len = [&](std::size_t n, const char* what) {
    if (n != 0 && n != vertices.size())
      throw AttributeLengthMismatch(std::string(what) + " count " +
                                    std::to_string(n) + " != vertex count " +
                                    std::to_string(vertices.size()));
  };
  check_len(colors.size(), "color");
  check_len(uvs.size(), "uv");
  check_len(normals.size(), "normal");
  for (const auto& n : normals) {
    if (std::abs(norm(n) - T(1)) > T(1e-6))
      throw InvalidAttribute("stored normal is not unit length");
  }
  Mesh<T> m;
  m.vertices = std::move(vertices);
  m.faces = std::move(faces);
  m.colors = std::move(colors);
  m.uvs = std::move(uvs);
  m.normals = std::move(normals);
  return m;
}

template <typename T>
struct FaceNormals {
  std::vector<Vec3<T>> normals;        // unit; zero vector where degenerate
  std::vector<std::uint8_t> degenerate;
};

// Unit normal of face (a,b,c) is normalize((vb-va) x (vc-va)); CCW winding is
// front-facing. Zero-area faces yield the zero vector with the flag set.
template <typename T>
FaceNormals<T> face_normals(const Mesh<T>& mesh) {
  FaceNormals<T> out;
  out.normals.resize(mesh.faces.size());
  out.degenerate.assign(mesh.faces.size(), 0);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& [a, b, c] = mesh.faces[f];
    const Vec3<T> n =
        cross(mesh.vertices[b] - mesh.vertices[a], mesh.vertices[c] - mesh.vertices[a]);
    const T len = norm(n);
    if (len < T(1e-12)) {
      out.normals[f] = Vec3<T>{T(0), T(0), T(0)};
      out.degenerate[f] = 1;
    } else {
      out.normals[f] = n / len;
    }
  }
  return out;
}

template <typename T>
struct VertexNormals {
  std::vector<Vec3<T>> normals;      // unit
  std::vector<std::uint8_t> fallback;  // isolated vertex, (0,0,1) substituted
};

// Area-weighted average of incident face normals. The area weight times the
// unit face normal is just half the raw cross product, so the sum of raw
// cross products normalizes to the same direction.
template <typename T>
VertexNormals<T> vertex_normals(const Mesh<T>& mesh) {
  std::vector<Vec3<T>> acc(mesh.vertices.size(), Vec3<T>{});
  for (const auto& [a, b, c] : mesh.faces) {
    const Vec3<T> n =
        cross(mesh.vertices[b] - mesh.vertices[a], mesh.vertices[c] - mesh.vertices[a]);
    acc[a] += n;
    acc[b] += n;
    acc[c] += n;
  }
  VertexNormals<T> out;
  out.normals.resize(mesh.vertices.size());
  out.fallback.assign(mesh.vertices.size(), 0);
  for (std::size_t v = 0; v < acc.size(); ++v) {
    const T len = norm(acc[v]);
    if (len < T(1e-12)) {
      out.normals[v] = Vec3<T>{T(0), T(0), T(1)};
      out.fallback[v] = 1;
    } else {
      out.normals[v] = acc[v] / len;
    }
  }
  return out;
}

// Adjoint of vertex_normals: pushes gradients on the unit vertex normals back
// to the vertex positions. Fallback vertices pass zero gradient.
template <typename T>
std::vector<Vec3<T>> vertex_normals_backward(
    const Mesh<T>& mesh, const std::vector<Vec3<T>>& grad_unit_normals) {
  if (grad_unit_normals.size() != mesh.vertices.size())
    throw ShapeMismatch("vertex_normals_backward: gradient count mismatch");
  // Recompute the unnormalized accumulators.
  std::vector<Vec3<T>> acc(mesh.vertices.size(), Vec3<T>{});
  for (const auto& [a, b, c] : mesh.faces) {
    const Vec3<T> n =
        cross(mesh.vertices[b] - mesh.vertices[a], mesh.vertices[c] - mesh.vertices[a]);
    acc[a] += n;
    acc[b] += n;
    acc[c] += n;
  }
  // Gradient on each accumulator through the normalization.
  std::vector<Vec3<T>> grad_acc(mesh.vertices.size(), Vec3<T>{});
  for (std::size_t v = 0; v < acc.size(); ++v) {
    if (norm(acc[v]) < T(1e-12)) continue;
    grad_acc[v] = normalize_backward(acc[v], grad_unit_normals[v]);
  }
  // Each face's raw cross product contributed to its three corners.
  std::vector<Vec3<T>> grad_vertices(mesh.vertices.size(), Vec3<T>{});
  for (const auto& [a, b, c] : mesh.faces) {
    const Vec3<T> e1 = mesh.vertices[b] - mesh.vertices[a];
    const Vec3<T> e2 = mesh.vertices[c] - mesh.vertices[a];
    const Vec3<T> g = grad_acc[a] + grad_acc[b] + grad_acc[c];
    Vec3<T> ge1{}, ge2{};
    cross_backward(e1, e2, g, ge1, ge2);
    grad_vertices[b] += ge1;
    grad_vertices[c] += ge2;
    grad_vertices[a] -= ge1 + ge2;
  }
  return grad_vertices;
}

struct Adjacency {
  // Undirected edge (smaller index first) -> incident face indices. Ordered
  // map keeps iteration deterministic.
  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  std::vector<std::vector<int>> vertex_neighbors;  // sorted per vertex
  std::vector<std::pair<int, int>> non_manifold_edges;  // edges in > 2 faces
};

template <typename T>
Adjacency adjacency(const Mesh<T>& mesh) {
  Adjacency adj;
  adj.vertex_neighbors.resize(mesh.vertices.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      int a = face[k], b = face[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      adj.edge_faces[{a, b}].push_back(static_cast<int>(f));
    }
  }
  for (auto& [edge, face_list] : adj.edge_faces) {
    if (face_list.size() > 2) adj.non_manifold_edges.push_back(edge);
    adj.vertex_neighbors[edge.first].push_back(edge.second);
    adj.vertex_neighbors[edge.second].push_back(edge.first);
  }
  for (auto& nbrs : adj.vertex_neighbors) std::sort(nbrs.begin(), nbrs.end());
  return adj;
}

namespace detail {

template <typename T>
int midpoint_index(std::map<std::pair<int, int>, int>& cache,
                   std::vector<Vec3<T>>& vertices, int a, int b) {
  const auto key = std::minmax(a, b);
  auto it = cache.find({key.first, key.second});
  if (it != cache.end()) return it->second;
  Vec3<T> mid = (vertices[a] + vertices[b]) * T(0.5);
  mid = mid / norm(mid);
  const int idx = static_cast<int>(vertices.size());
  vertices.push_back(mid);
  cache.emplace(std::make_pair(key.first, key.second), idx);
  return idx;
}

}  // namespace detail

// Icosphere template: subdivided icosahedron with all vertices projected to
// unit radius. Level 0 is the icosahedron (12 vertices / 20 faces); each
// level quadruples the face count. Faces wind counter-clockwise seen from
// outside.
template <typename T>
Mesh<T> unit_sphere(int subdivision_level) {
  if (subdivision_level < 0 || subdivision_level > 5)
    throw LevelOutOfRange("subdivision level " +
                          std::to_string(subdivision_level) +
                          " outside 0..5");
  const T phi = T((1.0 + std::sqrt(5.0)) / 2.0);
  std::vector<Vec3<T>> vertices = {
      {-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& v : vertices) v = v / norm(v);
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < subdivision_level; ++level) {
    std::map<std::pair<int, int>, int> midpoint_cache;
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& [a, b, c] : faces) {
      const int ab = detail::midpoint_index(midpoint_cache, vertices, a, b);
      const int bc = detail::midpoint_index(midpoint_cache, vertices, b, c);
      const int ca = detail::midpoint_index(midpoint_cache, vertices, c, a);
      next.push_back({a, ab, ca});
      next.push_back({b, bc, ab});
      next.push_back({c, ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  return build_mesh(std::move(vertices), std::move(faces));
}

}  // namespace diffraster
