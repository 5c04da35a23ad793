#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "diffraster/errors.hpp"
#include "diffraster/mesh.hpp"

namespace diffraster {

namespace detail {

inline ParseError obj_error(const std::string& path, int line,
                            const std::string& msg) {
  return ParseError(path + ":" + std::to_string(line) + ": " + msg);
}

// Resolves an OBJ index: 1-based from the front, negative counts back from
// the records seen so far.
inline int resolve_obj_index(int raw, int count, const std::string& path,
                             int line) {
  int idx = raw > 0 ? raw - 1 : count + raw;
  if (raw == 0 || idx < 0 || idx >= count)
    throw obj_error(path, line, "index " + std::to_string(raw) +
                                    " out of range (have " +
                                    std::to_string(count) + ")");
  return idx;
}

}  // namespace detail

// Parses the v/vt/vn/f subset of Wavefront OBJ. Polygon faces are
// fan-triangulated, per-corner attribute indices are converted to per-vertex
// attributes by splitting vertices on (v, vt, vn) conflicts, and a six-float
// `v` record carries per-vertex RGB. Unknown directives are skipped with a
// warning.
template <typename T>
Mesh<T> load_obj(const std::string& path,
                 std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("load_obj: cannot open " + path);

  std::vector<Vec3<T>> positions;
  std::vector<Vec3<T>> position_colors;
  bool any_color = false;
  std::vector<Vec2<T>> texcoords;
  std::vector<Vec3<T>> file_normals;

  // Output mesh built corner by corner; (v, vt, vn) triples map to one
  // output vertex each.
  std::map<std::tuple<int, int, int>, int> corner_map;
  std::vector<Vec3<T>> out_vertices, out_colors, out_normals;
  std::vector<Vec2<T>> out_uvs;
  std::vector<std::array<int, 3>> out_faces;
  bool faces_use_uv = false, faces_use_normal = false;
  bool first_face = true;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;

    if (tag == "v") {
      std::vector<double> nums;
      double x;
      while (ss >> x) nums.push_back(x);
      if (nums.size() != 3 && nums.size() != 6)
        throw detail::obj_error(path, line_no,
                                "vertex needs 3 or 6 components, got " +
                                    std::to_string(nums.size()));
      positions.push_back({T(nums[0]), T(nums[1]), T(nums[2])});
      if (nums.size() == 6) {
        position_colors.push_back({T(nums[3]), T(nums[4]), T(nums[5])});
        any_color = true;
      } else {
        position_colors.push_back({T(0), T(0), T(0)});
      }
    } else if (tag == "vt") {
      double u, v, w;
      if (!(ss >> u >> v))
        throw detail::obj_error(path, line_no, "texture coordinate needs 2 values");
      ss >> w;  // optional third component, ignored
      texcoords.push_back({T(u), T(v)});
    } else if (tag == "vn") {
      double x, y, z;
      if (!(ss >> x >> y >> z))
        throw detail::obj_error(path, line_no, "normal needs 3 values");
      Vec3<T> n{T(x), T(y), T(z)};
      const T len = norm(n);
      if (len < T(1e-12))
        throw detail::obj_error(path, line_no, "zero-length normal");
      file_normals.push_back(n / len);
    } else if (tag == "f") {
      std::vector<std::tuple<int, int, int>> corners;  // v, vt, vn (-1 absent)
      std::string word;
      while (ss >> word) {
        int vi = 0, ti = -1, ni = -1;
        const std::size_t s1 = word.find('/');
        if (s1 == std::string::npos) {
          try { vi = std::stoi(word); } catch (...) {
            throw detail::obj_error(path, line_no, "bad face corner '" + word + "'");
          }
        } else {
          const std::size_t s2 = word.find('/', s1 + 1);
          try {
            vi = std::stoi(word.substr(0, s1));
            if (s2 == std::string::npos) {
              ti = std::stoi(word.substr(s1 + 1));
            } else {
              if (s2 > s1 + 1) ti = std::stoi(word.substr(s1 + 1, s2 - s1 - 1));
              if (s2 + 1 < word.size()) ni = std::stoi(word.substr(s2 + 1));
            }
          } catch (...) {
            throw detail::obj_error(path, line_no, "bad face corner '" + word + "'");
          }
        }
        const int v = detail::resolve_obj_index(
            vi, static_cast<int>(positions.size()), path, line_no);
        const int t = ti == -1 ? -1
                               : detail::resolve_obj_index(
                                     ti, static_cast<int>(texcoords.size()),
                                     path, line_no);
        const int n = ni == -1 ? -1
                               : detail::resolve_obj_index(
                                     ni, static_cast<int>(file_normals.size()),
                                     path, line_no);
        corners.emplace_back(v, t, n);
      }
      if (corners.size() < 3)
        throw detail::obj_error(path, line_no, "face needs at least 3 corners");
      const bool has_uv = std::get<1>(corners[0]) >= 0;
      const bool has_n = std::get<2>(corners[0]) >= 0;
      for (const auto& [cv, ct, cn] : corners)
        if ((ct >= 0) != has_uv || (cn >= 0) != has_n)
          throw detail::obj_error(path, line_no,
                                  "mixed attribute usage within a face");
      if (first_face) {
        faces_use_uv = has_uv;
        faces_use_normal = has_n;
        first_face = false;
      } else if (has_uv != faces_use_uv || has_n != faces_use_normal) {
        throw detail::obj_error(path, line_no,
                                "mixed attribute usage across faces");
      }

      auto emit = [&](const std::tuple<int, int, int>& corner) {
        auto it = corner_map.find(corner);
        if (it != corner_map.end()) return it->second;
        const auto& [v, t, n] = corner;
        const int idx = static_cast<int>(out_vertices.size());
        out_vertices.push_back(positions[v]);
        out_colors.push_back(position_colors[v]);
        if (t >= 0) out_uvs.push_back(texcoords[t]);
        if (n >= 0) out_normals.push_back(file_normals[n]);
        corner_map.emplace(corner, idx);
        return idx;
      };
      const int c0 = emit(corners[0]);
      for (std::size_t k = 1; k + 1 < corners.size(); ++k)
        out_faces.push_back({c0, emit(corners[k]), emit(corners[k + 1])});
    } else {
      if (warnings)
        warnings->push_back(path + ":" + std::to_string(line_no) +
                            ": skipped unsupported directive '" + tag + "'");
    }
  }

  if (!any_color) out_colors.clear();
  return build_mesh(std::move(out_vertices), std::move(out_faces),
                    std::move(out_colors), std::move(out_uvs),
                    std::move(out_normals));
}

// Writes v (+RGB when colors are present) / vt / vn / f records. Attribute
// indices always equal the vertex index, matching the per-vertex model.
// Output is byte-deterministic for identical input.
template <typename T>
void save_obj(const Mesh<T>& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_obj: cannot open " + path + " for writing");
  char buf[256];
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const auto& p = mesh.vertices[v];
    if (mesh.has_colors()) {
      const auto& c = mesh.colors[v];
      std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g %.9g %.9g %.9g\n",
                    double(p.x), double(p.y), double(p.z), double(c.x),
                    double(c.y), double(c.z));
    } else {
      std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", double(p.x),
                    double(p.y), double(p.z));
    }
    out << buf;
  }
  for (const auto& t : mesh.uvs) {
    std::snprintf(buf, sizeof(buf), "vt %.9g %.9g\n", double(t.x), double(t.y));
    out << buf;
  }
  for (const auto& n : mesh.normals) {
    std::snprintf(buf, sizeof(buf), "vn %.9g %.9g %.9g\n", double(n.x),
                  double(n.y), double(n.z));
    out << buf;
  }
  for (const auto& f : mesh.faces) {
    out << 'f';
    for (int k = 0; k < 3; ++k) {
      const int i = f[k] + 1;
      out << ' ' << i;
      if (mesh.has_uvs() || mesh.has_normals()) {
        out << '/';
        if (mesh.has_uvs()) out << i;
        if (mesh.has_normals()) out << '/' << i;
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("save_obj: write to " + path + " failed");
}

}  // namespace diffraster
