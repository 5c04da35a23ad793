#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "diffraster/camera.hpp"
#include "diffraster/errors.hpp"
#include "diffraster/image.hpp"
#include "diffraster/parallel.hpp"
#include "diffraster/vec.hpp"

namespace diffraster {

inline constexpr std::int32_t kNoFace = -1;

// Screen-space triangles with twice-signed-area magnitude below this count as
// degenerate: they are skipped everywhere (coverage and soft alpha) and their
// barycentric gradients would blow up anyway.
inline constexpr double kMinTriangleArea = 1e-12;

template <typename T>
struct SoftConfig {
  T delta = T(1e-4);       // smoothness of the soft face probability, NDC^2
  T cutoff_eps = T(1e-7);  // minimum retained soft contribution

  // Faces farther than this from a pixel contribute less than cutoff_eps.
  T influence_radius() const {
    return std::sqrt(delta * std::log(T(1) / cutoff_eps));
  }
};

template <typename T>
struct FrameBuffers {
  int height = 0, width = 0, channels = 0;
  Image<T> attr;    // H x W x C interpolated attributes
  Image<T> alpha;   // H x W, 1 on covered pixels, soft elsewhere
  Image<T> depth;   // H x W, +inf where uncovered
  std::vector<std::int32_t> face_id;  // winning face per pixel, kNoFace if none
  Image<T> bary;    // H x W x 3 weights of the winning face
};

enum class WitnessKind : std::uint8_t { Inside, Edge, Vertex };

// Nearest-feature record for the point-to-triangle distance: for an edge
// witness, `index` is the edge k = (v_k, v_{k+1 mod 3}) and `t` the segment
// parameter; for a vertex witness, `index` is the corner.
template <typename T>
struct DistWitness {
  WitnessKind kind = WitnessKind::Inside;
  int index = 0;
  T t = T(0);
};

template <typename T>
struct SoftEntry {
  std::int32_t face;
  T a;   // exp(-d2/delta), >= cutoff
  T d2;
  DistWitness<T> witness;
};

template <typename T>
struct RasterTape {
  int width = 0, height = 0, channels = 0;
  SoftConfig<T> soft;
  std::vector<Vec2<T>> ndc;
  std::vector<std::array<int, 3>> faces;
  std::vector<T> attrs;  // V x C, flattened
  std::vector<std::int32_t> face_id;
  Image<T> bary;
  // Per-background-pixel retained soft contributions, CSR layout.
  std::vector<std::uint32_t> soft_offsets;  // H*W + 1
  std::vector<SoftEntry<T>> soft_entries;
  std::uint64_t id = 0;
};

// NDC x of the center of pixel column x; y increases upward in NDC while rows
// grow downward.
template <typename T>
inline T pixel_center_x(int x, int width) {
  return (T(x) + T(0.5)) / T(width) * T(2) - T(1);
}

template <typename T>
inline T pixel_center_y(int y, int height) {
  return T(1) - (T(y) + T(0.5)) / T(height) * T(2);
}

// Signed-area barycentric weights of p in (v0, v1, v2); w0 is eliminated as
// 1 - w1 - w2 so the partition of unity holds exactly.
template <typename T>
std::array<T, 3> barycentric_weights(const Vec2<T>& v0, const Vec2<T>& v1,
                                     const Vec2<T>& v2, const Vec2<T>& p) {
  const T area2 = cross2(v1 - v0, v2 - v0);
  if (std::abs(area2) < T(kMinTriangleArea))
    throw DegenerateTriangle("triangle area below threshold");
  const T w1 = cross2(v0 - p, v2 - p) / -area2;
  const T w2 = cross2(v0 - p, v1 - p) / area2;
  return {T(1) - w1 - w2, w1, w2};
}

// Adjoint of barycentric_weights with p held fixed. grad_w carries upstream
// gradients for all three weights; the w0 = 1 - w1 - w2 elimination is folded
// in here.
template <typename T>
std::array<Vec2<T>, 3> barycentric_backward(const Vec2<T>& v0,
                                            const Vec2<T>& v1,
                                            const Vec2<T>& v2, const Vec2<T>& p,
                                            const std::array<T, 3>& grad_w) {
  const T area2 = cross2(v1 - v0, v2 - v0);
  if (std::abs(area2) < T(kMinTriangleArea))
    throw DegenerateTriangle("triangle area below threshold");
  const T g1 = grad_w[1] - grad_w[0];
  const T g2 = grad_w[2] - grad_w[0];

  // w1 = N1 / D, w2 = N2 / D with
  //   N1 = cross2(v2-p, v0-p), N2 = cross2(v0-p, v1-p), D = area2.
  const T n1 = cross2(v2 - p, v0 - p);
  const T n2 = cross2(v0 - p, v1 - p);
  const T inv_d = T(1) / area2;
  const T inv_d2 = inv_d * inv_d;

  // d cross2(u, w) / du = (w.y, -w.x); d/dw = (-u.y, u.x).
  auto d_first = [](const Vec2<T>& w) { return Vec2<T>{w.y, -w.x}; };
  auto d_second = [](const Vec2<T>& u) { return Vec2<T>{-u.y, u.x}; };

  // Numerator derivatives.
  const Vec2<T> dn1_dv2 = d_first(v0 - p);
  const Vec2<T> dn1_dv0 = d_second(v2 - p);
  const Vec2<T> dn2_dv0 = d_first(v1 - p);
  const Vec2<T> dn2_dv1 = d_second(v0 - p);
  // Denominator derivatives (D depends on all three corners).
  const Vec2<T> dd_dv1 = d_first(v2 - v0);
  const Vec2<T> dd_dv2 = d_second(v1 - v0);
  const Vec2<T> dd_dv0 = -dd_dv1 - dd_dv2;

  std::array<Vec2<T>, 3> grad{};
  // Quotient rule: d(N/D) = dN/D - N dD/D^2.
  grad[0] += (dn1_dv0 * inv_d - dd_dv0 * (n1 * inv_d2)) * g1;
  grad[2] += (dn1_dv2 * inv_d - dd_dv2 * (n1 * inv_d2)) * g1;
  grad[1] += (-dd_dv1 * (n1 * inv_d2)) * g1;

  grad[0] += (dn2_dv0 * inv_d - dd_dv0 * (n2 * inv_d2)) * g2;
  grad[1] += (dn2_dv1 * inv_d - dd_dv1 * (n2 * inv_d2)) * g2;
  grad[2] += (-dd_dv2 * (n2 * inv_d2)) * g2;
  return grad;
}

// Squared Euclidean distance from p to the closed triangle, with the nearest
// feature recorded for the backward pass. Ties between edges resolve to the
// lowest edge index; a nearest point at a segment endpoint is reported as a
// vertex witness so shared corners get a single consistent subgradient.
template <typename T>
std::pair<T, DistWitness<T>> point_triangle_dist2(const Vec2<T>& p,
                                                  const Vec2<T>& v0,
                                                  const Vec2<T>& v1,
                                                  const Vec2<T>& v2) {
  const T area2 = cross2(v1 - v0, v2 - v0);
  if (std::abs(area2) >= T(kMinTriangleArea)) {
    const auto w = barycentric_weights(v0, v1, v2, p);
    if (w[0] >= T(0) && w[1] >= T(0) && w[2] >= T(0))
      return {T(0), DistWitness<T>{WitnessKind::Inside, 0, T(0)}};
  }
  const Vec2<T> corners[3] = {v0, v1, v2};
  T best_d2 = std::numeric_limits<T>::infinity();
  DistWitness<T> best;
  for (int k = 0; k < 3; ++k) {
    const Vec2<T>& a = corners[k];
    const Vec2<T>& b = corners[(k + 1) % 3];
    const Vec2<T> ab = b - a;
    const T len2 = dot(ab, ab);
    T t = len2 > T(0) ? dot(p - a, ab) / len2 : T(0);
    t = std::clamp(t, T(0), T(1));
    const Vec2<T> q = a + ab * t;
    const Vec2<T> e = p - q;
    const T d2 = dot(e, e);
    if (d2 < best_d2) {
      best_d2 = d2;
      if (t <= T(0))
        best = {WitnessKind::Vertex, k, T(0)};
      else if (t >= T(1))
        best = {WitnessKind::Vertex, (k + 1) % 3, T(0)};
      else
        best = {WitnessKind::Edge, k, t};
    }
  }
  return {best_d2, best};
}

// Adjoint of point_triangle_dist2 through the stored witness. grad is the
// upstream gradient on d2; accumulates into the three corner gradients.
template <typename T>
void point_triangle_dist2_backward(const Vec2<T>& p, const Vec2<T>& v0,
                                   const Vec2<T>& v1, const Vec2<T>& v2,
                                   const DistWitness<T>& witness, T grad,
                                   std::array<Vec2<T>, 3>& grad_v) {
  if (witness.kind == WitnessKind::Inside) return;  // d2 locally constant 0
  const Vec2<T> corners[3] = {v0, v1, v2};
  if (witness.kind == WitnessKind::Vertex) {
    const Vec2<T>& v = corners[witness.index];
    grad_v[witness.index] += (v - p) * (T(2) * grad);
    return;
  }
  // Edge witness: d2 = |p - a - t(b-a)|^2 at the interior minimizer t, so the
  // envelope theorem lets us treat t as fixed.
  const int k = witness.index;
  const Vec2<T>& a = corners[k];
  const Vec2<T>& b = corners[(k + 1) % 3];
  const Vec2<T> e = p - (a + (b - a) * witness.t);
  grad_v[k] += e * (T(-2) * (T(1) - witness.t) * grad);
  grad_v[(k + 1) % 3] += e * (T(-2) * witness.t * grad);
}

namespace detail {

template <typename T>
struct FaceRecord {
  bool active = false;
  Vec2<T> v0, v1, v2;
  T d0, d1, d2;  // camera depths
  T min_x, max_x, min_y, max_y;
};

template <typename T>
std::vector<FaceRecord<T>> build_face_records(
    const ScreenVertices<T>& sv, const std::vector<std::array<int, 3>>& faces) {
  std::vector<FaceRecord<T>> recs(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& [a, b, c] = faces[f];
    if (sv.behind[a] || sv.behind[b] || sv.behind[c]) continue;
    FaceRecord<T>& r = recs[f];
    r.v0 = sv.ndc[a];
    r.v1 = sv.ndc[b];
    r.v2 = sv.ndc[c];
    if (std::abs(cross2(r.v1 - r.v0, r.v2 - r.v0)) < T(kMinTriangleArea))
      continue;
    r.active = true;
    r.d0 = sv.depth[a];
    r.d1 = sv.depth[b];
    r.d2 = sv.depth[c];
    r.min_x = std::min({r.v0.x, r.v1.x, r.v2.x});
    r.max_x = std::max({r.v0.x, r.v1.x, r.v2.x});
    r.min_y = std::min({r.v0.y, r.v1.y, r.v2.y});
    r.max_y = std::max({r.v0.y, r.v1.y, r.v2.y});
  }
  return recs;
}

inline int tile_rows() { return 16; }

inline int tile_count(int height) {
  return (height + tile_rows() - 1) / tile_rows();
}

// Faces whose (expanded) NDC bounding box intersects each row band. Bins are
// filled in ascending face order, which fixes the per-pixel iteration order
// and with it the floating-point result.
template <typename T>
std::vector<std::vector<std::int32_t>> bin_faces(
    const std::vector<FaceRecord<T>>& recs, int width, int height, T expand) {
  (void)width;
  const int tiles = tile_count(height);
  std::vector<std::vector<std::int32_t>> bins(tiles);
  for (std::size_t f = 0; f < recs.size(); ++f) {
    if (!recs[f].active) continue;
    const T lo_y = recs[f].min_y - expand;
    const T hi_y = recs[f].max_y + expand;
    // Rows with center y in [lo_y, hi_y]: y_center(y) = 1 - (y+0.5)/H*2.
    // Solve for the inclusive row range (rows grow downward).
    const T hf = T(height);
    int row_lo = static_cast<int>(std::floor((T(1) - hi_y) * hf / T(2) - T(0.5)));
    int row_hi = static_cast<int>(std::ceil((T(1) - lo_y) * hf / T(2) - T(0.5)));
    row_lo = std::max(row_lo, 0);
    row_hi = std::min(row_hi, height - 1);
    if (row_lo > row_hi) continue;
    const int tile_lo = row_lo / tile_rows();
    const int tile_hi = row_hi / tile_rows();
    for (int t = tile_lo; t <= tile_hi; ++t)
      bins[t].push_back(static_cast<std::int32_t>(f));
  }
  return bins;
}

}  // namespace detail

template <typename T>
std::pair<FrameBuffers<T>, RasterTape<T>> rasterize(
    const ScreenVertices<T>& screen_vertices,
    const std::vector<std::array<int, 3>>& faces, const std::vector<T>& attrs,
    int channels, const SoftConfig<T>& soft, int width, int height,
    int workers = 1) {
  if (faces.empty()) throw EmptyFaceList("rasterize: no faces");
  if (width <= 0 || height <= 0)
    throw ZeroResolution("rasterize: resolution " + std::to_string(width) +
                         "x" + std::to_string(height));
  const std::size_t nv = screen_vertices.ndc.size();
  if (attrs.size() != nv * static_cast<std::size_t>(channels))
    throw ShapeMismatch("rasterize: attrs size " + std::to_string(attrs.size()) +
                        " != vertices * channels");

  const auto recs = detail::build_face_records(screen_vertices, faces);
  const T radius = soft.influence_radius();
  const auto cover_bins = detail::bin_faces(recs, width, height, T(0));
  const auto soft_bins = detail::bin_faces(recs, width, height, radius);

  FrameBuffers<T> fb;
  fb.height = height;
  fb.width = width;
  fb.channels = channels;
  fb.attr = Image<T>(height, width, channels);
  fb.alpha = Image<T>(height, width, 1);
  fb.depth = Image<T>(height, width, 1, std::numeric_limits<T>::infinity());
  fb.face_id.assign(static_cast<std::size_t>(height) * width, kNoFace);
  fb.bary = Image<T>(height, width, 3);

  const int tiles = detail::tile_count(height);
  // Soft entries are gathered per tile and concatenated in tile order below.
  std::vector<std::vector<SoftEntry<T>>> tile_entries(tiles);
  std::vector<std::vector<std::uint32_t>> tile_counts(tiles);

  parallel_for_index(tiles, workers, [&](int tile) {
    const int y_begin = tile * detail::tile_rows();
    const int y_end = std::min(height, y_begin + detail::tile_rows());
    auto& entries = tile_entries[tile];
    auto& counts = tile_counts[tile];
    counts.assign(static_cast<std::size_t>(y_end - y_begin) * width, 0);

    for (int y = y_begin; y < y_end; ++y) {
      const T py = pixel_center_y<T>(y, height);
      for (int x = 0; x < width; ++x) {
        const T px = pixel_center_x<T>(x, width);
        const Vec2<T> p{px, py};

        // Coverage: closest covering face wins, ties to the lower index.
        std::int32_t best = kNoFace;
        T best_depth = std::numeric_limits<T>::infinity();
        std::array<T, 3> best_w{};
        for (const std::int32_t f : cover_bins[tile]) {
          const auto& r = recs[f];
          if (px < r.min_x || px > r.max_x || py < r.min_y || py > r.max_y)
            continue;
          const auto w = barycentric_weights(r.v0, r.v1, r.v2, p);
          if (w[0] < T(0) || w[1] < T(0) || w[2] < T(0)) continue;
          const T z = w[0] * r.d0 + w[1] * r.d1 + w[2] * r.d2;
          if (z < best_depth) {
            best_depth = z;
            best = f;
            best_w = w;
          }
        }

        if (best != kNoFace) {
          fb.face_id[static_cast<std::size_t>(y) * width + x] = best;
          fb.depth.at(y, x) = best_depth;
          fb.alpha.at(y, x) = T(1);
          for (int k = 0; k < 3; ++k) fb.bary.at(y, x, k) = best_w[k];
          const auto& face = faces[best];
          for (int c = 0; c < channels; ++c) {
            T v = T(0);
            for (int k = 0; k < 3; ++k)
              v += best_w[k] * attrs[static_cast<std::size_t>(face[k]) * channels + c];
            fb.attr.at(y, x, c) = v;
          }
          continue;
        }

        // Background: soft alpha over retained faces (Eq. 5-6 with cutoff).
        T one_minus = T(1);
        std::uint32_t n_retained = 0;
        for (const std::int32_t f : soft_bins[tile]) {
          const auto& r = recs[f];
          if (px < r.min_x - radius || px > r.max_x + radius ||
              py < r.min_y - radius || py > r.max_y + radius)
            continue;
          const auto [d2, witness] = point_triangle_dist2(p, r.v0, r.v1, r.v2);
          const T a = std::exp(-d2 / soft.delta);
          if (a < soft.cutoff_eps) continue;
          one_minus *= T(1) - a;
          entries.push_back(SoftEntry<T>{f, a, d2, witness});
          ++n_retained;
        }
        counts[static_cast<std::size_t>(y - y_begin) * width + x] = n_retained;
        fb.alpha.at(y, x) = T(1) - one_minus;
      }
    }
  });

  RasterTape<T> tape;
  tape.width = width;
  tape.height = height;
  tape.channels = channels;
  tape.soft = soft;
  tape.ndc = screen_vertices.ndc;
  tape.faces = faces;
  tape.attrs = attrs;
  tape.face_id = fb.face_id;
  tape.bary = fb.bary;
  tape.id = detail::next_tape_id();
  tape.soft_offsets.assign(static_cast<std::size_t>(height) * width + 1, 0);
  std::size_t total_entries = 0;
  for (int t = 0; t < tiles; ++t) total_entries += tile_entries[t].size();
  tape.soft_entries.reserve(total_entries);
  for (int t = 0; t < tiles; ++t) {
    const int y_begin = t * detail::tile_rows();
    const int y_end = std::min(height, y_begin + detail::tile_rows());
    for (int y = y_begin; y < y_end; ++y)
      for (int x = 0; x < width; ++x) {
        const std::size_t pix = static_cast<std::size_t>(y) * width + x;
        tape.soft_offsets[pix + 1] =
            tile_counts[t][static_cast<std::size_t>(y - y_begin) * width + x];
      }
    tape.soft_entries.insert(tape.soft_entries.end(), tile_entries[t].begin(),
                             tile_entries[t].end());
  }
  for (std::size_t i = 1; i < tape.soft_offsets.size(); ++i)
    tape.soft_offsets[i] += tape.soft_offsets[i - 1];
  return {std::move(fb), std::move(tape)};
}

template <typename T>
struct RasterGrads {
  std::vector<Vec2<T>> ndc;  // per screen vertex
  std::vector<T> attrs;      // V x C, flattened
};

// Backward pass: covered pixels route gradients through the interpolation
// (attribute gradients pick up exactly the barycentric weights), background
// pixels route alpha gradients through the soft distance terms to the face
// vertices. Covered pixels pass no alpha gradient.
template <typename T>
RasterGrads<T> rasterize_backward(const Image<T>& grad_attr,
                                  const Image<T>& grad_alpha,
                                  const RasterTape<T>& tape, int workers = 1) {
  if (grad_attr.height != tape.height || grad_attr.width != tape.width ||
      grad_attr.channels != tape.channels)
    throw ShapeMismatch("rasterize_backward: grad_attr shape mismatch");
  if (grad_alpha.height != tape.height || grad_alpha.width != tape.width ||
      grad_alpha.channels != 1)
    throw ShapeMismatch("rasterize_backward: grad_alpha shape mismatch");

  const std::size_t nv = tape.ndc.size();
  const int channels = tape.channels;
  const int tiles = detail::tile_count(tape.height);

  // Per-tile partial buffers, reduced in fixed tile order: the sum order is
  // a function of the tile layout only, never of the worker count.
  std::vector<std::vector<Vec2<T>>> tile_gndc(tiles);
  std::vector<std::vector<T>> tile_gattr(tiles);

  parallel_for_index(tiles, workers, [&](int tile) {
    auto& gndc = tile_gndc[tile];
    auto& gattr = tile_gattr[tile];
    gndc.assign(nv, Vec2<T>{});
    gattr.assign(nv * channels, T(0));

    const int y_begin = tile * detail::tile_rows();
    const int y_end = std::min(tape.height, y_begin + detail::tile_rows());
    for (int y = y_begin; y < y_end; ++y) {
      const T py = pixel_center_y<T>(y, tape.height);
      for (int x = 0; x < tape.width; ++x) {
        const std::size_t pix = static_cast<std::size_t>(y) * tape.width + x;
        const std::int32_t fid = tape.face_id[pix];
        if (fid != kNoFace) {
          const auto& face = tape.faces[fid];
          std::array<T, 3> w{tape.bary.at(y, x, 0), tape.bary.at(y, x, 1),
                             tape.bary.at(y, x, 2)};
          std::array<T, 3> grad_w{};
          bool any = false;
          for (int c = 0; c < channels; ++c) {
            const T g = grad_attr.at(y, x, c);
            if (g == T(0)) continue;
            any = true;
            for (int k = 0; k < 3; ++k) {
              gattr[static_cast<std::size_t>(face[k]) * channels + c] += w[k] * g;
              grad_w[k] += g * tape.attrs[static_cast<std::size_t>(face[k]) * channels + c];
            }
          }
          if (any) {
            const Vec2<T> px_c{pixel_center_x<T>(x, tape.width), py};
            const auto gv = barycentric_backward(
                tape.ndc[face[0]], tape.ndc[face[1]], tape.ndc[face[2]], px_c,
                grad_w);
            for (int k = 0; k < 3; ++k) gndc[face[k]] += gv[k];
          }
          continue;
        }

        const T ga = grad_alpha.at(y, x);
        if (ga == T(0)) continue;
        const std::uint32_t lo = tape.soft_offsets[pix];
        const std::uint32_t hi = tape.soft_offsets[pix + 1];
        if (lo == hi) continue;
        const std::uint32_t n = hi - lo;
        // dA/dA^j = prod_{m != j} (1 - A^m), via prefix/suffix products so a
        // factor of exactly zero stays well-defined.
        std::vector<T> prefix(n + 1, T(1)), suffix(n + 1, T(1));
        for (std::uint32_t j = 0; j < n; ++j)
          prefix[j + 1] = prefix[j] * (T(1) - tape.soft_entries[lo + j].a);
        for (std::uint32_t j = n; j > 0; --j)
          suffix[j - 1] = suffix[j] * (T(1) - tape.soft_entries[lo + j - 1].a);
        const Vec2<T> px_c{pixel_center_x<T>(x, tape.width), py};
        for (std::uint32_t j = 0; j < n; ++j) {
          const SoftEntry<T>& e = tape.soft_entries[lo + j];
          const T dA_dAj = prefix[j] * suffix[j + 1];
          const T g_d2 = ga * dA_dAj * (-e.a / tape.soft.delta);
          if (g_d2 == T(0)) continue;
          const auto& face = tape.faces[e.face];
          std::array<Vec2<T>, 3> gv{};
          point_triangle_dist2_backward(px_c, tape.ndc[face[0]],
                                        tape.ndc[face[1]], tape.ndc[face[2]],
                                        e.witness, g_d2, gv);
          for (int k = 0; k < 3; ++k) gndc[face[k]] += gv[k];
        }
      }
    }
  });

  RasterGrads<T> out;
  out.ndc.assign(nv, Vec2<T>{});
  out.attrs.assign(nv * channels, T(0));
  for (int t = 0; t < tiles; ++t) {
    for (std::size_t v = 0; v < nv; ++v) out.ndc[v] += tile_gndc[t][v];
    for (std::size_t i = 0; i < out.attrs.size(); ++i)
      out.attrs[i] += tile_gattr[t][i];
  }
  return out;
}

}  // namespace diffraster
