#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "diffraster/camera.hpp"
#include "diffraster/errors.hpp"
#include "diffraster/image.hpp"
#include "diffraster/vec.hpp"

namespace diffraster {

struct NoneLighting {};

template <typename T>
struct Lambertian {
  T k_d = T(1);
  Vec3<T> light_dir{T(0), T(0), T(1)};  // toward the light
};

template <typename T>
struct Phong {
  T k_d = T(1);
  T k_s = T(0.4);
  T shininess = T(10);
  Vec3<T> light_dir{T(0), T(0), T(1)};
};

template <typename T>
struct SphericalHarmonics {
  std::array<T, 9> coeffs{};  // bands 0..2
};

template <typename T>
using LightingSpec =
    std::variant<NoneLighting, Lambertian<T>, Phong<T>, SphericalHarmonics<T>>;

// Real spherical harmonics basis, bands 0..2, evaluated on a unit vector.
template <typename T>
std::array<T, 9> sh_basis(const Vec3<T>& n) {
  const T x = n.x, y = n.y, z = n.z;
  return {T(0.282095),
          T(0.488603) * y,
          T(0.488603) * z,
          T(0.488603) * x,
          T(1.092548) * x * y,
          T(1.092548) * y * z,
          T(0.315392) * (T(3) * z * z - T(1)),
          T(1.092548) * x * z,
          T(0.546274) * (x * x - y * y)};
}

// Gradients of sh_basis with respect to the (unit) input vector.
template <typename T>
std::array<Vec3<T>, 9> sh_basis_grad(const Vec3<T>& n) {
  const T x = n.x, y = n.y, z = n.z;
  return {Vec3<T>{T(0), T(0), T(0)},
          Vec3<T>{T(0), T(0.488603), T(0)},
          Vec3<T>{T(0), T(0), T(0.488603)},
          Vec3<T>{T(0.488603), T(0), T(0)},
          Vec3<T>{T(1.092548) * y, T(1.092548) * x, T(0)},
          Vec3<T>{T(0), T(1.092548) * z, T(1.092548) * y},
          Vec3<T>{T(0), T(0), T(0.315392) * T(6) * z},
          Vec3<T>{T(1.092548) * z, T(0), T(1.092548) * x},
          Vec3<T>{T(0.546274) * T(2) * x, T(-0.546274) * T(2) * y, T(0)}};
}

// ---------------------------------------------------------------------------
// Texture sampling
// ---------------------------------------------------------------------------

template <typename T>
struct SampleTape {
  Image<T> uv;       // H x W x 2, raw (pre-clamp) values
  Image<T> texture;  // copy of the sampled texture
  std::vector<std::uint8_t> covered;
  std::uint64_t id = 0;
};

namespace detail {

// Texel-space decomposition of one uv coordinate: texel centers sit at
// (k + 0.5) / extent. Returns the two clamped texel indices and the blend.
template <typename T>
struct TexelAxis {
  int lo, hi;
  T frac;
};

template <typename T>
TexelAxis<T> texel_axis(T coord, int extent) {
  const T clamped = std::clamp(coord, T(0), T(1));
  const T x = clamped * T(extent) - T(0.5);
  const T fl = std::floor(x);
  int lo = static_cast<int>(fl);
  const T frac = x - fl;
  int hi = lo + 1;
  lo = std::clamp(lo, 0, extent - 1);
  hi = std::clamp(hi, 0, extent - 1);
  return {lo, hi, frac};
}

}  // namespace detail

// Bilinear texture lookup at per-pixel uv. uv is clamped to [0,1]^2 with
// clamp-to-edge texels; pixels outside the coverage mask produce 0.
template <typename T>
std::pair<Image<T>, SampleTape<T>> sample_texture(
    const Image<T>& texture, const Image<T>& uv_image,
    const std::vector<std::uint8_t>& coverage_mask) {
  if (texture.channels != 3 || texture.height < 1 || texture.width < 1)
    throw ShapeMismatch("sample_texture: texture must be HxWx3");
  if (uv_image.channels != 2)
    throw ShapeMismatch("sample_texture: uv image must have 2 channels");
  if (coverage_mask.size() !=
      static_cast<std::size_t>(uv_image.height) * uv_image.width)
    throw ShapeMismatch("sample_texture: coverage mask size mismatch");

  Image<T> out(uv_image.height, uv_image.width, 3);
  for (int y = 0; y < uv_image.height; ++y)
    for (int x = 0; x < uv_image.width; ++x) {
      if (!coverage_mask[static_cast<std::size_t>(y) * uv_image.width + x])
        continue;
      const auto ax = detail::texel_axis(uv_image.at(y, x, 0), texture.width);
      const auto ay = detail::texel_axis(uv_image.at(y, x, 1), texture.height);
      for (int c = 0; c < 3; ++c) {
        const T t00 = texture.at(ay.lo, ax.lo, c);
        const T t01 = texture.at(ay.lo, ax.hi, c);
        const T t10 = texture.at(ay.hi, ax.lo, c);
        const T t11 = texture.at(ay.hi, ax.hi, c);
        const T top = t00 + (t01 - t00) * ax.frac;
        const T bot = t10 + (t11 - t10) * ax.frac;
        out.at(y, x, c) = top + (bot - top) * ay.frac;
      }
    }

  SampleTape<T> tape;
  tape.uv = uv_image;
  tape.texture = texture;
  tape.covered = coverage_mask;
  tape.id = detail::next_tape_id();
  return {std::move(out), std::move(tape)};
}

template <typename T>
struct SampleGrads {
  Image<T> texels;
  Image<T> uv;
};

template <typename T>
SampleGrads<T> sample_texture_backward(const Image<T>& grad_color,
                                       const SampleTape<T>& tape) {
  if (grad_color.height != tape.uv.height || grad_color.width != tape.uv.width ||
      grad_color.channels != 3)
    throw TapeMismatch("sample_texture_backward: gradient shape mismatch");
  const Image<T>& tex = tape.texture;
  SampleGrads<T> out;
  out.texels = Image<T>(tex.height, tex.width, 3);
  out.uv = Image<T>(tape.uv.height, tape.uv.width, 2);

  for (int y = 0; y < tape.uv.height; ++y)
    for (int x = 0; x < tape.uv.width; ++x) {
      if (!tape.covered[static_cast<std::size_t>(y) * tape.uv.width + x])
        continue;
      const T u = tape.uv.at(y, x, 0);
      const T v = tape.uv.at(y, x, 1);
      const auto ax = detail::texel_axis(u, tex.width);
      const auto ay = detail::texel_axis(v, tex.height);
      T gu = T(0), gv = T(0);
      for (int c = 0; c < 3; ++c) {
        const T g = grad_color.at(y, x, c);
        if (g == T(0)) continue;
        const T t00 = tex.at(ay.lo, ax.lo, c);
        const T t01 = tex.at(ay.lo, ax.hi, c);
        const T t10 = tex.at(ay.hi, ax.lo, c);
        const T t11 = tex.at(ay.hi, ax.hi, c);
        out.texels.at(ay.lo, ax.lo, c) += g * (T(1) - ax.frac) * (T(1) - ay.frac);
        out.texels.at(ay.lo, ax.hi, c) += g * ax.frac * (T(1) - ay.frac);
        out.texels.at(ay.hi, ax.lo, c) += g * (T(1) - ax.frac) * ay.frac;
        out.texels.at(ay.hi, ax.hi, c) += g * ax.frac * ay.frac;
        const T d_dfx = (t01 - t00) * (T(1) - ay.frac) + (t11 - t10) * ay.frac;
        const T d_dfy = (t10 - t00) * (T(1) - ax.frac) + (t11 - t01) * ax.frac;
        gu += g * d_dfx;
        gv += g * d_dfy;
      }
      // d frac / d uv is the texture extent inside [0,1], zero where clamped.
      if (u > T(0) && u < T(1)) out.uv.at(y, x, 0) = gu * T(tex.width);
      if (v > T(0) && v < T(1)) out.uv.at(y, x, 1) = gv * T(tex.height);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Lighting factors
// ---------------------------------------------------------------------------

// I_l = k_d max(0, L.N) per pixel; normals must be unit. I_s is identically 0
// in this model.
template <typename T>
Image<T> lambertian_factors(const Image<T>& normal_image,
                            const LightingSpec<T>& spec) {
  const auto* lam = std::get_if<Lambertian<T>>(&spec);
  if (!lam) throw WrongSpecVariant("lambertian_factors: spec is not Lambertian");
  if (normal_image.channels != 3)
    throw ShapeMismatch("lambertian_factors: normal image must be HxWx3");
  const Vec3<T> light = normalized(lam->light_dir);
  Image<T> out(normal_image.height, normal_image.width, 1);
  for (int y = 0; y < normal_image.height; ++y)
    for (int x = 0; x < normal_image.width; ++x) {
      const Vec3<T> n{normal_image.at(y, x, 0), normal_image.at(y, x, 1),
                      normal_image.at(y, x, 2)};
      out.at(y, x) = lam->k_d * std::max(T(0), dot(light, n));
    }
  return out;
}

// Phong: I_l = k_d max(0, L.N), I_s = k_s max(0, R.V)^alpha with the
// reflection R = 2(L.N)N - L. Light color is constant 1 and there is no
// ambient term. view_dir_image must hold unit vectors toward the eye.
template <typename T>
std::pair<Image<T>, Image<T>> phong_factors(const Image<T>& normal_image,
                                            const Image<T>& view_dir_image,
                                            const LightingSpec<T>& spec) {
  const auto* ph = std::get_if<Phong<T>>(&spec);
  if (!ph) throw WrongSpecVariant("phong_factors: spec is not Phong");
  if (normal_image.channels != 3 || view_dir_image.channels != 3)
    throw ShapeMismatch("phong_factors: images must be HxWx3");
  require_same_shape(normal_image, view_dir_image, "phong_factors");
  const Vec3<T> light = normalized(ph->light_dir);
  Image<T> diffuse(normal_image.height, normal_image.width, 1);
  Image<T> specular(normal_image.height, normal_image.width, 1);
  for (int y = 0; y < normal_image.height; ++y)
    for (int x = 0; x < normal_image.width; ++x) {
      const Vec3<T> n{normal_image.at(y, x, 0), normal_image.at(y, x, 1),
                      normal_image.at(y, x, 2)};
      const Vec3<T> v{view_dir_image.at(y, x, 0), view_dir_image.at(y, x, 1),
                      view_dir_image.at(y, x, 2)};
      const T ln = dot(light, n);
      const Vec3<T> r = n * (T(2) * ln) - light;
      diffuse.at(y, x) = ph->k_d * std::max(T(0), ln);
      const T rv = std::max(T(0), dot(r, v));
      specular.at(y, x) = ph->k_s * std::pow(rv, ph->shininess);
    }
  return {std::move(diffuse), std::move(specular)};
}

// Spherical-harmonics lighting over bands 0..2, clamped at zero from below.
template <typename T>
Image<T> sh_factors(const Image<T>& normal_image, const LightingSpec<T>& spec) {
  const auto* sh = std::get_if<SphericalHarmonics<T>>(&spec);
  if (!sh) throw WrongSpecVariant("sh_factors: spec is not SphericalHarmonics");
  if (normal_image.channels != 3)
    throw ShapeMismatch("sh_factors: normal image must be HxWx3");
  Image<T> out(normal_image.height, normal_image.width, 1);
  for (int y = 0; y < normal_image.height; ++y)
    for (int x = 0; x < normal_image.width; ++x) {
      const Vec3<T> n{normal_image.at(y, x, 0), normal_image.at(y, x, 1),
                      normal_image.at(y, x, 2)};
      const auto basis = sh_basis(n);
      T s = T(0);
      for (int i = 0; i < 9; ++i) s += sh->coeffs[i] * basis[i];
      out.at(y, x) = std::max(T(0), s);
    }
  return out;
}

// I = I_l * I_c + I_s per pixel. Values are not clamped here; clamping to
// [0,1] happens only at image export.
template <typename T>
Image<T> compose(const Image<T>& base_color, const Image<T>& diffuse_factor,
                 const Image<T>& specular_factor) {
  if (base_color.channels != 3)
    throw ShapeMismatch("compose: base color must be HxWx3");
  if (diffuse_factor.channels != 1 || specular_factor.channels != 1)
    throw ShapeMismatch("compose: factors must be HxWx1");
  if (diffuse_factor.height != base_color.height ||
      diffuse_factor.width != base_color.width ||
      !diffuse_factor.same_shape(specular_factor))
    throw ShapeMismatch("compose: factor shape mismatch");
  Image<T> out(base_color.height, base_color.width, 3);
  for (int y = 0; y < base_color.height; ++y)
    for (int x = 0; x < base_color.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) =
            diffuse_factor.at(y, x) * base_color.at(y, x, c) + specular_factor.at(y, x);
  return out;
}

// ---------------------------------------------------------------------------
// Unified shading stage with tape
// ---------------------------------------------------------------------------

template <typename T>
struct ShadeTape {
  LightingSpec<T> spec;
  Vec3<T> eye{};
  Image<T> base_color;   // I_c as fed in
  Image<T> normals_raw;  // interpolated, pre-normalization; empty when unlit
  Image<T> positions;    // interpolated surface points; Phong only
  std::vector<std::uint8_t> covered;
  std::uint64_t id = 0;
};

// Full fragment stage: renormalizes interpolated normals, normalizes the
// light direction in-graph and applies the lighting model. NoneLighting is a
// verbatim copy of the base color.
template <typename T>
std::pair<Image<T>, ShadeTape<T>> shade(const Image<T>& base_color,
                                        const Image<T>& normals_raw,
                                        const Image<T>& positions,
                                        const std::vector<std::uint8_t>& covered,
                                        const LightingSpec<T>& spec,
                                        const Vec3<T>& eye) {
  ShadeTape<T> tape;
  tape.spec = spec;
  tape.eye = eye;
  tape.base_color = base_color;
  tape.normals_raw = normals_raw;
  tape.positions = positions;
  tape.covered = covered;
  tape.id = detail::next_tape_id();

  if (std::holds_alternative<NoneLighting>(spec))
    return {base_color, std::move(tape)};

  if (normals_raw.channels != 3)
    throw ShapeMismatch("shade: lighting requires an HxWx3 normal image");
  Image<T> unit_normals(normals_raw.height, normals_raw.width, 3);
  for (int y = 0; y < normals_raw.height; ++y)
    for (int x = 0; x < normals_raw.width; ++x) {
      if (!covered[static_cast<std::size_t>(y) * normals_raw.width + x]) continue;
      Vec3<T> n{normals_raw.at(y, x, 0), normals_raw.at(y, x, 1),
                normals_raw.at(y, x, 2)};
      const T len = norm(n);
      if (len > T(0)) n = n / len;
      unit_normals.at(y, x, 0) = n.x;
      unit_normals.at(y, x, 1) = n.y;
      unit_normals.at(y, x, 2) = n.z;
    }

  Image<T> diffuse, specular;
  if (std::holds_alternative<Lambertian<T>>(spec)) {
    diffuse = lambertian_factors(unit_normals, spec);
    specular = Image<T>(base_color.height, base_color.width, 1);
  } else if (std::holds_alternative<Phong<T>>(spec)) {
    if (positions.channels != 3)
      throw ShapeMismatch("shade: Phong requires an HxWx3 position image");
    Image<T> view(positions.height, positions.width, 3);
    for (int y = 0; y < positions.height; ++y)
      for (int x = 0; x < positions.width; ++x) {
        if (!covered[static_cast<std::size_t>(y) * positions.width + x]) continue;
        const Vec3<T> p{positions.at(y, x, 0), positions.at(y, x, 1),
                        positions.at(y, x, 2)};
        const Vec3<T> v = normalized(eye - p);
        view.at(y, x, 0) = v.x;
        view.at(y, x, 1) = v.y;
        view.at(y, x, 2) = v.z;
      }
    auto [d, s] = phong_factors(unit_normals, view, spec);
    diffuse = std::move(d);
    specular = std::move(s);
  } else {
    diffuse = sh_factors(unit_normals, spec);
    specular = Image<T>(base_color.height, base_color.width, 1);
  }

  Image<T> out = compose(base_color, diffuse, specular);
  // Mask out anything the interpolation may have produced off-coverage.
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      if (!covered[static_cast<std::size_t>(y) * out.width + x])
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = T(0);
  return {std::move(out), std::move(tape)};
}

// Gradients of the lighting parameters, one slot per variant field; slots not
// matching the tape's variant stay zero.
template <typename T>
struct LightGrads {
  T k_d{}, k_s{}, shininess{};
  Vec3<T> light_dir{};  // tangent to the unit sphere
  std::array<T, 9> sh{};
};

template <typename T>
struct ShadeGrads {
  Image<T> base_color;
  Image<T> normals_raw;
  Image<T> positions;
  Vec3<T> eye{};
  LightGrads<T> light;
};

template <typename T>
ShadeGrads<T> shading_backward(const Image<T>& grad_final,
                               const ShadeTape<T>& tape) {
  if (grad_final.height != tape.base_color.height ||
      grad_final.width != tape.base_color.width || grad_final.channels != 3)
    throw TapeMismatch("shading_backward: gradient shape mismatch");

  ShadeGrads<T> out;
  out.base_color = Image<T>(tape.base_color.height, tape.base_color.width, 3);

  if (std::holds_alternative<NoneLighting>(tape.spec)) {
    out.base_color = grad_final;
    return out;
  }

  out.normals_raw = Image<T>(tape.normals_raw.height, tape.normals_raw.width, 3);
  const bool is_phong = std::holds_alternative<Phong<T>>(tape.spec);
  if (is_phong)
    out.positions = Image<T>(tape.positions.height, tape.positions.width, 3);

  Vec3<T> light_raw{};
  if (const auto* lam = std::get_if<Lambertian<T>>(&tape.spec))
    light_raw = lam->light_dir;
  else if (const auto* ph = std::get_if<Phong<T>>(&tape.spec))
    light_raw = ph->light_dir;
  const T light_len =
      std::holds_alternative<SphericalHarmonics<T>>(tape.spec) ? T(1) : norm(light_raw);
  const Vec3<T> light =
      std::holds_alternative<SphericalHarmonics<T>>(tape.spec)
          ? Vec3<T>{}
          : light_raw / light_len;
  Vec3<T> g_light_unit{};

  for (int y = 0; y < grad_final.height; ++y)
    for (int x = 0; x < grad_final.width; ++x) {
      if (!tape.covered[static_cast<std::size_t>(y) * grad_final.width + x])
        continue;
      const Vec3<T> g{grad_final.at(y, x, 0), grad_final.at(y, x, 1),
                      grad_final.at(y, x, 2)};
      const Vec3<T> base{tape.base_color.at(y, x, 0), tape.base_color.at(y, x, 1),
                         tape.base_color.at(y, x, 2)};
      const Vec3<T> n_raw{tape.normals_raw.at(y, x, 0),
                          tape.normals_raw.at(y, x, 1),
                          tape.normals_raw.at(y, x, 2)};
      const T n_len = norm(n_raw);
      if (n_len <= T(0)) continue;
      const Vec3<T> n = n_raw / n_len;

      // I = I_l * I_c + I_s; adjoints of the two factor scalars.
      const T g_il = dot(g, base);
      const T g_is = g.x + g.y + g.z;
      Vec3<T> g_n_unit{};

      if (const auto* lam = std::get_if<Lambertian<T>>(&tape.spec)) {
        const T ln = dot(light, n);
        out.light.k_d += std::max(T(0), ln) * g_il;
        if (ln > T(0)) {
          const T g_ln = lam->k_d * g_il;
          g_light_unit += n * g_ln;
          g_n_unit += light * g_ln;
        }
        const T il = lam->k_d * std::max(T(0), ln);
        out.base_color.at(y, x, 0) = g.x * il;
        out.base_color.at(y, x, 1) = g.y * il;
        out.base_color.at(y, x, 2) = g.z * il;
      } else if (const auto* ph = std::get_if<Phong<T>>(&tape.spec)) {
        const Vec3<T> p{tape.positions.at(y, x, 0), tape.positions.at(y, x, 1),
                        tape.positions.at(y, x, 2)};
        const Vec3<T> to_eye = tape.eye - p;
        const Vec3<T> v = normalized(to_eye);
        const T ln = dot(light, n);
        const Vec3<T> r = n * (T(2) * ln) - light;
        const T rv = dot(r, v);

        const T il = ph->k_d * std::max(T(0), ln);
        out.base_color.at(y, x, 0) = g.x * il;
        out.base_color.at(y, x, 1) = g.y * il;
        out.base_color.at(y, x, 2) = g.z * il;
        out.light.k_d += std::max(T(0), ln) * g_il;

        T g_ln = ln > T(0) ? ph->k_d * g_il : T(0);
        Vec3<T> g_r{}, g_v{};
        if (rv > T(0)) {
          const T pow_a = std::pow(rv, ph->shininess);
          out.light.k_s += pow_a * g_is;
          out.light.shininess += ph->k_s * pow_a * std::log(rv) * g_is;
          const T g_rv = ph->k_s * ph->shininess * std::pow(rv, ph->shininess - T(1)) * g_is;
          g_r = v * g_rv;
          g_v = r * g_rv;
        }
        // r = 2 (L.N) n - L
        g_ln += T(2) * dot(n, g_r);
        g_n_unit += g_r * (T(2) * ln);
        Vec3<T> g_light_local = -g_r;
        g_light_local += n * g_ln;
        g_n_unit += light * g_ln;
        g_light_unit += g_light_local;
        // v = normalize(eye - p)
        const Vec3<T> g_to_eye = normalize_backward(to_eye, g_v);
        out.eye += g_to_eye;
        out.positions.at(y, x, 0) -= g_to_eye.x;
        out.positions.at(y, x, 1) -= g_to_eye.y;
        out.positions.at(y, x, 2) -= g_to_eye.z;
      } else if (const auto* sh = std::get_if<SphericalHarmonics<T>>(&tape.spec)) {
        const auto basis = sh_basis(n);
        T s = T(0);
        for (int i = 0; i < 9; ++i) s += sh->coeffs[i] * basis[i];
        const T il = std::max(T(0), s);
        out.base_color.at(y, x, 0) = g.x * il;
        out.base_color.at(y, x, 1) = g.y * il;
        out.base_color.at(y, x, 2) = g.z * il;
        if (s > T(0)) {
          const auto basis_grad = sh_basis_grad(n);
          for (int i = 0; i < 9; ++i) {
            out.light.sh[i] += basis[i] * g_il;
            g_n_unit += basis_grad[i] * (sh->coeffs[i] * g_il);
          }
        }
      }

      if (!(g_n_unit == Vec3<T>{})) {
        const Vec3<T> g_n_raw = normalize_backward(n_raw, g_n_unit);
        out.normals_raw.at(y, x, 0) += g_n_raw.x;
        out.normals_raw.at(y, x, 1) += g_n_raw.y;
        out.normals_raw.at(y, x, 2) += g_n_raw.z;
      }
    }

  // Light direction: gradient through the in-graph normalization, which also
  // makes it tangent to the unit sphere when the stored vector is unit.
  if (!std::holds_alternative<SphericalHarmonics<T>>(tape.spec) &&
      !std::holds_alternative<NoneLighting>(tape.spec)) {
    out.light.light_dir = normalize_backward(light_raw, g_light_unit);
  }
  return out;
}

}  // namespace diffraster
