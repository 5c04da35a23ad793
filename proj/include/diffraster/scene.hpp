#pragma once

#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "diffraster/camera.hpp"
#include "diffraster/errors.hpp"
#include "diffraster/image.hpp"
#include "diffraster/mesh.hpp"
#include "diffraster/raster.hpp"
#include "diffraster/shading.hpp"
#include "diffraster/vec.hpp"

namespace diffraster {

enum class BaseColorModel { VertexColors, Texture };

template <typename T>
struct Scene {
  Mesh<T> mesh;
  Camera<T> camera;
  BaseColorModel base = BaseColorModel::VertexColors;
  LightingSpec<T> lighting = NoneLighting{};
  Image<T> texture;  // H x W x 3, used when base == Texture
};

// Which parameter groups take part in optimization / receive gradients.
struct ParamFlags {
  bool vertex_positions = false;
  bool vertex_colors = false;
  bool uvs = false;
  bool texture = false;
  bool light = false;
  bool camera_eye = false;

  bool any() const {
    return vertex_positions || vertex_colors || uvs || texture || light ||
           camera_eye;
  }
};

template <typename T>
struct GradientSet {
  std::optional<std::vector<Vec3<T>>> vertices;
  std::optional<std::vector<Vec3<T>>> colors;
  std::optional<std::vector<Vec2<T>>> uvs;
  std::optional<Image<T>> texels;
  std::optional<LightGrads<T>> light;
  std::optional<Vec3<T>> eye;
};

// Channel offsets of each attribute slice inside the packed per-vertex
// attribute block fed to the rasterizer; -1 when absent.
struct AttrLayout {
  int color = -1;
  int uv = -1;
  int normal = -1;
  int position = -1;
  int channels = 0;
};

template <typename T>
struct RenderTapes {
  AttrLayout layout;
  Mesh<T> mesh;  // geometry snapshot for the normal-chain backward
  VertexStageTape<T> vertex;
  RasterTape<T> raster;
  std::optional<SampleTape<T>> sample;
  ShadeTape<T> shade;
};

template <typename T>
struct RenderOutput {
  Image<T> color;  // H x W x 3
  Image<T> alpha;  // H x W x 1
  FrameBuffers<T> frame;
};

namespace detail {

template <typename T>
AttrLayout make_layout(const Scene<T>& scene) {
  AttrLayout layout;
  int c = 0;
  if (scene.base == BaseColorModel::VertexColors) {
    layout.color = c;
    c += 3;
  } else {
    layout.uv = c;
    c += 2;
  }
  if (!std::holds_alternative<NoneLighting>(scene.lighting)) {
    layout.normal = c;
    c += 3;
  }
  if (std::holds_alternative<Phong<T>>(scene.lighting)) {
    layout.position = c;
    c += 3;
  }
  layout.channels = c;
  return layout;
}

template <typename T>
Image<T> slice_channels(const Image<T>& src, int offset, int count) {
  Image<T> out(src.height, src.width, count);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < count; ++c)
        out.at(y, x, c) = src.at(y, x, offset + c);
  return out;
}

template <typename T>
void place_channels(Image<T>& dst, const Image<T>& src, int offset) {
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c)
        dst.at(y, x, offset + c) = src.at(y, x, c);
}

}  // namespace detail

// Full differentiable pipeline: vertex projection, rasterization with soft
// background alpha, then the fragment stage for the scene's color model.
template <typename T>
std::pair<RenderOutput<T>, RenderTapes<T>> forward_render(
    const Scene<T>& scene, const Camera<T>& camera, const SoftConfig<T>& soft,
    int width, int height, int workers = 1) {
  if (scene.base == BaseColorModel::VertexColors && !scene.mesh.has_colors())
    throw InvalidAttribute("forward_render: vertex-color model needs colors");
  if (scene.base == BaseColorModel::Texture) {
    if (!scene.mesh.has_uvs())
      throw InvalidAttribute("forward_render: texture model needs uvs");
    if (scene.texture.channels != 3)
      throw InvalidAttribute("forward_render: texture model needs an HxWx3 texture");
  }

  const AttrLayout layout = detail::make_layout(scene);
  const int nv = scene.mesh.vertex_count();

  std::vector<Vec3<T>> vnormals;
  if (layout.normal >= 0) vnormals = vertex_normals(scene.mesh).normals;

  std::vector<T> attrs(static_cast<std::size_t>(nv) * layout.channels, T(0));
  for (int v = 0; v < nv; ++v) {
    T* a = attrs.data() + static_cast<std::size_t>(v) * layout.channels;
    if (layout.color >= 0) {
      a[layout.color + 0] = scene.mesh.colors[v].x;
      a[layout.color + 1] = scene.mesh.colors[v].y;
      a[layout.color + 2] = scene.mesh.colors[v].z;
    }
    if (layout.uv >= 0) {
      a[layout.uv + 0] = scene.mesh.uvs[v].x;
      a[layout.uv + 1] = scene.mesh.uvs[v].y;
    }
    if (layout.normal >= 0) {
      a[layout.normal + 0] = vnormals[v].x;
      a[layout.normal + 1] = vnormals[v].y;
      a[layout.normal + 2] = vnormals[v].z;
    }
    if (layout.position >= 0) {
      a[layout.position + 0] = scene.mesh.vertices[v].x;
      a[layout.position + 1] = scene.mesh.vertices[v].y;
      a[layout.position + 2] = scene.mesh.vertices[v].z;
    }
  }

  auto [sv, vtape] = project_vertices(scene.mesh, camera);
  auto [fb, rtape] = rasterize(sv, scene.mesh.faces, attrs, layout.channels,
                               soft, width, height, workers);

  std::vector<std::uint8_t> covered(static_cast<std::size_t>(height) * width);
  for (std::size_t i = 0; i < covered.size(); ++i)
    covered[i] = fb.face_id[i] != kNoFace;

  RenderTapes<T> tapes;
  tapes.layout = layout;
  tapes.mesh = scene.mesh;
  tapes.vertex = std::move(vtape);

  Image<T> base_color;
  if (scene.base == BaseColorModel::VertexColors) {
    base_color = detail::slice_channels(fb.attr, layout.color, 3);
  } else {
    Image<T> uv_img = detail::slice_channels(fb.attr, layout.uv, 2);
    auto [sampled, stape] = sample_texture(scene.texture, uv_img, covered);
    base_color = std::move(sampled);
    tapes.sample = std::move(stape);
  }

  Image<T> normals_raw, positions;
  if (layout.normal >= 0)
    normals_raw = detail::slice_channels(fb.attr, layout.normal, 3);
  if (layout.position >= 0)
    positions = detail::slice_channels(fb.attr, layout.position, 3);

  auto [color, shtape] = shade(base_color, normals_raw, positions, covered,
                               scene.lighting, camera.eye);
  tapes.shade = std::move(shtape);
  tapes.raster = std::move(rtape);

  RenderOutput<T> out;
  out.color = std::move(color);
  out.alpha = fb.alpha;
  out.frame = std::move(fb);
  return {std::move(out), std::move(tapes)};
}

template <typename T>
std::pair<RenderOutput<T>, RenderTapes<T>> forward_render(
    const Scene<T>& scene, const SoftConfig<T>& soft, int width, int height,
    int workers = 1) {
  return forward_render(scene, scene.camera, soft, width, height, workers);
}

// Reverse composition of the pipeline. Gradient buffers are produced only for
// the groups enabled in `flags`.
template <typename T>
GradientSet<T> backward_render(const Image<T>& grad_color,
                               const Image<T>& grad_alpha,
                               const RenderTapes<T>& tapes,
                               const ParamFlags& flags, int workers = 1) {
  const AttrLayout& layout = tapes.layout;
  const int width = tapes.raster.width;
  const int height = tapes.raster.height;
  if (grad_color.height != height || grad_color.width != width ||
      grad_color.channels != 3)
    throw ShapeMismatch("backward_render: grad_color shape mismatch");
  if (grad_alpha.height != height || grad_alpha.width != width ||
      grad_alpha.channels != 1)
    throw ShapeMismatch("backward_render: grad_alpha shape mismatch");

  // Fragment stage.
  ShadeGrads<T> sgrads = shading_backward(grad_color, tapes.shade);

  // Base color back to either the color attribute slice or the texture.
  Image<T> grad_attr(height, width, layout.channels);
  std::optional<Image<T>> grad_texels;
  if (layout.color >= 0) {
    detail::place_channels(grad_attr, sgrads.base_color, layout.color);
  } else {
    auto tgrads = sample_texture_backward(sgrads.base_color, *tapes.sample);
    if (flags.texture) grad_texels = std::move(tgrads.texels);
    detail::place_channels(grad_attr, tgrads.uv, layout.uv);
  }
  if (layout.normal >= 0)
    detail::place_channels(grad_attr, sgrads.normals_raw, layout.normal);
  if (layout.position >= 0)
    detail::place_channels(grad_attr, sgrads.positions, layout.position);

  // Rasterizer stage.
  RasterGrads<T> rgrads =
      rasterize_backward(grad_attr, grad_alpha, tapes.raster, workers);

  const int nv = tapes.mesh.vertex_count();
  GradientSet<T> out;

  if (flags.vertex_colors && layout.color >= 0) {
    std::vector<Vec3<T>> g(nv);
    for (int v = 0; v < nv; ++v) {
      const T* a = rgrads.attrs.data() + static_cast<std::size_t>(v) * layout.channels;
      g[v] = Vec3<T>{a[layout.color], a[layout.color + 1], a[layout.color + 2]};
    }
    out.colors = std::move(g);
  }
  if (flags.uvs && layout.uv >= 0) {
    std::vector<Vec2<T>> g(nv);
    for (int v = 0; v < nv; ++v) {
      const T* a = rgrads.attrs.data() + static_cast<std::size_t>(v) * layout.channels;
      g[v] = Vec2<T>{a[layout.uv], a[layout.uv + 1]};
    }
    out.uvs = std::move(g);
  }
  if (flags.texture) {
    if (!grad_texels) throw WrongSpecVariant("backward_render: no texture in scene");
    out.texels = std::move(*grad_texels);
  }
  if (flags.light) out.light = sgrads.light;

  const bool need_vertex_stage = flags.vertex_positions || flags.camera_eye;
  if (need_vertex_stage) {
    const std::vector<T> zero_depth(nv, T(0));
    ProjectGrads<T> pgrads =
        project_backward(rgrads.ndc, zero_depth, tapes.vertex);
    if (flags.vertex_positions) {
      std::vector<Vec3<T>> g = std::move(pgrads.vertices);
      // Object-space position attribute (Phong view vector path).
      if (layout.position >= 0)
        for (int v = 0; v < nv; ++v) {
          const T* a = rgrads.attrs.data() + static_cast<std::size_t>(v) * layout.channels;
          g[v] += Vec3<T>{a[layout.position], a[layout.position + 1],
                          a[layout.position + 2]};
        }
      // Shading normals are recomputed from geometry every forward, so their
      // gradient flows back through the vertex-normal construction.
      if (layout.normal >= 0) {
        std::vector<Vec3<T>> g_normals(nv);
        for (int v = 0; v < nv; ++v) {
          const T* a = rgrads.attrs.data() + static_cast<std::size_t>(v) * layout.channels;
          g_normals[v] = Vec3<T>{a[layout.normal], a[layout.normal + 1],
                                 a[layout.normal + 2]};
        }
        const auto g_from_normals =
            vertex_normals_backward(tapes.mesh, g_normals);
        for (int v = 0; v < nv; ++v) g[v] += g_from_normals[v];
      }
      out.vertices = std::move(g);
    }
    if (flags.camera_eye) out.eye = pgrads.eye + sgrads.eye;
  }
  return out;
}

}  // namespace diffraster
