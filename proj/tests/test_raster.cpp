#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "diffraster/raster.hpp"
#include "oracles.hpp"

using namespace diffraster;

namespace {

ScreenVertices<double> make_sv(std::vector<Vec2<double>> ndc,
                               std::vector<double> depth = {}) {
  ScreenVertices<double> sv;
  if (depth.empty()) depth.assign(ndc.size(), 2.0);
  sv.ndc = std::move(ndc);
  sv.depth = std::move(depth);
  sv.inv_w.resize(sv.ndc.size());
  for (std::size_t i = 0; i < sv.ndc.size(); ++i) sv.inv_w[i] = 1.0 / sv.depth[i];
  sv.behind.assign(sv.ndc.size(), 0);
  return sv;
}

}  // namespace

TEST_CASE("barycentric_weights examples") {
  const Vec2<double> a{0, 0}, b{1, 0}, c{0, 1};
  const auto w1 = barycentric_weights(a, b, c, Vec2<double>{0, 0});
  CHECK(w1[0] == Catch::Approx(1.0));
  CHECK(w1[1] == Catch::Approx(0.0).margin(1e-15));
  CHECK(w1[2] == Catch::Approx(0.0).margin(1e-15));

  const auto w2 = barycentric_weights(a, b, c, Vec2<double>{1.0 / 3, 1.0 / 3});
  CHECK(w2[0] == Catch::Approx(1.0 / 3));
  CHECK(w2[1] == Catch::Approx(1.0 / 3));
  CHECK(w2[2] == Catch::Approx(1.0 / 3));

  const auto w3 = barycentric_weights(Vec2<double>{0, 0}, Vec2<double>{2, 0},
                                      Vec2<double>{0, 2}, Vec2<double>{0.5, 0.5});
  CHECK(w3[0] == Catch::Approx(0.5));
  CHECK(w3[1] == Catch::Approx(0.25));
  CHECK(w3[2] == Catch::Approx(0.25));

  CHECK_THROWS_AS(barycentric_weights(a, a, c, Vec2<double>{0, 0}),
                  DegenerateTriangle);
}

TEST_CASE("barycentric_backward matches finite differences") {
  Rng rng(101);
  const double h = 1e-6;
  for (int trial = 0; trial < 1000; ++trial) {
    auto v = oracles::random_triangle<double>(rng);
    const auto p = oracles::random_interior_point(rng, v);
    const std::array<double, 3> gw{rng.normal(), rng.normal(), rng.normal()};

    const auto grads = barycentric_backward(v[0], v[1], v[2], p, gw);

    auto objective = [&](const std::array<Vec2<double>, 3>& tri) {
      const auto w = barycentric_weights(tri[0], tri[1], tri[2], p);
      return w[0] * gw[0] + w[1] * gw[1] + w[2] * gw[2];
    };
    const int k = static_cast<int>(rng.below(3));
    const int axis = static_cast<int>(rng.below(2));
    auto plus = v, minus = v;
    if (axis == 0) {
      plus[k].x += h;
      minus[k].x -= h;
    } else {
      plus[k].y += h;
      minus[k].y -= h;
    }
    const double numeric = (objective(plus) - objective(minus)) / (2 * h);
    const double analytic = axis == 0 ? grads[k].x : grads[k].y;
    CHECK(oracles::close_rel(analytic, numeric, 1e-5));
  }
}

TEST_CASE("barycentric_backward zero seed and translation invariance") {
  Rng rng(33);
  const auto v = oracles::random_triangle<double>(rng);
  const auto p = oracles::random_interior_point(rng, v);

  const auto zero = barycentric_backward(v[0], v[1], v[2], p, {0, 0, 0});
  for (const auto& g : zero) CHECK(dot(g, g) == 0.0);

  // Weights are invariant when triangle and point translate together, so the
  // vertex gradients must cancel the point gradient; with p fixed that means
  // sum_k grad_k = -dW/dp. Verify via finite differences of the translation.
  const std::array<double, 3> gw{0.3, -1.2, 0.9};
  const auto grads = barycentric_backward(v[0], v[1], v[2], p, gw);
  const Vec2<double> dir{0.7, -0.4};
  auto shifted = [&](double t) {
    std::array<Vec2<double>, 3> tv = v;
    for (auto& q : tv) q += dir * t;
    const auto w = barycentric_weights(tv[0], tv[1], tv[2], p + dir * t);
    return w[0] * gw[0] + w[1] * gw[1] + w[2] * gw[2];
  };
  CHECK(std::abs(shifted(1e-4) - shifted(-1e-4)) / 2e-4 < 1e-9);
  // Equivalent statement on the analytic side: directional derivatives of the
  // vertex motion alone equal minus the p-motion, measured numerically.
  const double vertex_dir = dot(grads[0] + grads[1] + grads[2], dir);
  auto p_only = [&](double t) {
    const auto w = barycentric_weights(v[0], v[1], v[2], p + dir * t);
    return w[0] * gw[0] + w[1] * gw[1] + w[2] * gw[2];
  };
  const double p_dir = (p_only(1e-6) - p_only(-1e-6)) / 2e-6;
  CHECK(oracles::close_rel(vertex_dir, -p_dir, 1e-4));
}

TEST_CASE("point_triangle_dist2 against a boundary-sampling oracle") {
  const std::array<Vec2<double>, 3> tri{Vec2<double>{0, 0}, Vec2<double>{1, 0},
                                        Vec2<double>{0, 1}};
  {
    const auto [d2, w] = point_triangle_dist2(Vec2<double>{0.2, 0.2}, tri[0],
                                              tri[1], tri[2]);
    CHECK(d2 == 0.0);
    CHECK(w.kind == WitnessKind::Inside);
  }
  {
    const auto [d2, w] =
        point_triangle_dist2(Vec2<double>{2, 0}, tri[0], tri[1], tri[2]);
    CHECK(d2 == Catch::Approx(1.0));
    CHECK(w.kind == WitnessKind::Vertex);
    CHECK(w.index == 1);
    CHECK(std::abs(d2 - oracles::sampled_boundary_dist2(Vec2<double>{2, 0}, tri)) <
          1e-6);
  }
  {
    const auto [d2, w] =
        point_triangle_dist2(Vec2<double>{0.5, -1}, tri[0], tri[1], tri[2]);
    CHECK(d2 == Catch::Approx(1.0));
    CHECK(w.kind == WitnessKind::Edge);
    CHECK(w.index == 0);
    CHECK(w.t == Catch::Approx(0.5));
    CHECK(std::abs(d2 -
                   oracles::sampled_boundary_dist2(Vec2<double>{0.5, -1}, tri)) <
          1e-6);
  }

  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    const auto v = oracles::random_triangle<double>(rng);
    const Vec2<double> p{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
    const auto [d2, w] = point_triangle_dist2(p, v[0], v[1], v[2]);
    (void)w;
    const double ref = oracles::sampled_boundary_dist2(p, v, 2000);
    if (d2 == 0.0) {
      const auto bw = barycentric_weights(v[0], v[1], v[2], p);
      CHECK((bw[0] >= 0 && bw[1] >= 0 && bw[2] >= 0));
    } else {
      CHECK(std::abs(d2 - ref) < 1e-5);
    }
  }
}

TEST_CASE("point_triangle_dist2_backward matches finite differences") {
  Rng rng(505);
  const double h = 1e-7;
  for (int trial = 0; trial < 200; ++trial) {
    const auto v = oracles::random_triangle<double>(rng);
    const Vec2<double> p{rng.uniform(-1.4, 1.4), rng.uniform(-1.4, 1.4)};
    const auto [d2, w] = point_triangle_dist2(p, v[0], v[1], v[2]);
    if (d2 <= 1e-6) continue;  // inside or touching: no useful gradient
    std::array<Vec2<double>, 3> grads{};
    point_triangle_dist2_backward(p, v[0], v[1], v[2], w, 1.0, grads);

    const int k = static_cast<int>(rng.below(3));
    const int axis = static_cast<int>(rng.below(2));
    auto plus = v, minus = v;
    (axis == 0 ? plus[k].x : plus[k].y) += h;
    (axis == 0 ? minus[k].x : minus[k].y) -= h;
    const auto [dp, wp] = point_triangle_dist2(p, plus[0], plus[1], plus[2]);
    const auto [dm, wm] = point_triangle_dist2(p, minus[0], minus[1], minus[2]);
    if (wp.kind != w.kind || wm.kind != w.kind) continue;  // feature switch
    const double numeric = (dp - dm) / (2 * h);
    const double analytic = axis == 0 ? grads[k].x : grads[k].y;
    CHECK(oracles::close_rel(analytic, numeric, 1e-4, 1e-7));
  }
}

TEST_CASE("rasterize single triangle matches per-pixel reference") {
  // Vertex colors as three attribute channels.
  const auto sv = make_sv({{-0.5, -0.5}, {0.7, -0.3}, {0.0, 0.8}});
  const std::vector<std::array<int, 3>> faces{{0, 1, 2}};
  const std::vector<double> attrs{1.0, 0.1, 0.0,   0.0, 0.9, 0.2,  0.3, 0.2, 1.0};
  const auto [fb, tape] = rasterize(sv, faces, attrs, 3, SoftConfig<double>{},
                                    24, 24);
  (void)tape;
  int covered = 0;
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      if (fb.face_id[y * 24 + x] == kNoFace) {
        CHECK(fb.bary.at(y, x, 0) == 0.0);
        CHECK(std::isinf(fb.depth.at(y, x)));
        continue;
      }
      ++covered;
      CHECK(fb.alpha.at(y, x) == 1.0);
      const Vec2<double> p{pixel_center_x<double>(x, 24),
                           pixel_center_y<double>(y, 24)};
      const auto w = barycentric_weights(sv.ndc[0], sv.ndc[1], sv.ndc[2], p);
      for (int c = 0; c < 3; ++c) {
        const double ref = w[0] * attrs[c] + w[1] * attrs[3 + c] + w[2] * attrs[6 + c];
        CHECK(std::abs(fb.attr.at(y, x, c) - ref) < 1e-6);
      }
      const double wsum =
          fb.bary.at(y, x, 0) + fb.bary.at(y, x, 1) + fb.bary.at(y, x, 2);
      CHECK(std::abs(wsum - 1.0) < 1e-5);
    }
  CHECK(covered > 20);
}

TEST_CASE("z-buffer picks the nearest face, ties to the lower index") {
  const auto sv = make_sv({{-0.8, -0.8}, {0.8, -0.8}, {0.0, 0.8},
                           {-0.8, -0.8}, {0.8, -0.8}, {0.0, 0.8}},
                          {3.0, 3.0, 3.0, 1.5, 1.5, 1.5});
  const std::vector<std::array<int, 3>> faces{{0, 1, 2}, {3, 4, 5}};
  const std::vector<double> attrs(6, 0.0);
  const auto [fb, tape] = rasterize(sv, faces, attrs, 1, SoftConfig<double>{},
                                    16, 16);
  (void)tape;
  for (int i = 0; i < 16 * 16; ++i)
    if (fb.face_id[i] != kNoFace) CHECK(fb.face_id[i] == 1);  // nearer face

  // Identical depths: the lower face index must win.
  const auto sv_tie = make_sv({{-0.8, -0.8}, {0.8, -0.8}, {0.0, 0.8},
                               {-0.8, -0.8}, {0.8, -0.8}, {0.0, 0.8}});
  const auto [fb2, tape2] =
      rasterize(sv_tie, faces, attrs, 1, SoftConfig<double>{}, 16, 16);
  (void)tape2;
  for (int i = 0; i < 16 * 16; ++i)
    if (fb2.face_id[i] != kNoFace) CHECK(fb2.face_id[i] == 0);
}

TEST_CASE("soft alpha hits exp(-1) at squared distance delta") {
  // Pixel (4,4) of an 8x8 grid sits at ndc (0.125, -0.125); the triangle's
  // nearest edge is the vertical segment x = 0.225, so d2 = 0.01.
  SoftConfig<double> soft;
  soft.delta = 0.01;
  const auto sv = make_sv({{0.225, -0.5}, {0.225, 0.5}, {0.8, 0.0}});
  const std::vector<std::array<int, 3>> faces{{0, 1, 2}};
  const std::vector<double> attrs(3, 0.0);
  const auto [fb, tape] = rasterize(sv, faces, attrs, 1, soft, 8, 8);
  (void)tape;
  REQUIRE(fb.face_id[4 * 8 + 4] == kNoFace);
  CHECK(fb.alpha.at(4, 4) == Catch::Approx(std::exp(-1.0)).epsilon(1e-9));
}

TEST_CASE("soft alpha is monotone in distance for a single face") {
  SoftConfig<double> soft;
  soft.delta = 5e-3;
  const auto sv = make_sv({{-0.2, -0.2}, {0.2, -0.2}, {0.0, 0.2}});
  const std::vector<std::array<int, 3>> faces{{0, 1, 2}};
  const auto [fb, tape] =
      rasterize(sv, faces, std::vector<double>(3, 0.0), 1, soft, 32, 32);
  (void)tape;
  std::vector<std::pair<double, double>> d2_alpha;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      if (fb.face_id[y * 32 + x] != kNoFace) continue;
      const Vec2<double> p{pixel_center_x<double>(x, 32),
                           pixel_center_y<double>(y, 32)};
      const auto [d2, w] = point_triangle_dist2(p, sv.ndc[0], sv.ndc[1], sv.ndc[2]);
      (void)w;
      d2_alpha.emplace_back(d2, fb.alpha.at(y, x));
    }
  std::sort(d2_alpha.begin(), d2_alpha.end());
  for (std::size_t i = 1; i < d2_alpha.size(); ++i)
    CHECK(d2_alpha[i].second <= d2_alpha[i - 1].second + 1e-12);
}

TEST_CASE("cutoff-accelerated alpha matches the brute-force oracle") {
  Rng rng(777);
  for (int scene = 0; scene < 10; ++scene) {
    const int n_faces = 3 + static_cast<int>(rng.below(18));
    const auto sv = oracles::random_screen_vertices<double>(rng, n_faces * 3);
    std::vector<std::array<int, 3>> faces(n_faces);
    for (int f = 0; f < n_faces; ++f) faces[f] = {3 * f, 3 * f + 1, 3 * f + 2};
    SoftConfig<double> soft;
    soft.delta = rng.uniform(5e-5, 5e-3);
    const auto [fb, tape] = rasterize(sv, faces,
                                      std::vector<double>(sv.ndc.size(), 0.0), 1,
                                      soft, 16, 16);
    (void)tape;
    const auto ref = oracles::brute_force_alpha(sv, faces, soft.delta, 16, 16);
    CHECK(max_abs_diff(fb.alpha, ref) <= 1e-6);
  }
}

TEST_CASE("attribute gradients are exactly the barycentric weights") {
  Rng rng(999);
  for (int trial = 0; trial < 50; ++trial) {
    const auto tri = oracles::random_triangle<double>(rng, 0.8, 0.1);
    const auto sv = make_sv({tri[0], tri[1], tri[2]});
    const std::vector<std::array<int, 3>> faces{{0, 1, 2}};
    std::vector<double> attrs(9);
    for (auto& a : attrs) a = rng.uniform();
    const auto [fb, tape] =
        rasterize(sv, faces, attrs, 3, SoftConfig<double>{}, 16, 16);

    int px = -1, py = -1;
    for (int y = 0; y < 16 && px < 0; ++y)
      for (int x = 0; x < 16 && px < 0; ++x)
        if (fb.face_id[y * 16 + x] != kNoFace) {
          px = x;
          py = y;
        }
    if (px < 0) continue;

    const int channel = static_cast<int>(rng.below(3));
    Image<double> g_attr(16, 16, 3), g_alpha(16, 16, 1);
    g_attr.at(py, px, channel) = 1.0;
    const auto grads = rasterize_backward(g_attr, g_alpha, tape);
    for (int k = 0; k < 3; ++k) {
      const double expected = fb.bary.at(py, px, k);
      CHECK(grads.attrs[k * 3 + channel] == expected);  // Eq. 3 left, bit-exact
    }
  }
}

TEST_CASE("rasterize_backward zero seeds produce zero gradients") {
  const auto sv = make_sv({{-0.5, -0.5}, {0.7, -0.3}, {0.0, 0.8}});
  const std::vector<std::array<int, 3>> faces{{0, 1, 2}};
  const auto [fb, tape] = rasterize(sv, faces, std::vector<double>(3, 0.5), 1,
                                    SoftConfig<double>{}, 16, 16);
  (void)fb;
  Image<double> g_attr(16, 16, 1), g_alpha(16, 16, 1);
  const auto grads = rasterize_backward(g_attr, g_alpha, tape);
  for (const auto& g : grads.ndc) CHECK(dot(g, g) == 0.0);
  for (const double g : grads.attrs) CHECK(g == 0.0);

  Image<double> bad(8, 8, 1);
  CHECK_THROWS_AS(rasterize_backward(bad, g_alpha, tape), ShapeMismatch);
}

TEST_CASE("alpha gradients match finite differences") {
  Rng rng(2024);
  SoftConfig<double> soft;
  soft.delta = 2e-3;
  const double h = 1e-4;
  int checked = 0;
  for (int trial = 0; trial < 60 && checked < 25; ++trial) {
    const auto tri = oracles::random_triangle<double>(rng, 0.5, 0.05);
    auto sv = make_sv({tri[0], tri[1], tri[2]});
    const std::vector<std::array<int, 3>> faces{{0, 1, 2}};
    const std::vector<double> attrs(3, 0.0);
    const auto [fb, tape] = rasterize(sv, faces, attrs, 1, soft, 16, 16);

    Image<double> g_attr(16, 16, 1);
    Image<double> g_alpha(16, 16, 1, 1.0);  // objective: sum of alpha
    const auto grads = rasterize_backward(g_attr, g_alpha, tape);

    auto total_alpha = [&](const ScreenVertices<double>& s,
                           std::vector<std::int32_t>* ids) {
      const auto [f, t] = rasterize(s, faces, attrs, 1, soft, 16, 16);
      (void)t;
      if (ids) *ids = f.face_id;
      double sum = 0;
      for (const double a : f.alpha.data) sum += a;
      return sum;
    };

    const int k = static_cast<int>(rng.below(3));
    const int axis = static_cast<int>(rng.below(2));
    auto plus = sv, minus = sv;
    (axis == 0 ? plus.ndc[k].x : plus.ndc[k].y) += h;
    (axis == 0 ? minus.ndc[k].x : minus.ndc[k].y) -= h;
    std::vector<std::int32_t> idp, idm;
    const double lp = total_alpha(plus, &idp);
    const double lm = total_alpha(minus, &idm);
    if (idp != fb.face_id || idm != fb.face_id) continue;  // coverage flip
    ++checked;
    const double numeric = (lp - lm) / (2 * h);
    const double analytic = axis == 0 ? grads.ndc[k].x : grads.ndc[k].y;
    CHECK(oracles::close_rel(analytic, numeric, 1e-3));
  }
  CHECK(checked >= 25);
}

TEST_CASE("constant attributes interpolate exactly") {
  const auto sv = make_sv({{-0.7, -0.6}, {0.8, -0.4}, {0.1, 0.9}});
  const std::vector<std::array<int, 3>> faces{{0, 1, 2}};
  const std::vector<double> attrs(3, 0.73);
  const auto [fb, tape] = rasterize(sv, faces, attrs, 1, SoftConfig<double>{},
                                    32, 32);
  (void)tape;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      if (fb.face_id[y * 32 + x] != kNoFace)
        CHECK(fb.attr.at(y, x, 0) == 0.73);  // exact in double
}

TEST_CASE("rasterize rejects empty input") {
  const auto sv = make_sv({{0, 0}, {1, 0}, {0, 1}});
  CHECK_THROWS_AS(rasterize(sv, {}, std::vector<double>{}, 1,
                            SoftConfig<double>{}, 8, 8),
                  EmptyFaceList);
  CHECK_THROWS_AS(rasterize(sv, {{0, 1, 2}}, std::vector<double>(3, 0.0), 1,
                            SoftConfig<double>{}, 0, 8),
                  ZeroResolution);
}

TEST_CASE("rasterization is bit-deterministic across worker counts") {
  Rng rng(31337);
  const int n_faces = 30;
  const auto sv = oracles::random_screen_vertices<double>(rng, n_faces * 3);
  std::vector<std::array<int, 3>> faces(n_faces);
  for (int f = 0; f < n_faces; ++f) faces[f] = {3 * f, 3 * f + 1, 3 * f + 2};
  std::vector<double> attrs(sv.ndc.size() * 3);
  for (auto& a : attrs) a = rng.uniform();
  SoftConfig<double> soft;
  soft.delta = 1e-3;

  Image<double> g_attr(64, 64, 3), g_alpha(64, 64, 1);
  for (auto& g : g_attr.data) g = rng.normal();
  for (auto& g : g_alpha.data) g = rng.normal();

  const auto [fb1, tape1] = rasterize(sv, faces, attrs, 3, soft, 64, 64, 1);
  const auto grads1 = rasterize_backward(g_attr, g_alpha, tape1, 1);
  for (const int workers : {4, 8}) {
    const auto [fb, tape] = rasterize(sv, faces, attrs, 3, soft, 64, 64, workers);
    CHECK(fb.attr.data == fb1.attr.data);
    CHECK(fb.alpha.data == fb1.alpha.data);
    CHECK(fb.depth.data == fb1.depth.data);
    CHECK(fb.face_id == fb1.face_id);
    CHECK(fb.bary.data == fb1.bary.data);
    const auto grads = rasterize_backward(g_attr, g_alpha, tape, workers);
    CHECK(grads.attrs == grads1.attrs);
    REQUIRE(grads.ndc.size() == grads1.ndc.size());
    for (std::size_t i = 0; i < grads.ndc.size(); ++i) {
      CHECK(grads.ndc[i].x == grads1.ndc[i].x);
      CHECK(grads.ndc[i].y == grads1.ndc[i].y);
    }
  }
}
