#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "diffraster/losses.hpp"
#include "oracles.hpp"

using namespace diffraster;

TEST_CASE("iou_loss examples") {
  Image<double> a(4, 4, 1), b(4, 4, 1);
  for (int i = 0; i < 8; ++i) a.data[i] = 1.0;

  const auto [same, g_same] = iou_loss(a, a);
  (void)g_same;
  CHECK(same == Catch::Approx(0.0).margin(1e-12));

  for (int i = 8; i < 16; ++i) b.data[i] = 1.0;  // disjoint
  const auto [disjoint, g_disjoint] = iou_loss(a, b);
  (void)g_disjoint;
  CHECK(disjoint == Catch::Approx(1.0));

  Image<double> ones(4, 4, 1, 1.0), halves(4, 4, 1, 0.5);
  const auto [half, g_half] = iou_loss(ones, halves);
  (void)g_half;
  CHECK(half == Catch::Approx(0.5));

  Image<double> zeros(4, 4, 1);
  CHECK_THROWS_AS(iou_loss(zeros, zeros), EmptyUnion);
  CHECK_THROWS_AS(iou_loss(a, Image<double>(2, 2, 1)), ShapeMismatch);
}

TEST_CASE("iou_loss stays in [0,1] and is symmetric") {
  Rng rng(71);
  for (int trial = 0; trial < 30; ++trial) {
    Image<double> s(6, 6, 1), t(6, 6, 1);
    for (auto& v : s.data) v = rng.uniform();
    for (auto& v : t.data) v = rng.uniform();
    const auto [ab, g1] = iou_loss(s, t);
    const auto [ba, g2] = iou_loss(t, s);
    (void)g1;
    (void)g2;
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(ab == Catch::Approx(ba).margin(1e-12));
  }
}

TEST_CASE("iou_loss gradient matches finite differences") {
  Rng rng(72);
  Image<double> target(5, 5, 1), pred(5, 5, 1);
  for (auto& v : target.data) v = rng.uniform();
  for (auto& v : pred.data) v = rng.uniform(0.1, 0.9);
  const auto [loss, grad] = iou_loss(target, pred);
  (void)loss;
  const double h = 1e-6;
  for (int check = 0; check < 10; ++check) {
    const std::size_t i = rng.below(pred.data.size());
    auto plus = pred, minus = pred;
    plus.data[i] += h;
    minus.data[i] -= h;
    const double numeric =
        (iou_loss(target, plus).first - iou_loss(target, minus).first) / (2 * h);
    CHECK(oracles::close_rel(grad.data[i], numeric, 1e-4));
  }
}

TEST_CASE("l1_loss examples") {
  Image<double> a(3, 3, 3), b(3, 3, 3);
  Rng rng(73);
  for (auto& v : a.data) v = rng.uniform();

  const auto [zero, g0] = l1_loss(a, a);
  CHECK(zero == 0.0);
  for (const double g : g0.data) CHECK(g == 0.0);

  b = a;
  for (auto& v : b.data) v += 0.1;
  const auto [shifted, g1] = l1_loss(a, b);
  CHECK(shifted == Catch::Approx(0.1));
  const double unit = 1.0 / static_cast<double>(a.data.size());
  for (const double g : g1.data) CHECK(g == Catch::Approx(unit));

  // Gradient elements live in {-1/n, 0, +1/n}.
  Image<double> mixed = a;
  mixed.data[0] += 0.3;
  mixed.data[1] -= 0.2;
  const auto [l, g2] = l1_loss(a, mixed);
  (void)l;
  for (const double g : g2.data)
    CHECK((g == unit || g == -unit || g == 0.0));
}

TEST_CASE("smoothness_loss examples") {
  // Two coplanar triangles: identical normals, zero loss.
  const auto flat = build_mesh<double>(
      {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}}, {{0, 1, 2}, {1, 3, 2}});
  const auto [flat_loss, flat_grad] = smoothness_loss(flat, adjacency(flat));
  CHECK(flat_loss == Catch::Approx(0.0).margin(1e-12));
  for (const auto& g : flat_grad) CHECK(norm(g) < 1e-9);

  // Fold at 90 degrees: 1 - cos(90) = 1.
  const auto folded = build_mesh<double>(
      {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 0, 1}}, {{0, 1, 2}, {1, 0, 3}});
  const auto [fold_loss, fold_grad] = smoothness_loss(folded, adjacency(folded));
  (void)fold_grad;
  CHECK(fold_loss == Catch::Approx(1.0));
}

TEST_CASE("smoothness_loss gradient matches finite differences") {
  const auto mesh = oracles::bumpy_sphere<double>(0, 19);  // 20 faces
  const auto adj = adjacency(mesh);
  const auto [loss, grad] = smoothness_loss(mesh, adj);
  (void)loss;
  Rng rng(20);
  const double h = 1e-6;
  for (int check = 0; check < 25; ++check) {
    const std::size_t v = rng.below(mesh.vertices.size());
    const int axis = static_cast<int>(rng.below(3));
    auto plus = mesh, minus = mesh;
    plus.vertices[v][axis] += h;
    minus.vertices[v][axis] -= h;
    const double numeric = (smoothness_loss(plus, adj).first -
                            smoothness_loss(minus, adj).first) /
                           (2 * h);
    CHECK(oracles::close_rel(grad[v][axis], numeric, 1e-4));
  }
}

TEST_CASE("laplacian_loss examples and oracle") {
  // A vertex at the centroid of its neighbors contributes nothing.
  const auto fan = build_mesh<double>(
      {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}},
      {{0, 1, 2}, {0, 2, 3}, {0, 3, 4}, {0, 4, 1}});
  const auto adj = adjacency(fan);
  // Direct evaluation of the formula as an independent check.
  auto reference = [](const Mesh<double>& m, const Adjacency& a) {
    double total = 0;
    for (std::size_t v = 0; v < m.vertices.size(); ++v) {
      Vec3<double> mean{};
      for (const int u : a.vertex_neighbors[v]) mean += m.vertices[u];
      mean = mean / double(a.vertex_neighbors[v].size());
      const auto d = m.vertices[v] - mean;
      total += dot(d, d);
    }
    return total / double(m.vertices.size());
  };
  const auto [loss, grad] = laplacian_loss(fan, adj);
  CHECK(loss == Catch::Approx(reference(fan, adj)));
  // Center vertex 0 sits at the centroid of its 4 neighbors: its own term is
  // zero, so only its appearances in the rim terms contribute.
  Vec3<double> mean{};
  for (const int u : adj.vertex_neighbors[0]) mean += fan.vertices[u];
  CHECK(norm(fan.vertices[0] - mean / 4.0) < 1e-12);

  // Regular octahedron against the direct formula.
  const auto octa = build_mesh<double>(
      {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}},
      {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
       {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}});
  const auto oadj = adjacency(octa);
  const auto [oloss, ograd] = laplacian_loss(octa, oadj);
  CHECK(oloss == Catch::Approx(reference(octa, oadj)));

  // Translation invariance: per-vertex gradients sum to zero.
  Vec3<double> sum{};
  for (const auto& g : ograd) sum += g;
  CHECK(norm(sum) < 1e-9);
  Vec3<double> sum2{};
  for (const auto& g : grad) sum2 += g;
  CHECK(norm(sum2) < 1e-9);

  // Isolated vertex rejection.
  const auto lonely = build_mesh<double>(
      {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {9, 9, 9}}, {{0, 1, 2}});
  CHECK_THROWS_AS(laplacian_loss(lonely, adjacency(lonely)), IsolatedVertex);
}

TEST_CASE("laplacian_loss gradient matches finite differences") {
  const auto mesh = oracles::bumpy_sphere<double>(1, 23);
  const auto adj = adjacency(mesh);
  const auto [loss, grad] = laplacian_loss(mesh, adj);
  (void)loss;
  Rng rng(24);
  const double h = 1e-6;
  for (int check = 0; check < 25; ++check) {
    const std::size_t v = rng.below(mesh.vertices.size());
    const int axis = static_cast<int>(rng.below(3));
    auto plus = mesh, minus = mesh;
    plus.vertices[v][axis] += h;
    minus.vertices[v][axis] -= h;
    const double numeric =
        (laplacian_loss(plus, adj).first - laplacian_loss(minus, adj).first) /
        (2 * h);
    CHECK(oracles::close_rel(grad[v][axis], numeric, 1e-4));
  }
}

TEST_CASE("smoothness gradient is translation invariant") {
  const auto mesh = oracles::bumpy_sphere<double>(1, 29);
  const auto [loss, grad] = smoothness_loss(mesh, adjacency(mesh));
  (void)loss;
  Vec3<double> sum{};
  for (const auto& g : grad) sum += g;
  CHECK(norm(sum) < 1e-9);
}

TEST_CASE("combined_loss weighting") {
  const LossWeights<double> paper_defaults{};  // col=1, sm=0.001, lap=0.01
  CHECK(paper_defaults.col == 1.0);
  CHECK(paper_defaults.sm == 0.001);
  CHECK(paper_defaults.lap == 0.01);

  const auto zero = combined_loss(LossComponents<double>{}, paper_defaults);
  CHECK(zero.total == 0.0);

  const LossComponents<double> parts{0.3, 0.2, 4.0, 1.5};
  const auto r = combined_loss(parts, paper_defaults);
  CHECK(std::abs(r.total - (0.3 + 1.0 * 0.2 + 0.001 * 4.0 + 0.01 * 1.5)) < 1e-9);

  LossWeights<double> no_col = paper_defaults;
  no_col.col = 0.0;
  const auto r2 = combined_loss(parts, no_col);
  CHECK(std::abs(r2.total - (0.3 + 0.001 * 4.0 + 0.01 * 1.5)) < 1e-9);

  LossComponents<double> bad = parts;
  bad.sm = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(combined_loss(bad, paper_defaults), NonFiniteComponent);
}
