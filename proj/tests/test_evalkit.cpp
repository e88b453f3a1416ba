#include "tssr/error.hpp"
#include "tssr/evalkit.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace tssr;

namespace {

PointCloud cloud(std::initializer_list<std::array<double, 3>> pts) {
  PointCloud pc;
  pc.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
  pc.normals.resize(static_cast<Eigen::Index>(pts.size()), 3);
  Eigen::Index i = 0;
  for (const auto& p : pts) {
    pc.points.row(i) << p[0], p[1], p[2];
    pc.normals.row(i++) << 0, 0, 1;
  }
  return pc;
}

std::vector<oracle::Point> to_points(const Eigen::MatrixX3d& m) {
  std::vector<oracle::Point> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = {m(i, 0), m(i, 1), m(i, 2)};
  return out;
}

/// Clustered cloud so that many cells are empty and many hold several points.
PointCloud clustered(int n, std::uint64_t seed) {
  PointCloud pc = fixture::random_cloud(n, seed);
  Rng rng(seed + 1);
  for (Eigen::Index i = 0; i < n; ++i)
    if (rng.bernoulli(0.5)) pc.points.row(i) = 0.05 * pc.points.row(i) + Eigen::RowVector3d(0.2, 0.7, 0.1);
  return pc;
}

}  // namespace

TEST_CASE("single-pair metrics") {
  const PointCloud a = cloud({{0, 0, 0}});
  const PointCloud b = cloud({{1, 0, 0}});
  CHECK(hausdorff(a, b) == 1.0);
  CHECK(chamfer(a, b, ChamferOrder::L1) == 1.0);
  const MetricReport r = compare_clouds(a, b, 0.02);
  CHECK(r.cd_l2 == 1000.0);
  CHECK(r.f1 == 0.0);
  CHECK(r.nc == 1.0);
}

TEST_CASE("self comparison") {
  const PointCloud a = fixture::random_cloud(300, 1);
  const MetricReport r = compare_clouds(a, a, 0.02);
  CHECK(r.hd == 0.0);
  CHECK(r.cd_l1 == 0.0);
  CHECK(r.cd_l2 == 0.0);
  CHECK(r.nc == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.f1 == 1.0);
}

TEST_CASE("grid nearest neighbour equals brute force exactly") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PointCloud ref = clustered(50 + 45 * static_cast<int>(seed), 10 + seed);
    const PointCloud qry = clustered(500, 100 + seed);
    const PointGrid grid(ref.points);
    const auto got = grid.nearest_all(qry.points);
    const auto rp = to_points(ref.points);
    const auto qp = to_points(qry.points);
    for (std::size_t i = 0; i < qp.size(); ++i) {
      const std::size_t j = oracle::nearest(qp[i], rp);
      CHECK(got.index[i] == static_cast<Eigen::Index>(j));
      CHECK(got.sq_dist[i] == oracle::sq_dist(qp[i], rp[j]));
    }
  }
}

TEST_CASE("grid ties go to the lower index") {
  const PointCloud ref = cloud({{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {1, 0, 0}});
  const PointGrid grid(ref.points);
  CHECK(grid.nearest(Eigen::Vector3d(0, 0, 0)).first == 0);
  CHECK(grid.nearest(Eigen::Vector3d(2, 0, 0)).first == 0);
}

TEST_CASE("metrics match the brute-force reference") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const PointCloud a = clustered(200, 30 + seed);
    const PointCloud b = fixture::random_cloud(200 + static_cast<int>(seed) * 50, 40 + seed);
    const auto ap = to_points(a.points), bp = to_points(b.points);
    const auto an = to_points(a.normals), bn = to_points(b.normals);
    const MetricReport r = compare_clouds(a, b, 0.05);
    CHECK(std::abs(r.hd - oracle::hausdorff(ap, bp)) < 1e-12);
    CHECK(std::abs(r.cd_l1 - oracle::chamfer(ap, bp, false)) < 1e-12);
    CHECK(std::abs(r.cd_l2 - 1e3 * oracle::chamfer(ap, bp, true)) < 1e-12);
    CHECK(std::abs(r.nc - oracle::normal_consistency(ap, an, bp, bn)) < 1e-12);
    CHECK(std::abs(r.f1 - oracle::f_score(ap, bp, 0.05)) < 1e-12);
    CHECK(hausdorff(a, b) == r.hd);
    CHECK(chamfer(a, b, ChamferOrder::L1) == r.cd_l1);
    CHECK(normal_consistency(a, b) == r.nc);
    CHECK(f_score(a, b, 0.05) == r.f1);
  }
}

TEST_CASE("normal consistency hand cases") {
  PointCloud a = fixture::random_cloud(50, 2);
  PointCloud flipped = a;
  flipped.normals *= -1.0;
  CHECK(normal_consistency(a, flipped) == doctest::Approx(1.0).epsilon(1e-12));

  // A = {p0, p1}, B = {q0}; normals at 0, 60 and 90 degrees to z
  PointCloud x = cloud({{0, 0, 0}, {1, 0, 0}});
  x.normals.row(1) << std::sin(M_PI / 3), 0, std::cos(M_PI / 3);
  PointCloud y = cloud({{0.1, 0, 0}});
  y.normals.row(0) << 1, 0, 0;
  // A->B: |n0.m| = 0, |n1.m| = sin 60; B->A: nearest is p0, |m.n0| = 0
  const double expected = 0.5 * ((0.0 + std::sin(M_PI / 3)) / 2 + 0.0);
  CHECK(std::abs(normal_consistency(x, y) - expected) < 1e-12);
}

TEST_CASE("f-score") {
  const PointCloud a = cloud({{0, 0, 0}, {1, 0, 0}});
  const PointCloud b = cloud({{0, 0, 0}, {1, 0, 0}, {5, 5, 5}, {9, 9, 9}});
  // every point of a is matched, half of b is
  CHECK(std::abs(f_score(a, b, 0.1) - 2.0 / 3.0) < 1e-15);
  CHECK(f_score(cloud({{0, 0, 0}}), cloud({{1, 0, 0}}), 0.5) == 0.0);
  CHECK(f_score(cloud({{0, 0, 0}}), cloud({{0.5, 0, 0}}), 0.5) == 1.0);  // threshold inclusive
  CHECK_THROWS_AS(f_score(a, b, 0.0), ValidationError);
}

TEST_CASE("symmetry and rigid invariance") {
  const PointCloud a = clustered(150, 50);
  const PointCloud b = fixture::random_cloud(120, 51);
  const MetricReport ab = compare_clouds(a, b, 0.1), ba = compare_clouds(b, a, 0.1);
  CHECK(ab.hd == ba.hd);
  CHECK(std::abs(ab.cd_l1 - ba.cd_l1) < 1e-15);
  CHECK(std::abs(ab.nc - ba.nc) < 1e-15);
  CHECK(std::abs(ab.f1 - ba.f1) < 1e-15);

  const Eigen::Matrix3d rot = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  const Eigen::RowVector3d shift(0.3, -2.0, 5.0);
  auto move = [&](PointCloud pc) {
    pc.points = (pc.points * rot.transpose()).rowwise() + shift;
    pc.normals = pc.normals * rot.transpose();
    return pc;
  };
  const MetricReport m = compare_clouds(move(a), move(b), 0.1);
  CHECK(std::abs(m.hd - ab.hd) < 1e-9);
  CHECK(std::abs(m.cd_l1 - ab.cd_l1) < 1e-9);
  CHECK(std::abs(m.cd_l2 - ab.cd_l2) < 1e-9);
  CHECK(std::abs(m.nc - ab.nc) < 1e-9);
  CHECK(std::abs(m.f1 - ab.f1) < 1e-9);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(hausdorff(PointCloud{}, cloud({{0, 0, 0}})), ValidationError);
  PointCloud no_normals = cloud({{0, 0, 0}});
  no_normals.normals.resize(0, 3);
  CHECK_THROWS_AS(normal_consistency(no_normals, cloud({{0, 0, 0}})), ValidationError);
}

TEST_CASE("mesh evaluation and report formats") {
  const Mesh m = normalize_mesh(gen_synthetic({SyntheticKind::Icosphere, {1}, 3}));
  EvalConfig cfg;
  cfg.samples = 2000;
  cfg.seed = 4;
  const MetricReport self = evaluate_meshes(m, m, cfg);
  CHECK(self.hd == 0.0);
  CHECK(self.f1 == 1.0);
  CHECK(self.sample_count == 2000);
  CHECK(self.to_text().find("not comparable") != std::string::npos);
  CHECK(self.to_key_values().find("hd=0\n") == 0);
  Mesh moved = m;
  moved.vertices.col(0).array() += 0.1;
  const MetricReport off = evaluate_meshes(m, moved, cfg);
  CHECK(off.cd_l1 > 0.0);
  CHECK(off.hd <= 0.1 + 1e-12);
  CHECK(off.hd >= 0.05);
}
