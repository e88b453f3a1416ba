#include "tssr/error.hpp"
#include "tssr/geometry.hpp"
#include "tssr/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

using namespace tssr;

namespace {


Mesh triangle(Eigen::Vector3d a, Eigen::Vector3d b, Eigen::Vector3d c) {
  Mesh m;
  m.vertices.resize(3, 3);
  m.vertices << a.transpose(), b.transpose(), c.transpose();
  m.faces.resize(1, 3);
  m.faces << 0, 1, 2;
  return m;
}

// Independent test-side canonicalization: sort faces as coordinate triples.
std::vector<std::array<int, 9>> face_coords(const QuantizedMesh& q) {
  std::vector<std::array<int, 9>> out;
  for (Eigen::Index f = 0; f < q.faces.rows(); ++f) {
    std::array<int, 9> a{};
    for (int s = 0; s < 3; ++s)
      for (int j = 0; j < 3; ++j) a[3 * s + j] = q.vertices(q.faces(f, s), j);
    out.push_back(a);
  }
  return out;
}

}  // namespace

TEST_CASE("normalize: axis-aligned cube lands centered with half-epsilon margins") {
  Mesh m;
  m.vertices.resize(8, 3);
  for (int i = 0; i < 8; ++i) m.vertices.row(i) << (i & 1) + 3.0, ((i >> 1) & 1) - 7.0, ((i >> 2) & 1) * 1.0;
  m.faces.resize(1, 3);
  m.faces << 0, 1, 2;
  m.vertices *= 4.0;  // scale and translation must not matter
  const Mesh n = normalize_mesh(m);
  const double delta = kNormalizeEpsilon / 2;
  for (int j = 0; j < 3; ++j) {
    CHECK(n.vertices.col(j).minCoeff() == doctest::Approx(delta).epsilon(1e-12));
    CHECK(n.vertices.col(j).maxCoeff() == doctest::Approx(1.0 - delta).epsilon(1e-12));
  }
}

TEST_CASE("normalize: elongated box keeps aspect") {
  const Mesh n = normalize_mesh(gen_synthetic({SyntheticKind::Box, {2.0, 1.0, 1.0}, 0}));
  const Eigen::RowVector3d ext = n.vertices.colwise().maxCoeff() - n.vertices.colwise().minCoeff();
  const Eigen::RowVector3d mid = 0.5 * (n.vertices.colwise().maxCoeff() + n.vertices.colwise().minCoeff());
  // rotation is about z, so z keeps its unit extent: at most half the longest edge
  CHECK(ext.maxCoeff() == doctest::Approx(1.0 - kNormalizeEpsilon).epsilon(1e-12));
  CHECK(ext(2) <= (1.0 - kNormalizeEpsilon) / 2 + 1e-12);
  for (int j = 0; j < 3; ++j) CHECK(mid(j) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("normalize: hand-built 2x1x1 box without rotation") {
  Mesh m;
  m.vertices.resize(4, 3);
  m.vertices << 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1;
  m.faces.resize(2, 3);
  m.faces << 0, 1, 2, 0, 1, 3;
  const Mesh n = normalize_mesh(m);
  const double s = (1.0 - kNormalizeEpsilon) / 2.0;
  // x spans [0.5 - s, 0.5 + s]; y and z span [0.5 - s/2, 0.5 + s/2]
  CHECK(n.vertices(0, 0) == doctest::Approx(0.5 - s));
  CHECK(n.vertices(1, 0) == doctest::Approx(0.5 + s));
  CHECK(n.vertices(2, 1) == doctest::Approx(0.5 + s / 2));
  CHECK(n.vertices(0, 1) == doctest::Approx(0.5 - s / 2));
}

TEST_CASE("normalize: idempotent up to epsilon and inside the unit cube") {
  for (const auto& spec : make_corpus_specs(40, 11)) {
    const Mesh a = normalize_mesh(gen_synthetic(spec));
    const Mesh b = normalize_mesh(a);
    CHECK(a.vertices.minCoeff() >= 0.0);
    CHECK(a.vertices.maxCoeff() < 1.0);
    CHECK((a.vertices - b.vertices).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("normalize: degenerate extent is rejected") {
  Mesh m;
  m.vertices = Eigen::MatrixX3d::Ones(3, 3);
  m.faces.resize(0, 3);
  CHECK_THROWS_WITH_AS(normalize_mesh(m), "degenerate extent", ValidationError);
}

TEST_CASE("quantize: bin rule") {
  Mesh m = triangle({0.0, 0.5, 0.2}, {0.999, 0.3, 0.2}, {0.4, 0.9, 0.7});
  const QuantizedMesh q = quantize(m, 1024);
  CHECK(q.vertices(0, 0) == 0);
  CHECK(q.vertices(0, 1) == 512);
  CHECK(q.vertices(1, 0) == static_cast<int>(std::floor(0.999 * 1024)));
  CHECK_THROWS_AS(quantize(m, 1), ValidationError);
}

TEST_CASE("quantize: nearby vertices merge and the collapsed face drops") {
  Mesh m;
  m.vertices.resize(4, 3);
  m.vertices << 0.1001, 0.5, 0.5, 0.1002, 0.5, 0.5, 0.9, 0.1, 0.1, 0.3, 0.8, 0.2;
  m.faces.resize(2, 3);
  m.faces << 0, 1, 2, 0, 2, 3;
  const QuantizedMesh q = quantize(m, 64);
  CHECK(static_cast<int>(std::floor(0.1001 * 64)) == 6);
  CHECK(q.vertices.rows() == 3);
  CHECK(q.faces.rows() == 1);
  CHECK(q.vertices(q.faces(0, 0), 0) == 6);
}

TEST_CASE("dequantize: bin centers") {
  QuantizedMesh q;
  q.resolution = 1024;
  q.vertices.resize(3, 3);
  q.vertices << 0, 0, 0, 1023, 1023, 1023, 5, 9, 1;
  q.faces.resize(1, 3);
  q.faces << 0, 1, 2;
  const Mesh m = dequantize(q);
  CHECK(m.vertices(0, 0) == 0.00048828125);
  CHECK(m.vertices(1, 0) == 0.99951171875);
  CHECK(quantize(m, 1024) == q);
}

TEST_CASE("quantize(dequantize(q)) is a fixpoint across resolutions") {
  Rng rng(5);
  for (int res : {2, 7, 64, 1024}) {
    QuantizedMesh q;
    q.resolution = res;
    q.vertices.resize(30, 3);
    // distinct triples: walk a strided sequence through the bin cube
    for (int i = 0; i < 30; ++i) {
      const int code = static_cast<int>((static_cast<long long>(i) * 7919) % (static_cast<long long>(res) * res * res));
      q.vertices.row(i) << code % res, (code / res) % res, code / (res * res);
    }
    const int nv = static_cast<int>(std::min<long long>(30, static_cast<long long>(res) * res * res));
    q.vertices.conservativeResize(nv, 3);
    q.faces.resize(nv - 2, 3);
    for (int f = 0; f < nv - 2; ++f) q.faces.row(f) << f, f + 1, f + 2;
    CHECK(quantize(dequantize(q), res) == q);
  }
}

TEST_CASE("canonical_order: face rotation rule") {
  QuantizedMesh q;
  q.resolution = 16;
  q.vertices.resize(10, 3);
  for (int i = 0; i < 10; ++i) q.vertices.row(i) << 0, 0, i;  // already sorted by z
  q.faces.resize(1, 3);
  q.faces << 5, 2, 9;
  const QuantizedMesh c = canonical_order(q);
  // unreferenced vertices are removed: 2 -> 0, 5 -> 1, 9 -> 2
  REQUIRE(c.faces.rows() == 1);
  CHECK(c.faces(0, 0) == 0);
  CHECK(c.faces(0, 1) == 2);
  CHECK(c.faces(0, 2) == 1);
  CHECK(c.vertices(c.faces(0, 0), 2) == 2);
  CHECK(c.vertices(c.faces(0, 1), 2) == 9);
  CHECK(c.vertices(c.faces(0, 2), 2) == 5);
}

TEST_CASE("canonical_order: idempotent and permutation invariant") {
  Rng rng(17);
  for (const auto& spec : make_corpus_specs(30, 3)) {
    const QuantizedMesh q = quantize(normalize_mesh(gen_synthetic(spec)));
    const QuantizedMesh c = canonical_order(q);
    CHECK(canonical_order(c) == c);

    // shuffle vertices, faces and rotate each face
    std::vector<int> perm(static_cast<std::size_t>(q.vertices.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    QuantizedMesh s = q;
    for (Eigen::Index v = 0; v < q.vertices.rows(); ++v) s.vertices.row(perm[static_cast<std::size_t>(v)]) = q.vertices.row(v);
    std::vector<int> fperm(static_cast<std::size_t>(q.faces.rows()));
    std::iota(fperm.begin(), fperm.end(), 0);
    for (std::size_t i = fperm.size(); i > 1; --i) std::swap(fperm[i - 1], fperm[rng.below(i)]);
    for (Eigen::Index f = 0; f < q.faces.rows(); ++f) {
      const int r = static_cast<int>(rng.below(3));
      for (int j = 0; j < 3; ++j)
        s.faces(fperm[static_cast<std::size_t>(f)], j) = perm[static_cast<std::size_t>(q.faces(f, (j + r) % 3))];
    }
    CHECK(canonical_order(s) == c);
  }
}

TEST_CASE("canonical_order: vertex order is (z, y, x) and faces ascend") {
  const QuantizedMesh c = canonical_order(quantize(normalize_mesh(gen_synthetic({SyntheticKind::Icosphere, {1}, 4}))));
  for (Eigen::Index v = 1; v < c.vertices.rows(); ++v) {
    const auto a = c.vertices.row(v - 1), b = c.vertices.row(v);
    CHECK(std::make_tuple(a(2), a(1), a(0)) < std::make_tuple(b(2), b(1), b(0)));
  }
  for (Eigen::Index f = 0; f < c.faces.rows(); ++f) {
    CHECK(c.faces(f, 0) < c.faces(f, 1));
    CHECK(c.faces(f, 0) < c.faces(f, 2));
    if (f > 0) {
      const auto a = c.faces.row(f - 1), b = c.faces.row(f);
      CHECK(std::make_tuple(a(0), a(1), a(2)) < std::make_tuple(b(0), b(1), b(2)));
    }
  }
  // geometry is preserved as a multiset of coordinate faces (up to rotation)
  const QuantizedMesh q = quantize(normalize_mesh(gen_synthetic({SyntheticKind::Icosphere, {1}, 4})));
  CHECK(face_coords(c).size() == face_coords(q).size());
}

TEST_CASE("sample_surface: single triangle") {
  const Mesh m = triangle({0, 0, 0}, {1, 0, 0}, {0, 1, 0});
  const PointCloud pc = sample_surface(m, 3, 42);
  REQUIRE(pc.points.rows() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(pc.points(i, 2) == 0.0);
    CHECK(pc.points(i, 0) >= 0.0);
    CHECK(pc.points(i, 1) >= 0.0);
    CHECK(pc.points(i, 0) + pc.points(i, 1) <= 1.0 + 1e-12);
    CHECK(pc.normals(i, 2) == doctest::Approx(1.0));
  }
}

TEST_CASE("sample_surface: deterministic per seed") {
  const Mesh m = gen_synthetic({SyntheticKind::Icosphere, {2}, 9});
  const PointCloud a = sample_surface(m, 500, 7), b = sample_surface(m, 500, 7), c = sample_surface(m, 500, 8);
  CHECK(a.points == b.points);
  CHECK(a.normals == b.normals);
  CHECK(a.points != c.points);
}

TEST_CASE("sample_surface: area weighting within three sigma") {
  // areas 1 and 3
  Mesh m;
  m.vertices.resize(6, 3);
  m.vertices << 0, 0, 0, 2, 0, 0, 0, 1, 0, 10, 0, 0, 16, 0, 0, 10, 1, 0;
  m.faces.resize(2, 3);
  m.faces << 0, 1, 2, 3, 4, 5;
  const Eigen::VectorXd areas = face_areas(m);
  CHECK(areas(0) == doctest::Approx(1.0));
  CHECK(areas(1) == doctest::Approx(3.0));
  const PointCloud pc = sample_surface(m, 4000, 1);
  int second = 0;
  for (Eigen::Index i = 0; i < pc.points.rows(); ++i) second += pc.points(i, 0) >= 10.0 - 1e-12;
  const double sigma = std::sqrt(4000 * 0.75 * 0.25);
  CHECK(std::abs(second - 3000) <= 3 * sigma);
}

TEST_CASE("sample_surface: zero area is rejected") {
  Mesh m = triangle({0, 0, 0}, {1, 0, 0}, {2, 0, 0});
  CHECK_THROWS_AS(sample_surface(m, 10, 0), ValidationError);
}

TEST_CASE("gen_synthetic: face counts and determinism") {
  const Mesh box = gen_synthetic({SyntheticKind::Box, {1, 2, 3}, 1});
  CHECK(box.faces.rows() == 12);
  CHECK(box.vertices.rows() == 8);
  CHECK(gen_synthetic({SyntheticKind::Icosphere, {1}, 1}).faces.rows() == 80);
  CHECK(gen_synthetic({SyntheticKind::Pyramid, {5, 1.0}, 1}).faces.rows() == 8);
  CHECK(gen_synthetic({SyntheticKind::Prism, {6, 1.0}, 1}).faces.rows() == 20);
  const Mesh g1 = gen_synthetic({SyntheticKind::GridRelief, {4, 4, 0.3}, 99});
  const Mesh g2 = gen_synthetic({SyntheticKind::GridRelief, {4, 4, 0.3}, 99});
  const Mesh g3 = gen_synthetic({SyntheticKind::GridRelief, {4, 4, 0.3}, 98});
  CHECK(g1.faces.rows() == 32);
  CHECK(g1.vertices == g2.vertices);
  CHECK(g1.vertices != g3.vertices);
  CHECK_THROWS_AS(parse_kind("torus"), ValidationError);
}

TEST_CASE("gen_synthetic: closed kinds are watertight") {
  for (const auto& spec : make_corpus_specs(60, 21)) {
    if (spec.kind == SyntheticKind::GridRelief) continue;
    const Mesh m = gen_synthetic(spec);
    std::map<std::pair<int, int>, int> edges;
    for (Eigen::Index f = 0; f < m.faces.rows(); ++f)
      for (int j = 0; j < 3; ++j) edges[{m.faces(f, j), m.faces(f, (j + 1) % 3)}]++;
    for (const auto& [e, n] : edges) {
      CHECK(n == 1);
      CHECK(edges.count({e.second, e.first}) == 1);
    }
  }
}

TEST_CASE("manifest: specs round-trip and face counts stay in range") {
  const auto specs = make_corpus_specs(200, 5, 4, 128);
  for (const auto& s : specs) {
    const auto faces = gen_synthetic(s).faces.rows();
    CHECK(faces >= 4);
    CHECK(faces <= 128);
  }
  const auto back = read_manifest("# comment\n" + write_manifest(specs));
  REQUIRE(back.size() == specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    CHECK(back[i].to_line() == specs[i].to_line());
    CHECK(gen_synthetic(back[i]).vertices == gen_synthetic(specs[i]).vertices);
  }
  CHECK_THROWS_AS(read_manifest("box 1 x 1\n"), ValidationError);
  CHECK_THROWS_AS(read_manifest("cone 1 2 3\n"), ValidationError);
  CHECK_THROWS_AS(read_manifest("box 1 1 1 -4\n"), ValidationError);
}

TEST_CASE("obj: basic records") {
  const Mesh m = read_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  CHECK(m.vertices.rows() == 3);
  CHECK(m.faces.rows() == 1);
}

TEST_CASE("obj: quad fan triangulation and negative indices") {
  const Mesh m = read_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\nf -4 -3 -1\n");
  REQUIRE(m.faces.rows() == 3);
  CHECK(m.faces.row(0) == Eigen::RowVector3i(0, 1, 2));
  CHECK(m.faces.row(1) == Eigen::RowVector3i(0, 2, 3));
  CHECK(m.faces.row(2) == Eigen::RowVector3i(0, 1, 3));
}

TEST_CASE("obj: slash forms, normals and comments") {
  Eigen::MatrixX3d normals;
  const Mesh m = read_obj("# c\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvt 0 0\nf 1/1/1 2//1 3/1\n", &normals);
  CHECK(m.faces.rows() == 1);
  CHECK(normals.rows() == 1);
}

TEST_CASE("obj: errors carry line numbers") {
  CHECK_THROWS_WITH_AS(read_obj("v 0 0 0\nv 1 zero 0\n"), doctest::Contains("line 2"), ValidationError);
  CHECK_THROWS_WITH_AS(read_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n"), doctest::Contains("line 4"), ValidationError);
}

TEST_CASE("obj: write then read reproduces corpus geometry") {
  for (const auto& spec : make_corpus_specs(50, 8)) {
    const Mesh m = gen_synthetic(spec);
    const Mesh back = read_obj(write_obj(m));
    CHECK(back.faces == m.faces);
    CHECK((back.vertices - m.vertices).cwiseAbs().maxCoeff() <= 1e-7 * std::max(1.0, m.vertices.cwiseAbs().maxCoeff()));
    const Mesh again = read_obj(write_obj(back));
    CHECK(again.vertices == back.vertices);
  }
}
