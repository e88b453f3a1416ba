#include "tssr/geometry.hpp"

#include "tssr/error.hpp"
#include "tssr/rng.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace tssr {

namespace {

using Triple = std::array<int, 3>;

Triple row_triple(const Eigen::MatrixX3i& m, Eigen::Index r) { return {m(r, 0), m(r, 1), m(r, 2)}; }

bool degenerate(const Triple& f) { return f[0] == f[1] || f[1] == f[2] || f[0] == f[2]; }

Eigen::MatrixX3i to_matrix(const std::vector<Triple>& rows) {
  Eigen::MatrixX3i out(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < 3; ++j) out(static_cast<Eigen::Index>(i), j) = rows[i][j];
  return out;
}

}  // namespace

void Mesh::validate() const {
  require(vertices.allFinite(), "mesh has non-finite coordinates");
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int j = 0; j < 3; ++j) {
      const int idx = faces(f, j);
      require(idx >= 0 && idx < vertices.rows(),
              "face " + std::to_string(f) + " references missing vertex " + std::to_string(idx));
    }
    require(!degenerate(row_triple(faces, f)), "face " + std::to_string(f) + " repeats a vertex index");
  }
}

void QuantizedMesh::validate() const {
  require(resolution >= 2, "resolution must be >= 2");
  require(vertices.size() == 0 || (vertices.minCoeff() >= 0 && vertices.maxCoeff() < resolution),
          "quantized coordinate outside [0, V)");
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int j = 0; j < 3; ++j) {
      const int idx = faces(f, j);
      require(idx >= 0 && idx < vertices.rows(), "face references missing vertex");
    }
    require(!degenerate(row_triple(faces, f)), "face repeats a vertex index");
  }
}

bool QuantizedMesh::operator==(const QuantizedMesh& other) const {
  return resolution == other.resolution && vertices.rows() == other.vertices.rows() &&
         faces.rows() == other.faces.rows() && vertices == other.vertices && faces == other.faces;
}

Mesh normalize_mesh(const Mesh& m) {
  require(m.vertices.rows() > 0, "normalize_mesh: empty mesh");
  require(m.vertices.allFinite(), "normalize_mesh: non-finite coordinates");
  const Eigen::RowVector3d lo = m.vertices.colwise().minCoeff();
  const Eigen::RowVector3d hi = m.vertices.colwise().maxCoeff();
  const double longest = (hi - lo).maxCoeff();
  require(longest > 0.0, "degenerate extent");
  const double scale = (1.0 - kNormalizeEpsilon) / longest;
  const Eigen::RowVector3d mid = 0.5 * (lo + hi);
  Mesh out;
  out.vertices = ((m.vertices.rowwise() - mid) * scale).array() + 0.5;
  out.faces = m.faces;
  return out;
}

QuantizedMesh quantize(const Mesh& m, int resolution) {
  require(resolution >= 2, "quantize: resolution must be >= 2");
  m.validate();
  std::map<Triple, int> index_of;
  std::vector<Triple> verts;
  std::vector<int> remap(static_cast<std::size_t>(m.vertices.rows()));
  for (Eigen::Index v = 0; v < m.vertices.rows(); ++v) {
    Triple bin{};
    for (int j = 0; j < 3; ++j) {
      const double b = std::floor(m.vertices(v, j) * resolution);
      bin[j] = static_cast<int>(std::clamp(b, 0.0, static_cast<double>(resolution - 1)));
    }
    auto [it, inserted] = index_of.try_emplace(bin, static_cast<int>(verts.size()));
    if (inserted) verts.push_back(bin);
    remap[static_cast<std::size_t>(v)] = it->second;
  }
  std::vector<Triple> faces;
  faces.reserve(static_cast<std::size_t>(m.faces.rows()));
  for (Eigen::Index f = 0; f < m.faces.rows(); ++f) {
    Triple t{};
    for (int j = 0; j < 3; ++j) t[j] = remap[static_cast<std::size_t>(m.faces(f, j))];
    if (!degenerate(t)) faces.push_back(t);
  }
  QuantizedMesh q;
  q.vertices = to_matrix(verts);
  q.faces = to_matrix(faces);
  q.resolution = resolution;
  return q;
}

Mesh dequantize(const QuantizedMesh& q) {
  Mesh m;
  m.vertices = (q.vertices.cast<double>().array() + 0.5) / static_cast<double>(q.resolution);
  m.faces = q.faces;
  return m;
}

QuantizedMesh canonical_order(const QuantizedMesh& q) {
  q.validate();
  std::vector<Triple> used;
  used.reserve(static_cast<std::size_t>(q.faces.rows()) * 3);
  for (Eigen::Index f = 0; f < q.faces.rows(); ++f)
    for (int j = 0; j < 3; ++j) used.push_back(row_triple(q.vertices, q.faces(f, j)));
  auto zyx_less = [](const Triple& a, const Triple& b) {
    return std::tie(a[2], a[1], a[0]) < std::tie(b[2], b[1], b[0]);
  };
  std::sort(used.begin(), used.end(), zyx_less);
  used.erase(std::unique(used.begin(), used.end()), used.end());

  auto new_index = [&](int old) {
    const Triple key = row_triple(q.vertices, old);
    return static_cast<int>(std::lower_bound(used.begin(), used.end(), key, zyx_less) - used.begin());
  };

  std::vector<Triple> faces;
  faces.reserve(static_cast<std::size_t>(q.faces.rows()));
  for (Eigen::Index f = 0; f < q.faces.rows(); ++f) {
    Triple t{new_index(q.faces(f, 0)), new_index(q.faces(f, 1)), new_index(q.faces(f, 2))};
    if (degenerate(t)) continue;
    const auto lead = std::min_element(t.begin(), t.end()) - t.begin();
    std::rotate(t.begin(), t.begin() + lead, t.end());
    faces.push_back(t);
  }
  std::sort(faces.begin(), faces.end());
  faces.erase(std::unique(faces.begin(), faces.end()), faces.end());

  QuantizedMesh out;
  out.vertices = to_matrix(used);
  out.faces = to_matrix(faces);
  out.resolution = q.resolution;
  return out;
}

Eigen::VectorXd face_areas(const Mesh& m) {
  Eigen::VectorXd areas(m.faces.rows());
  for (Eigen::Index f = 0; f < m.faces.rows(); ++f) {
    const Eigen::RowVector3d a = m.vertices.row(m.faces(f, 0));
    const Eigen::RowVector3d b = m.vertices.row(m.faces(f, 1));
    const Eigen::RowVector3d c = m.vertices.row(m.faces(f, 2));
    areas(f) = 0.5 * (b - a).cross(c - a).norm();
  }
  return areas;
}

PointCloud sample_surface(const Mesh& m, std::size_t count, std::uint64_t seed) {
  m.validate();
  require(count > 0, "sample_surface: count must be positive");
  const Eigen::VectorXd areas = face_areas(m);
  std::vector<double> cumulative(static_cast<std::size_t>(areas.size()));
  double total = 0.0;
  for (Eigen::Index f = 0; f < areas.size(); ++f) {
    total += areas(f);
    cumulative[static_cast<std::size_t>(f)] = total;
  }
  require(total > 0.0, "sample_surface: zero total area");

  Rng rng(seed);
  PointCloud pc;
  pc.points.resize(static_cast<Eigen::Index>(count), 3);
  pc.normals.resize(static_cast<Eigen::Index>(count), 3);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(count); ++i) {
    const double pick = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    // skip zero-area faces that share a cumulative value with a neighbour
    while (areas(it - cumulative.begin()) <= 0.0 && it + 1 != cumulative.end()) ++it;
    const Eigen::Index f = it - cumulative.begin();
    const Eigen::RowVector3d a = m.vertices.row(m.faces(f, 0));
    const Eigen::RowVector3d b = m.vertices.row(m.faces(f, 1));
    const Eigen::RowVector3d c = m.vertices.row(m.faces(f, 2));
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    pc.points.row(i) = (1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c;
    pc.normals.row(i) = (b - a).cross(c - a).normalized();
  }
  return pc;
}

// --- synthetic corpus -------------------------------------------------------

namespace {

struct Builder {
  std::vector<Eigen::RowVector3d> v;
  std::vector<Triple> f;

  int add(double x, double y, double z) {
    v.emplace_back(x, y, z);
    return static_cast<int>(v.size()) - 1;
  }
  void tri(int a, int b, int c) { f.push_back({a, b, c}); }
  void quad(int a, int b, int c, int d) {
    tri(a, b, c);
    tri(a, c, d);
  }

  Mesh build() const {
    Mesh m;
    m.vertices.resize(static_cast<Eigen::Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) m.vertices.row(static_cast<Eigen::Index>(i)) = v[i];
    m.faces = to_matrix(f);
    return m;
  }
};

double param(const SyntheticSpec& s, std::size_t i, double fallback) {
  return i < s.params.size() ? s.params[i] : fallback;
}

int int_param(const SyntheticSpec& s, std::size_t i, int fallback) {
  const double p = param(s, i, fallback);
  require(p == std::floor(p), std::string(kind_name(s.kind)) + ": integer parameter expected");
  return static_cast<int>(p);
}

Mesh make_box(double sx, double sy, double sz) {
  require(sx > 0 && sy > 0 && sz > 0, "box: extents must be positive");
  Builder b;
  for (int k = 0; k < 8; ++k)
    b.add((k & 1 ? 0.5 : -0.5) * sx, (k & 2 ? 0.5 : -0.5) * sy, (k & 4 ? 0.5 : -0.5) * sz);
  b.quad(0, 2, 3, 1);  // z-
  b.quad(4, 5, 7, 6);  // z+
  b.quad(0, 1, 5, 4);  // y-
  b.quad(2, 6, 7, 3);  // y+
  b.quad(0, 4, 6, 2);  // x-
  b.quad(1, 3, 7, 5);  // x+
  return b.build();
}

void ring(Builder& b, int sides, double z) {
  for (int i = 0; i < sides; ++i) {
    const double a = 2.0 * std::numbers::pi * i / sides;
    b.add(std::cos(a), std::sin(a), z);
  }
}

Mesh make_pyramid(int sides, double height) {
  require(sides >= 3, "pyramid: sides must be >= 3");
  require(height > 0, "pyramid: height must be positive");
  Builder b;
  ring(b, sides, 0.0);
  const int apex = b.add(0.0, 0.0, height);
  for (int i = 0; i < sides; ++i) b.tri(i, (i + 1) % sides, apex);
  for (int i = 1; i + 1 < sides; ++i) b.tri(0, i + 1, i);
  return b.build();
}

Mesh make_prism(int sides, double height) {
  require(sides >= 3, "prism: sides must be >= 3");
  require(height > 0, "prism: height must be positive");
  Builder b;
  ring(b, sides, 0.0);
  ring(b, sides, height);
  for (int i = 0; i < sides; ++i) {
    const int j = (i + 1) % sides;
    b.quad(i, j, sides + j, sides + i);
  }
  for (int i = 1; i + 1 < sides; ++i) {
    b.tri(0, i + 1, i);
    b.tri(sides, sides + i, sides + i + 1);
  }
  return b.build();
}

Mesh make_icosphere(int subdiv) {
  require(subdiv >= 0 && subdiv <= 5, "icosphere: subdivision level must be in [0, 5]");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  Builder b;
  const double raw[12][3] = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                             {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (const auto& p : raw) {
    const Eigen::RowVector3d n = Eigen::RowVector3d(p[0], p[1], p[2]).normalized();
    b.add(n.x(), n.y(), n.z());
  }
  b.f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
         {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
         {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int level = 0; level < subdiv; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int c) {
      const auto key = std::minmax(a, c);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const Eigen::RowVector3d p = (0.5 * (b.v[a] + b.v[c])).normalized();
      const int idx = b.add(p.x(), p.y(), p.z());
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Triple> next;
    next.reserve(b.f.size() * 4);
    for (const auto& f : b.f) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    b.f = std::move(next);
  }
  return b.build();
}

Mesh make_grid_relief(int w, int h, double amplitude, Rng& rng) {
  require(w >= 1 && h >= 1, "grid-relief: grid size must be >= 1");
  require(amplitude >= 0, "grid-relief: amplitude must be non-negative");
  Builder b;
  const double cell = 1.0 / std::max(w, h);
  for (int y = 0; y <= h; ++y)
    for (int x = 0; x <= w; ++x) b.add(x * cell, y * cell, amplitude * rng.uniform());
  auto at = [w](int x, int y) { return y * (w + 1) + x; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) b.quad(at(x, y), at(x + 1, y), at(x + 1, y + 1), at(x, y + 1));
  return b.build();
}

int face_count_of(const SyntheticSpec& s) {
  switch (s.kind) {
    case SyntheticKind::Box: return 12;
    case SyntheticKind::Pyramid: return 2 * int_param(s, 0, 4) - 2;
    case SyntheticKind::Prism: return 4 * int_param(s, 0, 6) - 4;
    case SyntheticKind::Icosphere: {
      int n = 20;
      for (int i = 0; i < int_param(s, 0, 1); ++i) n *= 4;
      return n;
    }
    case SyntheticKind::GridRelief: return 2 * int_param(s, 0, 4) * int_param(s, 1, 4);
  }
  return 0;
}

}  // namespace

std::string_view kind_name(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::Box: return "box";
    case SyntheticKind::Pyramid: return "pyramid";
    case SyntheticKind::Prism: return "prism";
    case SyntheticKind::Icosphere: return "icosphere";
    case SyntheticKind::GridRelief: return "grid-relief";
  }
  return "unknown";
}

SyntheticKind parse_kind(std::string_view name) {
  for (auto k : {SyntheticKind::Box, SyntheticKind::Pyramid, SyntheticKind::Prism, SyntheticKind::Icosphere,
                 SyntheticKind::GridRelief})
    if (kind_name(k) == name) return k;
  throw ValidationError("unsupported synthetic kind '" + std::string(name) + "'");
}

Mesh gen_synthetic(const SyntheticSpec& spec) {
  Rng rng(derive_seed(spec.seed, 0x5e7));
  Mesh m;
  switch (spec.kind) {
    case SyntheticKind::Box: m = make_box(param(spec, 0, 1), param(spec, 1, 1), param(spec, 2, 1)); break;
    case SyntheticKind::Pyramid: m = make_pyramid(int_param(spec, 0, 4), param(spec, 1, 1)); break;
    case SyntheticKind::Prism: m = make_prism(int_param(spec, 0, 6), param(spec, 1, 1)); break;
    case SyntheticKind::Icosphere: m = make_icosphere(int_param(spec, 0, 1)); break;
    case SyntheticKind::GridRelief:
      m = make_grid_relief(int_param(spec, 0, 4), int_param(spec, 1, 4), param(spec, 2, 0.3), rng);
      break;
  }
  const double angle = 2.0 * std::numbers::pi * rng.uniform();
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  m.vertices = m.vertices * rot.transpose();
  return m;
}

std::string SyntheticSpec::to_line() const {
  std::ostringstream os;
  os << kind_name(kind);
  char buf[32];
  for (double p : params) {
    std::snprintf(buf, sizeof buf, "%.6g", p);
    os << ' ' << buf;
  }
  os << ' ' << seed;
  return os.str();
}

SyntheticSpec SyntheticSpec::parse(std::string_view line) {
  std::istringstream is{std::string(line)};
  std::vector<std::string> fields;
  for (std::string tok; is >> tok;) fields.push_back(tok);
  require(fields.size() >= 2, "manifest line needs at least `kind seed`");
  SyntheticSpec s;
  s.kind = parse_kind(fields.front());
  const std::string& seed = fields.back();
  auto [ptr, ec] = std::from_chars(seed.data(), seed.data() + seed.size(), s.seed);
  require(ec == std::errc{} && ptr == seed.data() + seed.size(), "manifest: bad seed '" + seed + "'");
  for (std::size_t i = 1; i + 1 < fields.size(); ++i) {
    try {
      std::size_t used = 0;
      s.params.push_back(std::stod(fields[i], &used));
      require(used == fields[i].size(), "trailing characters");
    } catch (const std::exception&) {
      throw ValidationError("manifest: bad parameter '" + fields[i] + "'");
    }
  }
  return s;
}

std::vector<SyntheticSpec> make_corpus_specs(std::size_t count, std::uint64_t seed, int min_faces, int max_faces) {
  require(min_faces <= max_faces, "make_corpus_specs: empty face range");
  Rng rng(seed);
  std::vector<SyntheticSpec> specs;
  specs.reserve(count);
  std::size_t attempts = 0;
  while (specs.size() < count) {
    require(++attempts < 1000 * (count + 10), "make_corpus_specs: face range admits no synthetic kind");
    SyntheticSpec s;
    s.kind = static_cast<SyntheticKind>(rng.below(5));
    s.seed = rng.next() >> 16;
    auto extent = [&] { return std::round((0.4 + 1.2 * rng.uniform()) * 1000.0) / 1000.0; };
    switch (s.kind) {
      case SyntheticKind::Box: s.params = {extent(), extent(), extent()}; break;
      case SyntheticKind::Pyramid:
      case SyntheticKind::Prism: s.params = {static_cast<double>(rng.between(3, 33)), extent()}; break;
      case SyntheticKind::Icosphere: s.params = {static_cast<double>(rng.between(0, 1))}; break;
      case SyntheticKind::GridRelief:
        s.params = {static_cast<double>(rng.between(1, 8)), static_cast<double>(rng.between(1, 8)),
                    std::round(rng.uniform() * 500.0) / 1000.0};
        break;
    }
    const int n = face_count_of(s);
    if (n >= min_faces && n <= max_faces) specs.push_back(std::move(s));
  }
  return specs;
}

std::vector<SyntheticSpec> read_manifest(const std::string& text) {
  std::vector<SyntheticSpec> specs;
  std::istringstream is(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      specs.push_back(SyntheticSpec::parse(line));
    } catch (const ValidationError& e) {
      throw ValidationError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return specs;
}

std::string write_manifest(const std::vector<SyntheticSpec>& specs) {
  std::string out;
  for (const auto& s : specs) out += s.to_line() + '\n';
  return out;
}

// --- OBJ --------------------------------------------------------------------

Mesh read_obj(std::string_view text, Eigen::MatrixX3d* normals) {
  std::vector<Eigen::RowVector3d> verts, norms;
  std::vector<std::pair<Triple, std::size_t>> faces;  // (indices, line)
  std::istringstream is{std::string(text)};
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw ValidationError("obj line " + std::to_string(lineno) + ": " + what);
  };
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v" || tag == "vn") {
      double xyz[3];
      for (double& c : xyz) {
        std::string tok;
        if (!(ls >> tok)) fail("expected 3 coordinates");
        try {
          std::size_t used = 0;
          c = std::stod(tok, &used);
          if (used != tok.size()) fail("bad number '" + tok + "'");
        } catch (const std::logic_error&) {
          fail("bad number '" + tok + "'");
        }
      }
      (tag == "v" ? verts : norms).emplace_back(xyz[0], xyz[1], xyz[2]);
    } else if (tag == "f") {
      std::vector<int> poly;
      for (std::string tok; ls >> tok;) {
        const std::string head = tok.substr(0, tok.find('/'));
        int idx = 0;
        auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), idx);
        if (ec != std::errc{} || ptr != head.data() + head.size() || idx == 0) fail("bad face index '" + tok + "'");
        idx = idx > 0 ? idx - 1 : static_cast<int>(verts.size()) + idx;
        if (idx < 0) fail("face references missing vertex");
        poly.push_back(idx);
      }
      if (poly.size() < 3) fail("face needs at least 3 vertices");
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) faces.push_back({{poly[0], poly[k], poly[k + 1]}, lineno});
    }
  }
  Mesh m;
  m.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) m.vertices.row(static_cast<Eigen::Index>(i)) = verts[i];
  std::vector<Triple> kept;
  for (const auto& [f, line] : faces) {
    for (int idx : f)
      if (idx >= static_cast<int>(verts.size())) {
        lineno = line;
        fail("face references missing vertex " + std::to_string(idx + 1));
      }
    if (!degenerate(f)) kept.push_back(f);
  }
  m.faces = to_matrix(kept);
  if (normals) {
    normals->resize(static_cast<Eigen::Index>(norms.size()), 3);
    for (std::size_t i = 0; i < norms.size(); ++i) normals->row(static_cast<Eigen::Index>(i)) = norms[i];
  }
  return m;
}

std::string write_obj(const Mesh& m) {
  std::string out;
  char buf[128];
  for (Eigen::Index v = 0; v < m.vertices.rows(); ++v) {
    std::snprintf(buf, sizeof buf, "v %.8g %.8g %.8g\n", m.vertices(v, 0), m.vertices(v, 1), m.vertices(v, 2));
    out += buf;
  }
  for (Eigen::Index f = 0; f < m.faces.rows(); ++f) {
    std::snprintf(buf, sizeof buf, "f %d %d %d\n", m.faces(f, 0) + 1, m.faces(f, 1) + 1, m.faces(f, 2) + 1);
    out += buf;
  }
  return out;
}

Mesh load_obj_file(const std::string& path, Eigen::MatrixX3d* normals) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return read_obj(ss.str(), normals);
}

void save_obj_file(const std::string& path, const Mesh& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write '" + path + "'");
  out << write_obj(m);
  if (!out) throw RuntimeFailure("write failed for '" + path + "'");
}

}  // namespace tssr
