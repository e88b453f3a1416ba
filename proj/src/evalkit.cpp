#include "tssr/evalkit.hpp"

#include "tssr/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace tssr {

namespace {

double sq_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

void require_points(const PointCloud& a, const PointCloud& b, const char* what) {
  if (a.points.rows() == 0 || b.points.rows() == 0) throw ValidationError(std::string(what) + ": empty point cloud");
}

}  // namespace

PointGrid::PointGrid(const Eigen::MatrixX3d& points) : points_(points) {
  require(points.rows() > 0, "point grid: no points");
  require(points.array().isFinite().all(), "point grid: non-finite coordinates");
  lo_ = points.colwise().minCoeff().transpose();
  const Eigen::Vector3d extent = points.colwise().maxCoeff().transpose() - lo_;
  const double longest = extent.maxCoeff();
  const double per_axis = std::max(1.0, std::ceil(std::cbrt(static_cast<double>(points.rows()) / 2.0)));
  cell_ = longest > 0.0 ? longest / per_axis : 1.0;
  for (int a = 0; a < 3; ++a) dims_[a] = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(extent(a) / cell_) + 1);

  const std::size_t cells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
  start_.assign(cells + 1, 0);
  std::vector<std::size_t> cell_id(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto c = flat(cell_of(points(i, 0), 0), cell_of(points(i, 1), 1), cell_of(points(i, 2), 2));
    cell_id[static_cast<std::size_t>(i)] = c;
    ++start_[c + 1];
  }
  for (std::size_t c = 0; c < cells; ++c) start_[c + 1] += start_[c];
  items_.resize(static_cast<std::size_t>(points.rows()));
  std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
  for (Eigen::Index i = 0; i < points.rows(); ++i) items_[fill[cell_id[static_cast<std::size_t>(i)]]++] = i;
}

Eigen::Index PointGrid::cell_of(double v, int axis) const {
  const auto c = static_cast<Eigen::Index>(std::floor((v - lo_(axis)) / cell_));
  return std::clamp<Eigen::Index>(c, 0, dims_[axis] - 1);
}

std::size_t PointGrid::flat(Eigen::Index x, Eigen::Index y, Eigen::Index z) const {
  return static_cast<std::size_t>((z * dims_[1] + y) * dims_[0] + x);
}

std::pair<Eigen::Index, double> PointGrid::nearest(const Eigen::Vector3d& q) const {
  const std::array<Eigen::Index, 3> c{cell_of(q.x(), 0), cell_of(q.y(), 1), cell_of(q.z(), 2)};
  Eigen::Index best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  auto scan = [&](Eigen::Index x, Eigen::Index y, Eigen::Index z) {
    const std::size_t f = flat(x, y, z);
    for (std::uint32_t k = start_[f]; k < start_[f + 1]; ++k) {
      const Eigen::Index i = items_[k];
      const double d = sq_distance(q, points_.row(i).transpose());
      if (d < best_d || (d == best_d && i < best)) {
        best_d = d;
        best = i;
      }
    }
  };
  for (Eigen::Index r = 0;; ++r) {
    std::array<Eigen::Index, 3> lo, hi;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max<Eigen::Index>(0, c[a] - r);
      hi[a] = std::min<Eigen::Index>(dims_[a] - 1, c[a] + r);
    }
    // visit only the shell of the cube [c - r, c + r]
    for (Eigen::Index z = lo[2]; z <= hi[2]; ++z)
      for (Eigen::Index y = lo[1]; y <= hi[1]; ++y)
        for (Eigen::Index x = lo[0]; x <= hi[0]; ++x) {
          const bool shell = std::abs(x - c[0]) == r || std::abs(y - c[1]) == r || std::abs(z - c[2]) == r;
          if (shell) scan(x, y, z);
        }
    // Anything not yet visited lies outside the box of cells [c - r, c + r];
    // its distance is at least the gap from q to the nearest box face that
    // still has cells beyond it.
    double bound = std::numeric_limits<double>::infinity();
    bool more = false;
    for (int a = 0; a < 3; ++a) {
      if (c[a] - r > 0) {
        more = true;
        bound = std::min(bound, std::max(0.0, q(a) - (lo_(a) + static_cast<double>(c[a] - r) * cell_)));
      }
      if (c[a] + r < dims_[a] - 1) {
        more = true;
        bound = std::min(bound, std::max(0.0, lo_(a) + static_cast<double>(c[a] + r + 1) * cell_ - q(a)));
      }
    }
    if (!more) break;
    bound = std::max(0.0, bound - 1e-9 * cell_);  // slack for cell-assignment rounding
    if (best >= 0 && best_d < bound * bound) break;
  }
  return {best, best_d};
}

NearestResult PointGrid::nearest_all(const Eigen::MatrixX3d& queries) const {
  NearestResult r;
  r.index.resize(static_cast<std::size_t>(queries.rows()));
  r.sq_dist.resize(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    const auto [j, d] = nearest(queries.row(i).transpose());
    r.index[static_cast<std::size_t>(i)] = j;
    r.sq_dist[static_cast<std::size_t>(i)] = d;
  }
  return r;
}

namespace {

struct Pairing {
  NearestResult ab, ba;
};

Pairing pair_up(const PointCloud& a, const PointCloud& b) {
  const PointGrid grid_b(b.points), grid_a(a.points);
  return {grid_b.nearest_all(a.points), grid_a.nearest_all(b.points)};
}

double max_dist(const NearestResult& r) {
  double m = 0.0;
  for (double d : r.sq_dist) m = std::max(m, d);
  return std::sqrt(m);
}

double mean_of(const NearestResult& r, bool squared) {
  double s = 0.0;
  for (double d : r.sq_dist) s += squared ? d : std::sqrt(d);
  return s / static_cast<double>(r.sq_dist.size());
}

double nc_direction(const PointCloud& from, const PointCloud& to, const NearestResult& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.index.size(); ++i)
    s += std::abs(from.normals.row(static_cast<Eigen::Index>(i)).dot(to.normals.row(r.index[i])));
  return s / static_cast<double>(r.index.size());
}

double within(const NearestResult& r, double tau) {
  std::size_t n = 0;
  for (double d : r.sq_dist) n += std::sqrt(d) <= tau;
  return static_cast<double>(n) / static_cast<double>(r.sq_dist.size());
}

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

void require_normals(const PointCloud& a, const PointCloud& b) {
  if (a.normals.rows() != a.points.rows() || b.normals.rows() != b.points.rows())
    throw ValidationError("normal consistency: missing normals");
}

}  // namespace

double hausdorff(const PointCloud& a, const PointCloud& b) {
  require_points(a, b, "hausdorff");
  const auto p = pair_up(a, b);
  return std::max(max_dist(p.ab), max_dist(p.ba));
}

double chamfer(const PointCloud& a, const PointCloud& b, ChamferOrder order) {
  require_points(a, b, "chamfer");
  const auto p = pair_up(a, b);
  const bool sq = order == ChamferOrder::L2;
  return 0.5 * (mean_of(p.ab, sq) + mean_of(p.ba, sq));
}

double normal_consistency(const PointCloud& a, const PointCloud& b) {
  require_points(a, b, "normal consistency");
  require_normals(a, b);
  const auto p = pair_up(a, b);
  return 0.5 * (nc_direction(a, b, p.ab) + nc_direction(b, a, p.ba));
}

double f_score(const PointCloud& a, const PointCloud& b, double tau) {
  require(tau > 0.0, "f_score: tau must be > 0");
  require_points(a, b, "f_score");
  const auto p = pair_up(a, b);
  return f1_of(within(p.ab, tau), within(p.ba, tau));
}

MetricReport compare_clouds(const PointCloud& a, const PointCloud& b, double tau) {
  require(tau > 0.0, "f_score: tau must be > 0");
  require_points(a, b, "compare");
  require_normals(a, b);
  const auto p = pair_up(a, b);
  MetricReport r;
  r.hd = std::max(max_dist(p.ab), max_dist(p.ba));
  r.cd_l1 = 0.5 * (mean_of(p.ab, false) + mean_of(p.ba, false));
  r.cd_l2 = 1e3 * 0.5 * (mean_of(p.ab, true) + mean_of(p.ba, true));
  r.nc = 0.5 * (nc_direction(a, b, p.ab) + nc_direction(b, a, p.ba));
  r.f1 = f1_of(within(p.ab, tau), within(p.ba, tau));
  r.sample_count = static_cast<std::size_t>(std::min(a.points.rows(), b.points.rows()));
  r.f1_threshold = tau;
  return r;
}

MetricReport evaluate_meshes(const Mesh& a, const Mesh& b, const EvalConfig& cfg) {
  require(cfg.samples > 0, "eval: samples must be > 0");
  const PointCloud pa = sample_surface(a, cfg.samples, cfg.seed);
  const PointCloud pb = sample_surface(b, cfg.samples, cfg.seed);
  MetricReport r = compare_clouds(pa, pb, cfg.tau);
  r.sample_count = cfg.samples;
  r.seed = cfg.seed;
  return r;
}

std::string MetricReport::to_text() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "# %zu area-weighted surface samples per mesh, seed %llu, f1 threshold %g\n"
                "# absolute values depend on this sampling protocol and are not comparable across protocols\n"
                "HD      %.6f\nCD_L1   %.6f\nCD_L2   %.6f  (x1e3)\nNC      %.6f\nF1      %.6f\n",
                sample_count, static_cast<unsigned long long>(seed), f1_threshold, hd, cd_l1, cd_l2, nc, f1);
  return buf;
}

std::string MetricReport::to_key_values() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "hd=%.17g\ncd_l1=%.17g\ncd_l2=%.17g\nnc=%.17g\nf1=%.17g\nsample_count=%zu\nf1_threshold=%.17g\nseed=%llu\n",
                hd, cd_l1, cd_l2, nc, f1, sample_count, f1_threshold, static_cast<unsigned long long>(seed));
  return buf;
}

}  // namespace tssr
