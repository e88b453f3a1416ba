#pragma once

#include "tssr/geometry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace tssr {

/// Nearest reference point for every query point.
struct NearestResult {
  std::vector<Eigen::Index> index;
  std::vector<double> sq_dist;
};

/// Uniform-grid index over a fixed reference set. Queries return the exact
/// nearest neighbour; ties go to the lower reference index.
class PointGrid {
 public:
  explicit PointGrid(const Eigen::MatrixX3d& points);

  std::pair<Eigen::Index, double> nearest(const Eigen::Vector3d& q) const;
  NearestResult nearest_all(const Eigen::MatrixX3d& queries) const;

 private:
  Eigen::Index cell_of(double v, int axis) const;
  std::size_t flat(Eigen::Index x, Eigen::Index y, Eigen::Index z) const;

  const Eigen::MatrixX3d& points_;
  Eigen::Vector3d lo_;
  double cell_ = 1.0;
  std::array<Eigen::Index, 3> dims_{1, 1, 1};
  std::vector<std::uint32_t> start_;  // CSR offsets per cell
  std::vector<Eigen::Index> items_;
};

enum class ChamferOrder { L1, L2 };

double hausdorff(const PointCloud& a, const PointCloud& b);
/// Halved sum of the two directed means of NN distance (L1) or squared
/// distance (L2). The L2 value is not rescaled here.
double chamfer(const PointCloud& a, const PointCloud& b, ChamferOrder order);
/// Symmetric mean of |n_x . n_nn(x)| with position-only pairing.
double normal_consistency(const PointCloud& a, const PointCloud& b);
double f_score(const PointCloud& a, const PointCloud& b, double tau);

struct MetricReport {
  double hd = 0.0;
  double cd_l1 = 0.0;
  double cd_l2 = 0.0;  // x 1e3
  double nc = 0.0;
  double f1 = 0.0;
  std::size_t sample_count = 0;
  double f1_threshold = 0.02;
  std::uint64_t seed = 0;

  std::string to_text() const;
  std::string to_key_values() const;
};

struct EvalConfig {
  std::size_t samples = 10000;
  double tau = 0.02;
  std::uint64_t seed = 0;
};

/// All metrics on one pair of clouds.
MetricReport compare_clouds(const PointCloud& a, const PointCloud& b, double tau);

/// Area-weighted surface samples from each mesh (same seed for both), then
/// compare_clouds.
MetricReport evaluate_meshes(const Mesh& a, const Mesh& b, const EvalConfig& cfg = {});

}  // namespace tssr
