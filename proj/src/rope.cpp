#include "tssr/rope.hpp"

#include "tssr/error.hpp"

#include <cmath>
#include <numbers>

namespace tssr {

RopeLayout RopeLayout::from_split(int head_dim, const std::array<double, 3>& split) {
  RopeLayout layout;
  layout.head_dim = head_dim;
  for (int i = 0; i < 3; ++i) {
    const double d = split[i] * head_dim;
    require(std::abs(d - std::round(d)) < 1e-9, "rope_dim_split does not divide head_dim into whole dimensions");
    layout.chunk_dims[i] = static_cast<int>(std::round(d));
  }
  layout.validate();
  return layout;
}

void RopeLayout::validate() const {
  require(head_dim > 0 && head_dim % 2 == 0, "rope: head_dim must be positive and even");
  int total = 0;
  for (int d : chunk_dims) {
    require(d > 0 && d % 2 == 0, "rope: every chunk must be a positive even number of dimensions");
    total += d;
  }
  require(total == head_dim, "rope: rope_dim_split must sum to the head dimension");
}

Eigen::VectorXd RopeLayout::frequencies() const {
  Eigen::VectorXd freq(pairs());
  int p = 0;
  for (int chunk = 0; chunk < 3; ++chunk) {
    const int n = chunk_dims[chunk] / 2;
    for (int i = 0; i < n; ++i, ++p) {
      if (chunk == 0)
        freq(p) = std::pow(face_base, -static_cast<double>(i) / n);
      else
        freq(p) = (std::numbers::pi / 3.0) * std::pow(3.0, -static_cast<double>(i) / n);
    }
  }
  return freq;
}

Eigen::MatrixXd RopeLayout::angles(std::span<const PositionTuple> tuples) const {
  const Eigen::VectorXd freq = frequencies();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(tuples.size()), pairs());
  const int face_pairs = chunk_dims[0] / 2;
  const int vertex_pairs = chunk_dims[1] / 2;
  for (std::size_t r = 0; r < tuples.size(); ++r) {
    const auto& tp = tuples[r];
    for (int p = 0; p < pairs(); ++p) {
      const int index = p < face_pairs ? tp.face : p < face_pairs + vertex_pairs ? tp.vertex : tp.coordinate;
      out(static_cast<Eigen::Index>(r), p) = index * freq(p);
    }
  }
  return out;
}

}  // namespace tssr
