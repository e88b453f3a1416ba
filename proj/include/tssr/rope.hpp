#pragma once

#include "tssr/codec.hpp"
#include "tssr/error.hpp"

#include <Eigen/Dense>

#include <array>
#include <span>

namespace tssr {

/// Rotary dimensions of one attention head, partitioned into a face chunk,
/// a vertex chunk and a coordinate chunk. Each chunk is rotated by its own
/// index of the (face, vertex, coordinate) tuple.
struct RopeLayout {
  int head_dim = 32;
  std::array<int, 3> chunk_dims{16, 8, 8};  // face, vertex, coordinate; each even
  double face_base = 10000.0;

  /// Splits head_dim by fractions; throws if a chunk is not a positive even
  /// integer or the chunks do not cover head_dim.
  static RopeLayout from_split(int head_dim, const std::array<double, 3>& split);

  void validate() const;
  int pairs() const { return head_dim / 2; }

  /// Per-pair angular frequency. The face chunk uses the usual 1/base^(i/P)
  /// ladder; the vertex and coordinate chunks index {0,1,2}, so their ladder
  /// starts at pi/3 and decays by factor 3 across the chunk.
  Eigen::VectorXd frequencies() const;

  /// n x pairs matrix of rotation angles for the given tuples.
  Eigen::MatrixXd angles(std::span<const PositionTuple> tuples) const;
};

/// Rotates the interleaved pairs (2i, 2i+1) of every head of `x`
/// (rows = tokens, columns = heads * head_dim). `inverse` applies the
/// transpose rotation, which is also the backward map.
template <typename Scalar>
void rotate_pairs(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x,
                  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& cos_table,
                  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& sin_table, int head_dim,
                  bool inverse) {
  const Eigen::Index heads = x.cols() / head_dim;
  const Eigen::Index pairs = head_dim / 2;
  for (Eigen::Index h = 0; h < heads; ++h)
    for (Eigen::Index p = 0; p < pairs; ++p) {
      auto a = x.col(h * head_dim + 2 * p);
      auto b = x.col(h * head_dim + 2 * p + 1);
      const auto c = cos_table.col(p).array();
      const auto s = inverse ? (-sin_table.col(p)).eval() : sin_table.col(p).eval();
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> a0 = a;
      a = (a0.array() * c - b.array() * s.array()).matrix();
      b = (a0.array() * s.array() + b.array() * c).matrix();
    }
}

/// Applies multi-level rotary embedding to per-head vectors `x`
/// (rows = tokens, columns = heads * head_dim).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> apply_multilevel_rope(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x, std::span<const PositionTuple> tuples,
    const RopeLayout& layout) {
  layout.validate();
  if (static_cast<std::size_t>(x.rows()) != tuples.size())
    throw ValidationError("apply_multilevel_rope: tuple count does not match rows");
  if (x.cols() % layout.head_dim != 0) throw ValidationError("apply_multilevel_rope: width is not a multiple of head_dim");
  const Eigen::MatrixXd ang = layout.angles(tuples);
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> c = ang.array().cos().matrix().cast<Scalar>();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> s = ang.array().sin().matrix().cast<Scalar>();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out = x;
  rotate_pairs(out, c, s, layout.head_dim, false);
  return out;
}

}  // namespace tssr
