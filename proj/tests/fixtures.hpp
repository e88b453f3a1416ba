#pragma once

// Small models and inputs shared by the unit and acceptance tests.

#include "tssr/codec.hpp"
#include "tssr/geometry.hpp"
#include "tssr/net.hpp"
#include "tssr/rng.hpp"

namespace fixture {

/// A model small enough for finite-difference checks (under 1e4 parameters).
inline tssr::NetConfig toy_config() {
  tssr::NetConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.layers = {1, 0, 1, 0, 0};
  c.resolution = 8;
  c.max_faces = 4;
  c.cond_points = 8;
  c.train_steps = 10;
  c.mlp_ratio = 1;
  c.cond_frequencies = 0;
  return c;
}

/// A small but complete model: every level has a layer.
inline tssr::NetConfig small_config() {
  tssr::NetConfig c;
  c.d_model = 32;
  c.n_heads = 2;
  c.layers = {1, 1, 1, 1, 1};
  c.resolution = 64;
  c.max_faces = 16;
  c.cond_points = 32;
  c.train_steps = 100;
  c.mlp_ratio = 2;
  c.cond_frequencies = 2;
  return c;
}

inline tssr::TokenSequence random_tokens(std::size_t faces, int resolution, std::uint64_t seed) {
  tssr::Rng rng(seed);
  tssr::TokenSequence t(faces * tssr::kTokensPerFace);
  for (auto& v : t) v = static_cast<tssr::Token>(rng.below(static_cast<std::uint64_t>(resolution)));
  return t;
}

inline tssr::PointCloud random_cloud(int n, std::uint64_t seed) {
  tssr::Rng rng(seed);
  tssr::PointCloud pc;
  pc.points.resize(n, 3);
  pc.normals.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    pc.points.row(i) << rng.uniform(), rng.uniform(), rng.uniform();
    Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
    pc.normals.row(i) = v.normalized().transpose();
  }
  return pc;
}

/// Draws every parameter from N(0, scale^2) so that no layer is near its
/// identity initialisation.
template <typename Scalar>
void randomize(tssr::Model<Scalar>& m, std::uint64_t seed, double scale = 0.3) {
  tssr::Rng rng(seed);
  for (auto& p : m.parameters())
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<Scalar>(scale * rng.normal());
}

}  // namespace fixture
