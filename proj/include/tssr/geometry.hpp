#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tssr {

/// Triangle mesh in the libigl layout: one row per vertex / face.
struct Mesh {
  Eigen::MatrixX3d vertices;
  Eigen::MatrixX3i faces;

  Eigen::Index num_vertices() const { return vertices.rows(); }
  Eigen::Index num_faces() const { return faces.rows(); }

  /// Throws ValidationError on out-of-range indices, repeated indices within
  /// a face, or non-finite coordinates.
  void validate() const;
};

/// Mesh whose coordinates are integer bins in [0, resolution).
struct QuantizedMesh {
  Eigen::MatrixX3i vertices;
  Eigen::MatrixX3i faces;
  int resolution = 1024;

  Eigen::Index num_vertices() const { return vertices.rows(); }
  Eigen::Index num_faces() const { return faces.rows(); }

  void validate() const;
  bool operator==(const QuantizedMesh& other) const;
};

struct PointCloud {
  Eigen::MatrixX3d points;
  Eigen::MatrixX3d normals;  // unit length, same row count as points

  Eigen::Index size() const { return points.rows(); }
};

inline constexpr double kNormalizeEpsilon = 0x1.0p-20;
inline constexpr int kDefaultResolution = 1024;

/// Uniformly rescales and centers `m` so the longest bounding-box edge has
/// length 1 - 2^-20 and the box midpoint sits at (0.5, 0.5, 0.5).
Mesh normalize_mesh(const Mesh& m);

/// floor(c * V) per component, clamped to [0, V-1]. Identical bins merge,
/// faces that collapse are dropped.
QuantizedMesh quantize(const Mesh& m, int resolution = kDefaultResolution);

/// Maps each bin to its center (b + 0.5) / V.
Mesh dequantize(const QuantizedMesh& q);

/// Vertices sorted by (z, y, x); each face rotated so its smallest index
/// leads (winding kept); faces sorted lexicographically. Unreferenced
/// vertices and repeated faces are removed.
QuantizedMesh canonical_order(const QuantizedMesh& q);

/// Area-weighted surface samples; every point carries its triangle's normal.
PointCloud sample_surface(const Mesh& m, std::size_t count, std::uint64_t seed);

Eigen::VectorXd face_areas(const Mesh& m);

// --- synthetic corpus -------------------------------------------------------

enum class SyntheticKind { Box, Pyramid, Prism, Icosphere, GridRelief };

/// One manifest entry: `kind params... seed`.
struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::Box;
  std::vector<double> params;
  std::uint64_t seed = 0;

  std::string to_line() const;
  static SyntheticSpec parse(std::string_view line);
};

/// box [sx sy sz]          -> 12 faces
/// pyramid [sides height]  -> 2*sides-2 faces
/// prism [sides height]    -> 4*sides-4 faces
/// icosphere [subdiv]      -> 20*4^subdiv faces
/// grid-relief [w h amp]   -> 2*w*h faces (open height field)
/// The seed drives a random rotation about z plus (for grid-relief) the
/// heights, so equal specs give identical meshes.
Mesh gen_synthetic(const SyntheticSpec& spec);

std::string_view kind_name(SyntheticKind kind);
SyntheticKind parse_kind(std::string_view name);

/// Deterministic corpus of `count` specs whose face counts lie in
/// [min_faces, max_faces].
std::vector<SyntheticSpec> make_corpus_specs(std::size_t count, std::uint64_t seed,
                                             int min_faces = 4, int max_faces = 128);

std::vector<SyntheticSpec> read_manifest(const std::string& text);
std::string write_manifest(const std::vector<SyntheticSpec>& specs);

// --- OBJ --------------------------------------------------------------------

/// Reads `v` and `f` records; other records are ignored. Polygons are
/// fan-triangulated, negative indices resolve relative to the current
/// vertex count. `vn` records are collected into `normals` if requested.
Mesh read_obj(std::string_view text, Eigen::MatrixX3d* normals = nullptr);
std::string write_obj(const Mesh& m);

Mesh load_obj_file(const std::string& path, Eigen::MatrixX3d* normals = nullptr);
void save_obj_file(const std::string& path, const Mesh& m);

}  // namespace tssr
