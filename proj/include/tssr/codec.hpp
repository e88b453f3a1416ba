#pragma once

#include "tssr/geometry.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tssr {

using Token = std::int32_t;
using TokenSequence = std::vector<Token>;

/// Coordinate bins [0, V) followed by the two specials MASK = V, PAD = V + 1.
struct Codebook {
  int resolution = kDefaultResolution;

  Token mask() const { return resolution; }
  Token pad() const { return resolution + 1; }
  int size() const { return resolution + 2; }
  bool is_coordinate(Token t) const { return t >= 0 && t < resolution; }
};

inline constexpr int kTokensPerFace = 9;

/// Token start offsets (multiples of 3) of every occurrence of one shared
/// vertex; only vertices used by two or more face slots get a group.
struct VertexGroups {
  std::vector<std::vector<int>> groups;

  std::size_t size() const { return groups.size(); }
  bool operator==(const VertexGroups&) const = default;
};

struct PositionTuple {
  int face = 0;
  int vertex = 0;
  int coordinate = 0;

  int offset() const { return kTokensPerFace * face + 3 * vertex + coordinate; }
  bool operator==(const PositionTuple&) const = default;
};

/// Flattens faces into [v11x v11y v11z ... vN3z]. Rejects input that is not
/// a fixpoint of canonical_order.
TokenSequence tokenize(const QuantizedMesh& q);

struct DetokenizeResult {
  QuantizedMesh mesh;
  std::size_t dropped_faces = 0;     // degenerate plus duplicate faces
  std::size_t degenerate_faces = 0;  // faces with a repeated vertex
};

/// Strips the PAD suffix, then turns each 9-token block into a face.
/// Identical triples merge; faces with repeated vertices and duplicate faces
/// are dropped. The result is in canonical order.
DetokenizeResult detokenize(const TokenSequence& tokens, int resolution = kDefaultResolution);

VertexGroups shared_vertex_groups(const QuantizedMesh& q);

std::vector<PositionTuple> position_tuples(std::size_t length);

/// Length of the non-PAD prefix. Throws if PAD appears before a non-PAD token.
std::size_t unpadded_length(const TokenSequence& tokens, const Codebook& book);

// Token dump: "TSSRTOK1", u32 count, count x u16 (all little-endian).
std::string encode_tokens(const TokenSequence& tokens);
TokenSequence decode_tokens(const std::string& bytes);

// Group index: "TSSRGRP1", u32 groups, per group u32 size + size x u32.
std::string encode_groups(const VertexGroups& groups);
VertexGroups decode_groups(const std::string& bytes);

std::string read_file_bytes(const std::string& path);
/// Writes to `path.tmp` then renames over `path`.
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace tssr
