#include "tssr/codec.hpp"

#include "tssr/binary_io.hpp"
#include "tssr/error.hpp"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace tssr {

TokenSequence tokenize(const QuantizedMesh& q) {
  require(canonical_order(q) == q, "tokenize: mesh is not in canonical order");
  TokenSequence out;
  out.reserve(static_cast<std::size_t>(q.num_faces()) * kTokensPerFace);
  for (Eigen::Index f = 0; f < q.num_faces(); ++f)
    for (int slot = 0; slot < 3; ++slot)
      for (int axis = 0; axis < 3; ++axis) out.push_back(q.vertices(q.faces(f, slot), axis));
  return out;
}

std::size_t unpadded_length(const TokenSequence& tokens, const Codebook& book) {
  std::size_t n = tokens.size();
  while (n > 0 && tokens[n - 1] == book.pad()) --n;
  for (std::size_t i = 0; i < n; ++i)
    require(tokens[i] != book.pad(), "PAD token inside the sequence at offset " + std::to_string(i));
  return n;
}

DetokenizeResult detokenize(const TokenSequence& tokens, int resolution) {
  const Codebook book{resolution};
  const std::size_t n = unpadded_length(tokens, book);
  require(n % kTokensPerFace == 0, "detokenize: length " + std::to_string(n) + " is not a multiple of 9");
  std::map<std::array<int, 3>, int> index_of;
  std::vector<std::array<int, 3>> verts;
  std::vector<std::array<int, 3>> faces;
  DetokenizeResult res;
  for (std::size_t base = 0; base < n; base += kTokensPerFace) {
    std::array<int, 3> face{};
    for (int slot = 0; slot < 3; ++slot) {
      std::array<int, 3> v{};
      for (int axis = 0; axis < 3; ++axis) {
        const Token t = tokens[base + 3 * slot + axis];
        if (t == book.mask()) throw ValidationError("incomplete sequence");
        require(book.is_coordinate(t), "detokenize: token out of range");
        v[axis] = t;
      }
      auto [it, inserted] = index_of.try_emplace(v, static_cast<int>(verts.size()));
      if (inserted) verts.push_back(v);
      face[slot] = it->second;
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
      ++res.degenerate_faces;
    else
      faces.push_back(face);
  }
  res.mesh.resolution = resolution;
  res.mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i)
    for (int j = 0; j < 3; ++j) res.mesh.vertices(static_cast<Eigen::Index>(i), j) = verts[i][j];
  res.mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i)
    for (int j = 0; j < 3; ++j) res.mesh.faces(static_cast<Eigen::Index>(i), j) = faces[i][j];
  if (res.mesh.faces.rows() > 0) res.mesh = canonical_order(res.mesh);
  else res.mesh.vertices.resize(0, 3);
  // duplicate faces vanish in canonical form; count them as dropped too
  res.dropped_faces = n / kTokensPerFace - static_cast<std::size_t>(res.mesh.faces.rows());
  return res;
}

VertexGroups shared_vertex_groups(const QuantizedMesh& q) {
  // keyed on quantized position, so duplicate rows with equal bins share a group
  std::map<std::array<int, 3>, std::vector<int>> occurrences;
  std::vector<std::array<int, 3>> first_seen;
  for (Eigen::Index f = 0; f < q.num_faces(); ++f)
    for (int slot = 0; slot < 3; ++slot) {
      const int v = q.faces(f, slot);
      const std::array<int, 3> key{q.vertices(v, 0), q.vertices(v, 1), q.vertices(v, 2)};
      auto& occ = occurrences[key];
      if (occ.empty()) first_seen.push_back(key);
      occ.push_back(static_cast<int>(kTokensPerFace * f + 3 * slot));
    }
  VertexGroups out;
  for (const auto& key : first_seen) {
    auto& occ = occurrences[key];
    if (occ.size() >= 2) out.groups.push_back(std::move(occ));
  }
  return out;  // first_seen order == ascending first offset
}

std::vector<PositionTuple> position_tuples(std::size_t length) {
  std::vector<PositionTuple> out(length);
  for (std::size_t p = 0; p < length; ++p) {
    const int i = static_cast<int>(p);
    out[p] = {i / kTokensPerFace, (i % kTokensPerFace) / 3, i % 3};
  }
  return out;
}

std::string encode_tokens(const TokenSequence& tokens) {
  std::string out("TSSRTOK1");
  bin::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(tokens.size()));
  for (Token t : tokens) {
    require(t >= 0 && t <= 0xffff, "encode_tokens: token does not fit in 16 bits");
    bin::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(t));
  }
  return out;
}

TokenSequence decode_tokens(const std::string& bytes) {
  bin::Reader r(bytes, "token dump");
  r.expect_magic("TSSRTOK1");
  const auto n = r.get_uint<std::uint32_t>();
  TokenSequence out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(r.get_uint<std::uint16_t>());
  require(r.at_end(), "token dump: trailing bytes");
  return out;
}

std::string encode_groups(const VertexGroups& groups) {
  std::string out("TSSRGRP1");
  bin::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(groups.size()));
  for (const auto& g : groups.groups) {
    bin::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(g.size()));
    for (int s : g) bin::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  }
  return out;
}

VertexGroups decode_groups(const std::string& bytes) {
  bin::Reader r(bytes, "group index");
  r.expect_magic("TSSRGRP1");
  VertexGroups out;
  const auto n = r.get_uint<std::uint32_t>();
  out.groups.resize(n);
  for (auto& g : out.groups) {
    const auto size = r.get_uint<std::uint32_t>();
    g.reserve(size);
    for (std::uint32_t i = 0; i < size; ++i) g.push_back(static_cast<int>(r.get_uint<std::uint32_t>()));
  }
  require(r.at_end(), "group index: trailing bytes");
  return out;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw RuntimeFailure("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw RuntimeFailure("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

}  // namespace tssr
