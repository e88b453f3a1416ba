#pragma once

#include "tssr/net.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tssr {

struct TensorBlock {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<float> data;  // column-major, rows * cols

  bool operator==(const TensorBlock&) const = default;
};

/// Container layout (little-endian):
///   "TSSRCKPT" u32 version
///   u32 n, n bytes of `key=value\n` lines (config echo and run state)
///   u32 tensor count, then per tensor: u32 name length, name,
///       u32 rows, u32 cols, u64 byte offset into the data section
///   data section: raw f32 blocks
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> meta;
  std::vector<TensorBlock> tensors;

  const TensorBlock* find(const std::string& name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

template <typename Scalar>
TensorBlock to_block(const std::string& name, const ad::Matrix<Scalar>& m);

template <typename Scalar>
ad::Matrix<Scalar> from_block(const TensorBlock& b);

/// Net config echoed under `net.` keys plus every parameter tensor.
template <typename Scalar>
Checkpoint model_checkpoint(const Model<Scalar>& model);

template <typename Scalar>
Model<Scalar> model_from_checkpoint(const Checkpoint& ckpt);

NetConfig net_config_from_meta(const std::map<std::string, std::string>& meta);

}  // namespace tssr
