#include "tssr/checkpoint.hpp"

#include "tssr/binary_io.hpp"
#include "tssr/error.hpp"

#include <sstream>

namespace tssr {

const TensorBlock* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out("TSSRCKPT");
  bin::put_uint<std::uint32_t>(out, Checkpoint::kVersion);
  std::string meta;
  for (const auto& [k, v] : ckpt.meta) {
    require(k.find_first_of("=\n") == std::string::npos && v.find('\n') == std::string::npos,
            "checkpoint: meta keys/values may not contain '=' or newlines");
    meta += k + "=" + v + "\n";
  }
  bin::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  bin::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    require(static_cast<std::size_t>(t.rows * t.cols) == t.data.size(), "checkpoint: tensor size mismatch");
    bin::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    bin::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows));
    bin::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols));
    bin::put_uint<std::uint64_t>(out, offset);
    offset += 4 * t.data.size();
  }
  out.reserve(out.size() + offset);
  for (const auto& t : ckpt.tensors)
    for (float f : t.data) bin::put_f32(out, f);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  bin::Reader r(bytes, "checkpoint");
  r.expect_magic("TSSRCKPT");
  const auto version = r.get_uint<std::uint32_t>();
  require(version == Checkpoint::kVersion, "checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  const auto meta_len = r.get_uint<std::uint32_t>();
  std::istringstream meta{std::string(r.get_bytes(meta_len))};
  for (std::string line; std::getline(meta, line);) {
    const auto eq = line.find('=');
    require(eq != std::string::npos, "checkpoint: bad meta line");
    ckpt.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = r.get_uint<std::uint32_t>();
  std::vector<std::uint64_t> offsets;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorBlock t;
    t.name = std::string(r.get_bytes(r.get_uint<std::uint32_t>()));
    t.rows = r.get_uint<std::uint32_t>();
    t.cols = r.get_uint<std::uint32_t>();
    offsets.push_back(r.get_uint<std::uint64_t>());
    ckpt.tensors.push_back(std::move(t));
  }
  const std::size_t data_start = r.position();
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    auto& t = ckpt.tensors[i];
    r.seek(data_start + offsets[i]);
    t.data.resize(static_cast<std::size_t>(t.rows * t.cols));
    for (float& f : t.data) f = r.get_f32();
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

template <typename Scalar>
TensorBlock to_block(const std::string& name, const ad::Matrix<Scalar>& m) {
  TensorBlock b;
  b.name = name;
  b.rows = m.rows();
  b.cols = m.cols();
  b.data.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) b.data[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  return b;
}

template <typename Scalar>
ad::Matrix<Scalar> from_block(const TensorBlock& b) {
  ad::Matrix<Scalar> m(b.rows, b.cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(b.data[static_cast<std::size_t>(i)]);
  return m;
}

NetConfig net_config_from_meta(const std::map<std::string, std::string>& meta) {
  std::map<std::string, std::string> net;
  for (const auto& [k, v] : meta)
    if (k.starts_with("net.")) net[k.substr(4)] = v;
  require(!net.empty(), "checkpoint: no net configuration");
  return NetConfig::from_map(net);
}

template <typename Scalar>
Checkpoint model_checkpoint(const Model<Scalar>& model) {
  Checkpoint ckpt;
  for (const auto& [k, v] : model.config().to_map()) ckpt.meta["net." + k] = v;
  for (const auto& p : model.parameters()) ckpt.tensors.push_back(to_block(p.name, p.value));
  return ckpt;
}

template <typename Scalar>
Model<Scalar> model_from_checkpoint(const Checkpoint& ckpt) {
  Model<Scalar> model(net_config_from_meta(ckpt.meta), 0);
  for (auto& p : model.parameters()) {
    const TensorBlock* b = ckpt.find(p.name);
    require(b != nullptr, "checkpoint: missing parameter '" + p.name + "'");
    require(b->rows == p.value.rows() && b->cols == p.value.cols(), "checkpoint: shape mismatch for '" + p.name + "'");
    p.value = from_block<Scalar>(*b);
  }
  return model;
}

template TensorBlock to_block<float>(const std::string&, const ad::Matrix<float>&);
template TensorBlock to_block<double>(const std::string&, const ad::Matrix<double>&);
template ad::Matrix<float> from_block<float>(const TensorBlock&);
template ad::Matrix<double> from_block<double>(const TensorBlock&);
template Checkpoint model_checkpoint<float>(const Model<float>&);
template Checkpoint model_checkpoint<double>(const Model<double>&);
template Model<float> model_from_checkpoint<float>(const Checkpoint&);
template Model<double> model_from_checkpoint<double>(const Checkpoint&);

}  // namespace tssr
