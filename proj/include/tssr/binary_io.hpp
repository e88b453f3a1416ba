#pragma once

#include "tssr/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace tssr::bin {

// Explicit little-endian encoding independent of host byte order.

template <typename U>
void put_uint(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float value) { put_uint(out, std::bit_cast<std::uint32_t>(value)); }

inline void put_bytes(std::string& out, std::string_view bytes) { out.append(bytes); }

class Reader {
 public:
  Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  template <typename U>
  U get_uint() {
    need(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      value |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return value;
  }

  float get_f32() { return std::bit_cast<float>(get_uint<std::uint32_t>()); }

  std::string_view get_bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void expect_magic(std::string_view magic) {
    if (get_bytes(magic.size()) != magic) throw ValidationError(what_ + ": bad magic");
  }

  bool at_end() const { return pos_ == data_.size(); }
  std::size_t position() const { return pos_; }
  void seek(std::size_t pos) {
    if (pos > data_.size()) throw ValidationError(what_ + ": offset out of range");
    pos_ = pos;
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ValidationError(what_ + ": truncated");
  }

  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace tssr::bin
