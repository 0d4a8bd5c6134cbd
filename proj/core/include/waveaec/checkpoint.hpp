#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "waveaec/tensor.hpp"

// Flat tensor container. Layout, all little-endian:
//   magic "WAECKPT1" (8 bytes), u32 tensor count, then per tensor:
//   u32 name length, UTF-8 name bytes, u8 dtype tag (0 = f32, 1 = f64),
//   u32 rank, u32 dims..., raw values.
// Round-trips bit-exactly.

namespace waveaec {

constexpr char kCheckpointMagic[8] = {'W', 'A', 'E', 'C', 'K', 'P', 'T', '1'};

template <typename T>
constexpr uint8_t dtype_tag() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 0 : 1;
}

namespace detail {

inline void write_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

inline uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("checkpoint: truncated file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (uint32_t(b[3]) << 24);
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<T>>>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot open for writing: " + path);
  os.write(kCheckpointMagic, 8);
  detail::write_u32(os, uint32_t(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::write_u32(os, uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    const uint8_t tag = dtype_tag<T>();
    os.write(reinterpret_cast<const char*>(&tag), 1);
    detail::write_u32(os, uint32_t(t->shape.size()));
    for (int d : t->shape) detail::write_u32(os, uint32_t(d));
    os.write(reinterpret_cast<const char*>(t->v.data()),
             std::streamsize(t->v.size() * sizeof(T)));
  }
  if (!os) throw DataError("checkpoint: short write: " + path);
}

template <typename T>
std::map<std::string, Tensor<T>> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  const uint32_t count = detail::read_u32(is);
  std::map<std::string, Tensor<T>> out;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = detail::read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint8_t tag = 0;
    is.read(reinterpret_cast<char*>(&tag), 1);
    if (!is) throw DataError("checkpoint: truncated file: " + path);
    if (tag != dtype_tag<T>())
      throw DataError("checkpoint: dtype tag " + std::to_string(tag) +
                      " does not match build scalar for tensor " + name);
    const uint32_t rank = detail::read_u32(is);
    std::vector<int> shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = int(detail::read_u32(is));
    auto t = make_tensor<T>(shape);
    is.read(reinterpret_cast<char*>(t->v.data()),
            std::streamsize(t->v.size() * sizeof(T)));
    if (!is) throw DataError("checkpoint: truncated tensor data: " + path);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

// FNV-1a over the file bytes; used to verify frozen parameters stay frozen.
inline uint64_t file_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open for hashing: " + path);
  uint64_t h = 14695981039346656037ull;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= uint64_t(static_cast<unsigned char>(buf[i]));
      h *= 1099511628211ull;
    }
    if (!is) break;
  }
  return h;
}

}  // namespace waveaec
