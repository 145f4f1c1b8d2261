// Copyright 2026 The FasterPose Toolkit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoint layout (all integers little-endian):
//
//   8 bytes   magic "FPCKPT01"
//   u32       version (1)
//   u64       entry count
//   per entry:
//     u64     name length, then the name bytes (no terminator)
//     u32     rank (1..4)
//     u64     one extent per axis
//     f64     elements, row-major, IEEE-754 binary64

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "fasterpose/tensor.hpp"

namespace fasterpose {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <Real T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

namespace checkpoint {

inline constexpr std::array<char, 8> kMagic = {'F', 'P', 'C', 'K',
                                               'P', 'T', '0', '1'};
inline constexpr std::uint32_t kVersion = 1;

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 4);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8))
    throw CheckpointError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char buf[4];
  if (!is.read(reinterpret_cast<char*>(buf), 4))
    throw CheckpointError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

}  // namespace detail

template <Real T>
void write(std::ostream& os, const std::vector<NamedTensor<T>>& entries) {
  os.write(kMagic.data(), kMagic.size());
  detail::put_u32(os, kVersion);
  detail::put_u64(os, entries.size());
  for (const auto& e : entries) {
    detail::put_u64(os, e.name.size());
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(e.value.rank()));
    for (auto extent : e.value.shape()) detail::put_u64(os, extent);
    for (auto v : e.value.data()) {
      detail::put_u64(os, std::bit_cast<std::uint64_t>(static_cast<double>(v)));
    }
  }
  if (!os) throw CheckpointError("checkpoint write failed");
}

template <Real T>
std::vector<NamedTensor<T>> read(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto version = detail::get_u32(is);
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version));
  }
  const auto count = detail::get_u64(is);
  std::vector<NamedTensor<T>> entries;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = detail::get_u64(is);
    if (name_len > (1u << 20)) throw CheckpointError("entry name too long");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name_len)))
      throw CheckpointError("checkpoint truncated");
    const auto rank = detail::get_u32(is);
    if (rank == 0 || rank > 4) {
      throw CheckpointError("entry '" + name + "' has invalid rank " +
                            std::to_string(rank));
    }
    Shape shape(rank);
    for (auto& extent : shape) extent = detail::get_u64(is);
    std::vector<T> data(shape_numel(shape));
    for (auto& v : data) {
      v = static_cast<T>(std::bit_cast<double>(detail::get_u64(is)));
    }
    entries.push_back({std::move(name), Tensor<T>(shape, std::move(data))});
  }
  return entries;
}

template <Real T>
void save(const std::string& path, const std::vector<NamedTensor<T>>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  write(os, entries);
}

template <Real T>
std::vector<NamedTensor<T>> load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  return read<T>(is);
}

}  // namespace checkpoint
}  // namespace fasterpose
