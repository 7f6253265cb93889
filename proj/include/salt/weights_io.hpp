#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "salt/tensor.hpp"

namespace salt {

// SALTW1 checkpoint format. Layout:
//   magic "SALTW1\0\0"
//   u32 tensor count
//   per tensor: u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
//               raw little-endian 32-bit reals
// All integers little-endian.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

std::vector<uint8_t> encode_saltw(const NamedTensors& tensors);
NamedTensors decode_saltw(const std::vector<uint8_t>& bytes);

void save_saltw(const std::string& path, const NamedTensors& tensors);
NamedTensors load_saltw(const std::string& path);

} // namespace salt
