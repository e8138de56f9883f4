// SPDX-License-Identifier: Apache-2.0
//
// "FQW1" named-tensor container:
//   magic "FQW1", u32 count, then per tensor
//   u32 name_len, name bytes, u32 rank, u32 dims[rank], f32 data[prod(dims)]
// All integers and floats little-endian.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "freqnet/tensor.hpp"

namespace freqnet {

using NamedTensors = std::map<std::string, Tensor>;

void write_tensors(std::ostream& os, const NamedTensors& tensors);
NamedTensors read_tensors(std::istream& is);
void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_tensors(const std::filesystem::path& path);

}  // namespace freqnet
