// SPDX-License-Identifier: Apache-2.0
#include "freqnet/checkpoint.hpp"

#include <fstream>

#include "binary_io.hpp"
#include "freqnet/error.hpp"

namespace freqnet {

void write_tensors(std::ostream& os, const NamedTensors& tensors) {
  os.write("FQW1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) detail::put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) detail::put_f32(os, static_cast<float>(v));
  }
}

NamedTensors read_tensors(std::istream& is) {
  detail::expect_magic(is, "FQW1");
  const auto count = detail::get_u32(is);
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::get_u32(is);
    if (len == 0 || len > 4096) throw InvalidInput("FQW1: implausible tensor name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw InvalidInput("FQW1: truncated tensor name");
    const auto rank = detail::get_u32(is);
    if (rank < 1 || rank > 4) throw InvalidInput("FQW1: tensor '" + name + "' has invalid rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(detail::get_u32(is));
    std::vector<double> data(numel(shape));
    for (auto& v : data) v = detail::get_f32(is);
    if (!out.emplace(name, Tensor::from(shape, std::move(data))).second)
      throw InvalidInput("FQW1: duplicate tensor '" + name + "'");
  }
  return out;
}

void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  write_tensors(os, tensors);
  if (!os) throw RuntimeFailure("failed writing " + path.string());
}

NamedTensors load_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open checkpoint " + path.string());
  return read_tensors(is);
}

}  // namespace freqnet
