// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "freqnet/image.hpp"
#include "freqnet/tensor.hpp"

namespace freqnet::test {

using Rng = std::mt19937_64;

inline int rand_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline double rand_real(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline std::vector<double> rand_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rand_real(rng, lo, hi);
  return v;
}

inline Tensor rand_tensor(Rng& rng, Shape s, bool grad = false) {
  const auto n = numel(s);
  return Tensor::from(std::move(s), rand_vec(rng, n), grad);
}

inline Image rand_image(Rng& rng, int w, int h, int channels) {
  Image img(w, h, channels);
  for (auto& p : img.planes)
    for (auto& v : p.data) v = rand_int(rng, 0, 255);
  return img;
}

inline Plane rand_plane(Rng& rng, int w, int h, double lo = -128.0, double hi = 127.0) {
  Plane p(w, h);
  p.data = rand_vec(rng, p.data.size(), lo, hi);
  return p;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("freqnet_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace freqnet::test
