// SPDX-License-Identifier: Apache-2.0
#include "freqnet/dct_codec.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "freqnet/error.hpp"

namespace freqnet {

namespace {

// Orthonormal DCT-II basis, basis[u * m + i] = s(u) cos((2i + 1) u pi / 2m).
const std::vector<double>& dct_basis(int m) {
  static std::mutex mu;
  static std::map<int, std::vector<double>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(m);
  if (it != cache.end()) return it->second;
  std::vector<double> basis(static_cast<std::size_t>(m) * m);
  for (int u = 0; u < m; ++u) {
    const double s = u == 0 ? std::sqrt(1.0 / m) : std::sqrt(2.0 / m);
    for (int i = 0; i < m; ++i)
      basis[static_cast<std::size_t>(u) * m + i] =
          s * std::cos((2 * i + 1) * u * std::numbers::pi / (2.0 * m));
  }
  return cache.emplace(m, std::move(basis)).first->second;
}

// out = A * in * A^T (forward) or A^T * in * A (inverse), all m x m.
void separable(const std::vector<double>& a, const std::vector<double>& in, std::vector<double>& out,
               int m, bool transpose) {
  std::vector<double> tmp(static_cast<std::size_t>(m) * m, 0.0);
  auto A = [&](int r, int c) { return transpose ? a[c * m + r] : a[r * m + c]; };
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) {
      double acc = 0.0;
      for (int k = 0; k < m; ++k) acc += A(r, k) * in[k * m + c];
      tmp[r * m + c] = acc;
    }
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) {
      double acc = 0.0;
      for (int k = 0; k < m; ++k) acc += tmp[r * m + k] * A(c, k);
      out[r * m + c] = acc;
    }
}

}  // namespace

void RegionSpec::validate(int block_size) const {
  if (r < 1 || r > block_size)
    throw InvalidInput("region R=" + std::to_string(r) + " outside [1, " +
                       std::to_string(block_size) + "]");
}

int BlockGrid::block_size() const {
  if (rows <= 0 || cols <= 0 || blocks.size() != static_cast<std::size_t>(rows) * cols)
    throw InvalidInput("ragged or empty block grid");
  const int m = blocks.front().rows;
  for (const auto& b : blocks)
    if (!b.square() || b.rows != m) throw InvalidInput("block grid has non-uniform block sizes");
  return m;
}

FreqMaps::FreqMaps(int region, int block_size, int grid_h, int grid_w)
    : r(region), m(block_size), hb(grid_h), wb(grid_w),
      data(static_cast<std::size_t>(region) * region * grid_h * grid_w, 0.0) {}

DctBlock forward_dct_block(const PixelBlock& p) {
  if (!p.square() || p.rows == 0) throw InvalidInput("forward_dct_block: block must be square");
  DctBlock d(p.rows);
  separable(dct_basis(p.rows), p.values, d.values, p.rows, false);
  return d;
}

PixelBlock inverse_dct_block(const DctBlock& d) {
  if (!d.square() || d.rows == 0) throw InvalidInput("inverse_dct_block: block must be square");
  PixelBlock p(d.rows);
  separable(dct_basis(d.rows), d.values, p.values, d.rows, true);
  return p;
}

BlockGrid plane_to_blocks(const Plane& plane, int m) {
  if (m <= 0 || plane.width == 0 || plane.height == 0 || plane.width % m || plane.height % m)
    throw InvalidInput("plane_to_blocks: " + std::to_string(plane.width) + "x" +
                       std::to_string(plane.height) + " is not a multiple of block size " +
                       std::to_string(m));
  BlockGrid grid;
  grid.rows = plane.height / m;
  grid.cols = plane.width / m;
  grid.blocks.resize(static_cast<std::size_t>(grid.rows) * grid.cols);
  dct_basis(m);
  const int n = grid.rows * grid.cols;
#pragma omp parallel for schedule(static)
  for (int k = 0; k < n; ++k) {
    const int by = k / grid.cols;
    const int bx = k % grid.cols;
    PixelBlock p(m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) p.at(i, j) = plane.at(bx * m + j, by * m + i);
    grid.blocks[k] = forward_dct_block(p);
  }
  return grid;
}

Plane blocks_to_plane(const BlockGrid& grid) {
  const int m = grid.block_size();
  Plane out(grid.cols * m, grid.rows * m);
  dct_basis(m);
  const int n = grid.rows * grid.cols;
#pragma omp parallel for schedule(static)
  for (int k = 0; k < n; ++k) {
    const int by = k / grid.cols;
    const int bx = k % grid.cols;
    const PixelBlock p = inverse_dct_block(grid.blocks[k]);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) out.at(bx * m + j, by * m + i) = p.at(i, j);
  }
  return out;
}

FreqMaps reform_to_maps(const BlockGrid& grid, RegionSpec region) {
  const int m = grid.block_size();
  region.validate(m);
  const int r = region.r;
  FreqMaps maps(r, m, grid.rows, grid.cols);
  for (int by = 0; by < grid.rows; ++by)
    for (int bx = 0; bx < grid.cols; ++bx) {
      const auto& b = grid.at(by, bx);
      for (int u = 0; u < r; ++u)
        for (int v = 0; v < r; ++v) maps.at(u * r + v, by, bx) = b.at(u, v);
    }
  return maps;
}

BlockGrid maps_to_blocks(const FreqMaps& maps, const BlockGrid& fill) {
  if (maps.normalized) throw StateError("maps_to_blocks: maps must be denormalized first");
  const int m = fill.block_size();
  if (fill.rows != maps.hb || fill.cols != maps.wb)
    throw InvalidInput("maps_to_blocks: fill grid is " + std::to_string(fill.rows) + "x" +
                       std::to_string(fill.cols) + ", maps are " + std::to_string(maps.hb) + "x" +
                       std::to_string(maps.wb));
  if (maps.r > m) throw InvalidInput("maps_to_blocks: region larger than fill block");
  if (maps.data.size() != static_cast<std::size_t>(maps.channels()) * maps.plane_size())
    throw InvalidInput("maps_to_blocks: maps data size does not match header");
  BlockGrid out = fill;
  const int r = maps.r;
  for (int by = 0; by < maps.hb; ++by)
    for (int bx = 0; bx < maps.wb; ++bx) {
      auto& b = out.at(by, bx);
      for (int u = 0; u < r; ++u)
        for (int v = 0; v < r; ++v) b.at(u, v) = maps.at(u * r + v, by, bx);
    }
  return out;
}

ChannelStats compute_channel_stats(std::span<const FreqMaps> dataset) {
  if (dataset.empty()) throw InvalidInput("compute_channel_stats: empty dataset");
  const int r = dataset.front().r;
  const int channels = r * r;
  ChannelStats stats;
  stats.r = r;
  stats.means.assign(channels, 0.0);
  stats.stds.assign(channels, 0.0);
  stats.sample_count = static_cast<long long>(dataset.size());
  // Welford accumulation per channel.
  std::vector<double> m2(channels, 0.0);
  std::vector<long long> count(channels, 0);
  for (const auto& maps : dataset) {
    if (maps.r != r) throw InvalidInput("compute_channel_stats: mixed region sizes in dataset");
    if (maps.normalized) throw StateError("compute_channel_stats: dataset must be unnormalized");
    for (int c = 0; c < channels; ++c)
      for (std::size_t k = 0; k < maps.plane_size(); ++k) {
        const double x = maps.data[c * maps.plane_size() + k];
        const long long n = ++count[c];
        const double delta = x - stats.means[c];
        stats.means[c] += delta / static_cast<double>(n);
        m2[c] += delta * (x - stats.means[c]);
      }
  }
  for (int c = 0; c < channels; ++c) {
    if (count[c] == 0) throw InvalidInput("compute_channel_stats: dataset has no positions");
    stats.stds[c] = std::max(std::sqrt(m2[c] / static_cast<double>(count[c])), kStdFloor);
  }
  return stats;
}

namespace {

void check_stats(const FreqMaps& maps, const ChannelStats& stats) {
  if (stats.r != maps.r || stats.means.size() != static_cast<std::size_t>(maps.channels()) ||
      stats.stds.size() != stats.means.size())
    throw InvalidInput("channel stats do not match maps (R=" + std::to_string(maps.r) + ")");
  for (double s : stats.stds)
    if (!(s > 0.0)) throw InvalidInput("channel stats contain a non-positive std");
}

}  // namespace

FreqMaps normalize(const FreqMaps& maps, const ChannelStats& stats) {
  if (maps.normalized) throw StateError("normalize: maps are already normalized");
  check_stats(maps, stats);
  FreqMaps out = maps;
  for (int c = 0; c < maps.channels(); ++c)
    for (std::size_t k = 0; k < maps.plane_size(); ++k) {
      auto& x = out.data[c * maps.plane_size() + k];
      x = (x - stats.means[c]) / stats.stds[c];
    }
  out.normalized = true;
  return out;
}

FreqMaps denormalize(const FreqMaps& maps, const ChannelStats& stats) {
  if (!maps.normalized) throw StateError("denormalize: maps are not normalized");
  check_stats(maps, stats);
  FreqMaps out = maps;
  for (int c = 0; c < maps.channels(); ++c)
    for (std::size_t k = 0; k < maps.plane_size(); ++k) {
      auto& x = out.data[c * maps.plane_size() + k];
      x = x * stats.stds[c] + stats.means[c];
    }
  out.normalized = false;
  return out;
}

FreqMaps plane_to_maps(const Plane& plane, RegionSpec region, int m) {
  return reform_to_maps(plane_to_blocks(plane, m), region);
}

void write_freq_maps(const std::filesystem::path& path, const FreqMaps& maps) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  os.write("FQM1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(maps.r));
  detail::put_u32(os, static_cast<std::uint32_t>(maps.m));
  detail::put_u32(os, static_cast<std::uint32_t>(maps.hb));
  detail::put_u32(os, static_cast<std::uint32_t>(maps.wb));
  detail::put_u32(os, maps.normalized ? 1u : 0u);
  for (double v : maps.data) detail::put_f32(os, static_cast<float>(v));
  if (!os) throw RuntimeFailure("failed writing " + path.string());
}

FreqMaps read_freq_maps(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open " + path.string());
  detail::expect_magic(is, "FQM1");
  const int r = static_cast<int>(detail::get_u32(is));
  const int m = static_cast<int>(detail::get_u32(is));
  const int hb = static_cast<int>(detail::get_u32(is));
  const int wb = static_cast<int>(detail::get_u32(is));
  const auto flag = detail::get_u32(is);
  if (r < 1 || r > m || hb < 1 || wb < 1 || flag > 1)
    throw InvalidInput("invalid FQM1 header in " + path.string());
  FreqMaps maps(r, m, hb, wb);
  maps.normalized = flag == 1;
  for (auto& v : maps.data) v = detail::get_f32(is);
  return maps;
}

std::string stats_to_json(const ChannelStats& stats) {
  nlohmann::json j;
  j["r"] = stats.r;
  j["means"] = stats.means;
  j["stds"] = stats.stds;
  j["samples"] = stats.sample_count;
  return j.dump(2);
}

ChannelStats stats_from_json(const std::string& text) {
  ChannelStats stats;
  try {
    const auto j = nlohmann::json::parse(text);
    stats.r = j.at("r").get<int>();
    stats.means = j.at("means").get<std::vector<double>>();
    stats.stds = j.at("stds").get<std::vector<double>>();
    stats.sample_count = j.at("samples").get<long long>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed channel stats: ") + e.what());
  }
  const auto n = static_cast<std::size_t>(stats.r) * stats.r;
  if (stats.r < 1 || stats.means.size() != n || stats.stds.size() != n)
    throw InvalidInput("channel stats: array lengths do not match r*r");
  for (double s : stats.stds)
    if (!(s > 0.0)) throw InvalidInput("channel stats: stds must be positive");
  return stats;
}

void save_stats(const std::filesystem::path& path, const ChannelStats& stats) {
  std::ofstream os(path);
  if (!os) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  os << stats_to_json(stats) << '\n';
}

ChannelStats load_stats(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot open stats file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return stats_from_json(ss.str());
}

std::string stats_id(const ChannelStats& stats) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ull;
  };
  mix(&stats.r, sizeof stats.r);
  for (double v : stats.means) mix(&v, sizeof v);
  for (double v : stats.stds) mix(&v, sizeof v);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace freqnet
