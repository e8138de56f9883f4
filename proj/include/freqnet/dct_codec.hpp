// SPDX-License-Identifier: Apache-2.0
//
// Block DCT codec: spatial planes <-> normalized DCT feature maps.
//
// A plane is tiled into non-overlapping M x M blocks (row-major grid order),
// each block is transformed by an orthonormal 2-D DCT-II, and the top-left
// R x R coefficients of every block are gathered into R*R feature maps of
// size (H/M) x (W/M). Channel c holds coefficient (u, v) = (c / R, c % R).
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "freqnet/image.hpp"

namespace freqnet {

inline constexpr int kBlockSize = 32;
inline constexpr int kDefaultRegion = 10;
inline constexpr double kStdFloor = 1e-8;

template <class Tag>
struct Block {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  Block() = default;
  explicit Block(int m) : Block(m, m) {}
  Block(int r, int c) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, 0.0) {}

  bool square() const { return rows == cols; }
  int size() const { return rows; }
  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * cols + j]; }
  bool operator==(const Block&) const = default;
};

struct PixelTag {};
struct DctTag {};
/// Spatial M x M block; P(i, j) with i the row.
using PixelBlock = Block<PixelTag>;
/// Frequency M x M block; D(u, v) with u the vertical frequency.
using DctBlock = Block<DctTag>;

struct RegionSpec {
  int r = kDefaultRegion;
  /// Throws InvalidInput unless 1 <= r <= block_size.
  void validate(int block_size) const;
};

/// Row-major grid of equally sized DCT blocks.
struct BlockGrid {
  int rows = 0;
  int cols = 0;
  std::vector<DctBlock> blocks;

  DctBlock& at(int by, int bx) { return blocks[static_cast<std::size_t>(by) * cols + bx]; }
  const DctBlock& at(int by, int bx) const {
    return blocks[static_cast<std::size_t>(by) * cols + bx];
  }
  /// Block size, after checking the grid is rectangular and uniform.
  int block_size() const;
};

/// Rank-3 [R*R, Hb, Wb] array, channel-major.
struct FreqMaps {
  int r = 0;
  int m = kBlockSize;
  int hb = 0;
  int wb = 0;
  bool normalized = false;
  std::vector<double> data;

  FreqMaps() = default;
  FreqMaps(int region, int block_size, int grid_h, int grid_w);

  int channels() const { return r * r; }
  std::size_t plane_size() const { return static_cast<std::size_t>(hb) * wb; }
  double& at(int c, int y, int x) { return data[c * plane_size() + static_cast<std::size_t>(y) * wb + x]; }
  double at(int c, int y, int x) const {
    return data[c * plane_size() + static_cast<std::size_t>(y) * wb + x];
  }
  bool same_shape(const FreqMaps& o) const { return r == o.r && hb == o.hb && wb == o.wb; }
};

struct ChannelStats {
  int r = 0;
  std::vector<double> means;
  std::vector<double> stds;
  long long sample_count = 0;
};

DctBlock forward_dct_block(const PixelBlock& p);
PixelBlock inverse_dct_block(const DctBlock& d);

BlockGrid plane_to_blocks(const Plane& plane, int m = kBlockSize);
Plane blocks_to_plane(const BlockGrid& grid);

/// Keep the top-left R x R corner of each block, flattened row-major.
FreqMaps reform_to_maps(const BlockGrid& grid, RegionSpec region = {});
/// Stage-1 inverse: copy of `fill` with each block's R x R corner overwritten from `maps`.
BlockGrid maps_to_blocks(const FreqMaps& maps, const BlockGrid& fill);

/// Per-channel mean and population std over every position of every sample.
ChannelStats compute_channel_stats(std::span<const FreqMaps> dataset);
FreqMaps normalize(const FreqMaps& maps, const ChannelStats& stats);
FreqMaps denormalize(const FreqMaps& maps, const ChannelStats& stats);

/// plane -> blocks -> maps, unnormalized.
FreqMaps plane_to_maps(const Plane& plane, RegionSpec region = {}, int m = kBlockSize);

// "FQM1" binary container.
void write_freq_maps(const std::filesystem::path& path, const FreqMaps& maps);
FreqMaps read_freq_maps(const std::filesystem::path& path);

// {"r", "means", "stds", "samples"} JSON.
std::string stats_to_json(const ChannelStats& stats);
ChannelStats stats_from_json(const std::string& text);
void save_stats(const std::filesystem::path& path, const ChannelStats& stats);
ChannelStats load_stats(const std::filesystem::path& path);
/// Short content hash used to tag reports with the stats they were computed under.
std::string stats_id(const ChannelStats& stats);

}  // namespace freqnet
