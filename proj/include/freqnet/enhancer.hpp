// SPDX-License-Identifier: Apache-2.0
//
// Channel merge: overwrite selected frequency channels of a third-party SR
// result with FreqNet's predictions, then reconstruct.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "freqnet/dct_codec.hpp"
#include "freqnet/image.hpp"

namespace freqnet {

/// Sorted, unique channel indices in [0, R*R).
struct ChannelSelection {
  int r = 0;
  std::vector<int> channels;

  bool contains(int c) const;
  static ChannelSelection none(int r);
  static ChannelSelection all(int r);
  /// Comma-separated indices, index ranges "a-b" and annulus labels "annulus:6-5".
  static ChannelSelection parse(const std::string& text, int r);
  ChannelSelection operator|(const ChannelSelection& o) const;
};

struct ImageMaps {
  FreqMaps maps;  // unnormalized
  BlockGrid grid;
};

/// Luma -> blocks -> maps. Dims must be multiples of the block size.
ImageMaps image_to_maps(const Image& img, int r = kDefaultRegion, int m = kBlockSize);

/// Channel c taken from `freqnet` when selected, otherwise from `original`.
FreqMaps merge_channels(const FreqMaps& original, const FreqMaps& freqnet, const ChannelSelection& sel);

struct Chroma {
  Plane cb;
  Plane cr;
};

/// Stage-1 fill, inverse transform, un-shift, recombine with chroma, clamp.
/// Without chroma the result is a one-channel image.
Image reconstruct_merged(const FreqMaps& maps, const BlockGrid& fill, const std::optional<Chroma>& chroma);

/// Luma plane (level-shifted, unclamped) that reconstruct_merged would produce.
Plane reconstruct_luma(const FreqMaps& maps, const BlockGrid& fill);

enum class FillMode {
  lr,  // out-of-band coefficients from the upscaled LR image
  sr,  // out-of-band coefficients from the SR image itself
};
FillMode parse_fill_mode(const std::string& s);

/// Chroma of a three-channel image, or nothing for grayscale.
std::optional<Chroma> chroma_of(const Image& img);

/// Center-crops to block multiples, warning when anything is cut.
Image align_to_blocks(const Image& img, int m, const std::string& what);

}  // namespace freqnet
