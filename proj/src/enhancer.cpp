// SPDX-License-Identifier: Apache-2.0
#include "freqnet/enhancer.hpp"

#include <algorithm>
#include <iostream>
#include <sstream>

#include "freqnet/error.hpp"
#include "freqnet/loss_metrics.hpp"

namespace freqnet {

bool ChannelSelection::contains(int c) const { return std::binary_search(channels.begin(), channels.end(), c); }

ChannelSelection ChannelSelection::none(int r) { return {r, {}}; }

ChannelSelection ChannelSelection::all(int r) {
  ChannelSelection s{r, std::vector<int>(static_cast<std::size_t>(r) * r)};
  for (int c = 0; c < r * r; ++c) s.channels[c] = c;
  return s;
}

namespace {

int parse_index(const std::string& s) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw InvalidInput("selection: '" + s + "' is not a channel index");
  return v;
}

}  // namespace

ChannelSelection ChannelSelection::parse(const std::string& text, int r) {
  if (r <= 0) throw InvalidInput("selection: R must be positive");
  std::vector<int> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (tok.empty()) continue;
    if (tok.rfind("annulus:", 0) == 0) {
      for (int c : annulus_channels(r, parse_annulus_label(tok.substr(8)))) out.push_back(c);
      continue;
    }
    const auto dash = tok.find('-', 1);
    int lo = 0, hi = 0;
    if (dash == std::string::npos) {
      lo = hi = parse_index(tok);
    } else {
      lo = parse_index(tok.substr(0, dash));
      hi = parse_index(tok.substr(dash + 1));
    }
    if (lo < 0 || hi >= r * r || lo > hi)
      throw InvalidInput("selection: '" + tok + "' outside [0, " + std::to_string(r * r) + ")");
    for (int c = lo; c <= hi; ++c) out.push_back(c);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return {r, std::move(out)};
}

ChannelSelection ChannelSelection::operator|(const ChannelSelection& o) const {
  if (r != o.r) throw InvalidInput("selection: cannot combine selections for different R");
  ChannelSelection s{r, {}};
  std::set_union(channels.begin(), channels.end(), o.channels.begin(), o.channels.end(),
                 std::back_inserter(s.channels));
  return s;
}

ImageMaps image_to_maps(const Image& img, int r, int m) {
  if (img.width <= 0 || img.height <= 0 || img.width % m || img.height % m)
    throw InvalidInput("image_to_maps: " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                       " is not a multiple of " + std::to_string(m));
  ImageMaps out;
  out.grid = plane_to_blocks(luma_plane(img), m);
  out.maps = reform_to_maps(out.grid, {r});
  return out;
}

FreqMaps merge_channels(const FreqMaps& original, const FreqMaps& freqnet, const ChannelSelection& sel) {
  if (!original.same_shape(freqnet) || original.m != freqnet.m)
    throw InvalidInput("merge_channels: map shapes differ");
  if (original.normalized || freqnet.normalized)
    throw InvalidInput("merge_channels: maps must be unnormalized");
  if (sel.r != original.r) throw InvalidInput("merge_channels: selection R does not match the maps");
  for (int c : sel.channels)
    if (c < 0 || c >= original.channels()) throw InvalidInput("merge_channels: channel out of range");
  FreqMaps out = original;
  const std::size_t plane = out.plane_size();
  for (int c : sel.channels)
    std::copy_n(freqnet.data.begin() + c * plane, plane, out.data.begin() + c * plane);
  return out;
}

Plane reconstruct_luma(const FreqMaps& maps, const BlockGrid& fill) {
  if (fill.blocks.empty()) throw InvalidInput("reconstruct: missing fill grid");
  return blocks_to_plane(maps_to_blocks(maps, fill));
}

Image reconstruct_merged(const FreqMaps& maps, const BlockGrid& fill, const std::optional<Chroma>& chroma) {
  const Plane y = reconstruct_luma(maps, fill);
  if (!chroma) {
    Image out(y.width, y.height, 1);
    for (std::size_t i = 0; i < y.data.size(); ++i) out.planes[0].data[i] = std::clamp(y.data[i] + 128.0, 0.0, 255.0);
    return out;
  }
  if (!chroma->cb.same_size(y) || !chroma->cr.same_size(y))
    throw InvalidInput("reconstruct: chroma planes do not match the luma size");
  return ycc_to_rgb(YccImage{y, chroma->cb, chroma->cr});
}

FillMode parse_fill_mode(const std::string& s) {
  if (s == "lr") return FillMode::lr;
  if (s == "sr") return FillMode::sr;
  throw InvalidInput("fill mode must be 'lr' or 'sr', got '" + s + "'");
}

std::optional<Chroma> chroma_of(const Image& img) {
  if (img.channels() != 3) return std::nullopt;
  YccImage ycc = rgb_to_ycc(img);
  return Chroma{std::move(ycc.cb), std::move(ycc.cr)};
}

Image align_to_blocks(const Image& img, int m, const std::string& what) {
  if (img.width % m == 0 && img.height % m == 0) return img;
  Image out = center_crop_to_multiple(img, m);
  std::clog << "freqnet: warning: " << what << " (" << img.width << "x" << img.height << ") center-cropped to "
            << out.width << "x" << out.height << '\n';
  return out;
}

}  // namespace freqnet
