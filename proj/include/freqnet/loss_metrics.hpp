// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "freqnet/dct_codec.hpp"
#include "freqnet/image.hpp"
#include "freqnet/tensor.hpp"

namespace freqnet {

struct CharbonnierParams {
  double epsilon = 1e-3;
  void validate() const;
};

/// Per-channel loss weights. Channel (u, v) belongs to annulus max(u, v) + 1;
/// annuli 1..3 are merged into the core region "3".
struct WeightProfile {
  int r = 0;
  std::vector<double> betas;          // R*R, indexed by flattened channel
  std::vector<double> annulus_table;  // R-2 entries: region "3", then "4-3" ... "R-(R-1)"
  std::string id;
};

/// Label k of channel (u, v): 3 for the 3x3 core, else max(u, v) + 1.
int annulus_of(int u, int v);
std::string annulus_label(int k);
/// Parses "3" or "k-(k-1)" (e.g. "6-5"); throws InvalidInput otherwise.
int parse_annulus_label(const std::string& label);
/// Flattened channel indices of annulus k inside an R x R region, ascending.
std::vector<int> annulus_channels(int r, int k);

/// Weights 1, 1, 5, 10, 10, 5, 1, 1 over regions 3, 4-3, ..., 10-9. R must be 10.
WeightProfile table1_weights(int r = 10);
/// User-supplied table with one positive weight per region.
WeightProfile weights_from_table(int r, std::vector<double> table, std::string id = "custom");
WeightProfile uniform_weights(int r);

double charbonnier(double x1, double x2, CharbonnierParams p = {});

/// Weighted mean Charbonnier distance between two equally normalized map sets.
double freq_loss(const FreqMaps& sr, const FreqMaps& hr, const WeightProfile& w,
                 CharbonnierParams p = {});
/// Differentiable batch version on [N, R*R, Hb, Wb] tensors; mean over the batch.
Tensor freq_loss(const Tensor& sr, const Tensor& hr, const WeightProfile& w, CharbonnierParams p = {});

/// -10 log10(l).
double frm(double l_freq);

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();
/// PSNR (peak 255) between the full-range luma planes of two images.
double psnr_y(const Image& a, const Image& b);

struct ResidualProfile {
  std::array<double, 8> res{};
  std::array<double, 8> v{};
  long long sample_count = 0;
};

struct GridPair {
  BlockGrid hr;
  BlockGrid lr_up;
};

/// For i = 1..8, keep the top-left (i+2) x (i+2) coefficients of both blocks,
/// inverse-transform, and average the absolute pixel difference over all
/// pixels and blocks. v_i = res_i - res_{i-1} with res_0 = 0.
ResidualProfile region_residual_profile(std::span<const GridPair> pairs);

}  // namespace freqnet
