// SPDX-License-Identifier: Apache-2.0
#include "freqnet/loss_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "freqnet/error.hpp"

namespace freqnet {

void CharbonnierParams::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw InvalidInput("charbonnier epsilon must be positive");
}

int annulus_of(int u, int v) { return std::max(3, std::max(u, v) + 1); }

std::string annulus_label(int k) {
  return k == 3 ? "3" : std::to_string(k) + "-" + std::to_string(k - 1);
}

int parse_annulus_label(const std::string& label) {
  if (label == "3") return 3;
  const auto dash = label.find('-');
  try {
    if (dash != std::string::npos) {
      std::size_t used_a = 0, used_b = 0;
      const std::string a_str = label.substr(0, dash), b_str = label.substr(dash + 1);
      const int a = std::stoi(a_str, &used_a);
      const int b = std::stoi(b_str, &used_b);
      if (used_a == a_str.size() && used_b == b_str.size() && a >= 4 && b == a - 1) return a;
    }
  } catch (const std::exception&) {
  }
  throw InvalidInput("invalid annulus label '" + label + "' (expected \"3\" or \"k-(k-1)\")");
}

std::vector<int> annulus_channels(int r, int k) {
  if (k < 3 || k > r) throw InvalidInput("annulus " + annulus_label(k) + " outside R=" + std::to_string(r));
  std::vector<int> out;
  for (int u = 0; u < r; ++u)
    for (int v = 0; v < r; ++v)
      if (annulus_of(u, v) == k) out.push_back(u * r + v);
  return out;
}

WeightProfile weights_from_table(int r, std::vector<double> table, std::string id) {
  if (r < 3) throw InvalidInput("weight profiles need R >= 3");
  if (table.size() != static_cast<std::size_t>(r - 2))
    throw InvalidInput("weight table for R=" + std::to_string(r) + " needs " +
                       std::to_string(r - 2) + " entries");
  for (double b : table)
    if (!(b > 0.0)) throw InvalidInput("weight table entries must be positive");
  WeightProfile w;
  w.r = r;
  w.id = std::move(id);
  w.betas.resize(static_cast<std::size_t>(r) * r);
  for (int u = 0; u < r; ++u)
    for (int v = 0; v < r; ++v) w.betas[u * r + v] = table[annulus_of(u, v) - 3];
  w.annulus_table = std::move(table);
  return w;
}

WeightProfile table1_weights(int r) {
  if (r != 10) throw InvalidInput("the reference weight table is defined for R=10 only; supply a table");
  return weights_from_table(10, {1, 1, 5, 10, 10, 5, 1, 1}, "table1");
}

WeightProfile uniform_weights(int r) {
  WeightProfile w;
  w.r = r;
  w.betas.assign(static_cast<std::size_t>(r) * r, 1.0);
  w.id = "uniform";
  return w;
}

double charbonnier(double x1, double x2, CharbonnierParams p) {
  const double d = x1 - x2;
  return std::sqrt(d * d + p.epsilon * p.epsilon);
}

double freq_loss(const FreqMaps& sr, const FreqMaps& hr, const WeightProfile& w, CharbonnierParams p) {
  p.validate();
  if (!sr.same_shape(hr)) throw InvalidInput("freq_loss: map shapes differ");
  if (sr.normalized != hr.normalized) throw InvalidInput("freq_loss: normalization states differ");
  if (w.r != sr.r || w.betas.size() != static_cast<std::size_t>(sr.channels()))
    throw InvalidInput("freq_loss: weight profile does not match R=" + std::to_string(sr.r));
  const std::size_t plane = sr.plane_size();
  double total = 0.0;
  for (int c = 0; c < sr.channels(); ++c) {
    double acc = 0.0;
    for (std::size_t k = 0; k < plane; ++k)
      acc += charbonnier(sr.data[c * plane + k], hr.data[c * plane + k], p);
    total += w.betas[c] * acc;
  }
  return total / (static_cast<double>(sr.channels()) * static_cast<double>(plane));
}

Tensor freq_loss(const Tensor& sr, const Tensor& hr, const WeightProfile& w, CharbonnierParams p) {
  p.validate();
  if (sr.shape() != hr.shape() || sr.rank() != 4)
    throw InvalidInput("freq_loss: shapes " + to_string(sr.shape()) + " and " + to_string(hr.shape()));
  const int n = sr.dim(0), channels = sr.dim(1);
  if (w.betas.size() != static_cast<std::size_t>(channels))
    throw InvalidInput("freq_loss: weight profile has " + std::to_string(w.betas.size()) +
                       " channels, maps have " + std::to_string(channels));
  const std::size_t plane = static_cast<std::size_t>(sr.dim(2)) * sr.dim(3);
  const double norm = 1.0 / (static_cast<double>(n) * channels * static_cast<double>(plane));
  const auto a = sr.data(), b = hr.data();
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < channels; ++c) {
      double acc = 0.0;
      const std::size_t base = (static_cast<std::size_t>(i) * channels + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) acc += charbonnier(a[base + k], b[base + k], p);
      total += w.betas[c] * acc;
    }
  const double eps2 = p.epsilon * p.epsilon;
  std::vector<double> betas = w.betas;
  return Tensor::make_result({1}, {total * norm}, {sr, hr},
                             [betas = std::move(betas), norm, eps2, plane, channels](Tensor::Node& self) {
                               const Tensor &x = self.parents[0], &y = self.parents[1];
                               const auto a = x.data(), b = y.data();
                               const double g = self.grad[0] * norm;
                               std::vector<double>* ga = x.requires_grad() ? &x.node()->grad_buffer() : nullptr;
                               std::vector<double>* gb = y.requires_grad() ? &y.node()->grad_buffer() : nullptr;
                               for (std::size_t i = 0; i < a.size(); ++i) {
                                 const int c = static_cast<int>((i / plane) % channels);
                                 const double d = a[i] - b[i];
                                 const double dl = g * betas[c] * d / std::sqrt(d * d + eps2);
                                 if (ga) (*ga)[i] += dl;
                                 if (gb) (*gb)[i] -= dl;
                               }
                             });
}

double frm(double l_freq) {
  if (!(l_freq > 0.0)) throw InvalidInput("frm: loss must be positive");
  return -10.0 * std::log10(l_freq);
}

double psnr_y(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw InvalidInput("psnr_y: image sizes differ");
  const Plane ya = luma_plane(a), yb = luma_plane(b);
  double se = 0.0;
  for (std::size_t i = 0; i < ya.data.size(); ++i) {
    const double d = ya.data[i] - yb.data[i];
    se += d * d;
  }
  if (se == 0.0) return kPsnrIdentical;
  const double mse = se / static_cast<double>(ya.data.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

namespace {

DctBlock truncated(const DctBlock& b, int keep) {
  DctBlock out(b.rows);
  for (int u = 0; u < keep; ++u)
    for (int v = 0; v < keep; ++v) out.at(u, v) = b.at(u, v);
  return out;
}

}  // namespace

ResidualProfile region_residual_profile(std::span<const GridPair> pairs) {
  if (pairs.empty()) throw InvalidInput("region_residual_profile: no samples");
  ResidualProfile prof;
  std::array<double, 8> sum{};
  long long blocks = 0;
  for (const auto& pair : pairs) {
    const int m = pair.hr.block_size();
    if (pair.lr_up.block_size() != m || pair.hr.rows != pair.lr_up.rows || pair.hr.cols != pair.lr_up.cols)
      throw InvalidInput("region_residual_profile: HR and LR grids are not aligned");
    if (m < 10) throw InvalidInput("region_residual_profile: blocks must be at least 10x10");
    for (std::size_t k = 0; k < pair.hr.blocks.size(); ++k) {
      for (int i = 1; i <= 8; ++i) {
        const PixelBlock ph = inverse_dct_block(truncated(pair.hr.blocks[k], i + 2));
        const PixelBlock pl = inverse_dct_block(truncated(pair.lr_up.blocks[k], i + 2));
        double acc = 0.0;
        for (std::size_t p = 0; p < ph.values.size(); ++p) acc += std::abs(ph.values[p] - pl.values[p]);
        sum[i - 1] += acc / static_cast<double>(ph.values.size());
      }
      ++blocks;
    }
  }
  double prev = 0.0;
  for (int i = 0; i < 8; ++i) {
    prof.res[i] = sum[i] / static_cast<double>(blocks);
    prof.v[i] = prof.res[i] - prev;
    prev = prof.res[i];
  }
  prof.sample_count = static_cast<long long>(pairs.size());
  return prof;
}

}  // namespace freqnet
