// SPDX-License-Identifier: Apache-2.0
#include "freqnet/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include "freqnet/dct_codec.hpp"
#include "freqnet/gradcheck.hpp"
#include "freqnet/kernels.hpp"
#include "freqnet/loss_metrics.hpp"

namespace freqnet {

namespace {

using Rng = std::mt19937_64;

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Tensor randn(Rng& rng, Shape shape, double stddev = 1.0, bool grad = true) {
  std::normal_distribution<double> n(0.0, stddev);
  std::vector<double> d(numel(shape));
  for (auto& v : d) v = n(rng);
  return Tensor::from(std::move(shape), std::move(d), grad);
}

/// Offsets whose sample positions stay at least 0.2 away from the integer grid,
/// where bilinear interpolation is not differentiable.
Tensor fractional_offsets(Rng& rng, Shape shape) {
  std::uniform_real_distribution<double> frac(0.2, 0.8);
  std::vector<double> d(numel(shape));
  for (auto& v : d) v = uniform_int(rng, -2, 1) + frac(rng);
  return Tensor::from(std::move(shape), std::move(d), true);
}

double conv_case(std::uint64_t seed) {
  Rng rng(seed);
  const int n = uniform_int(rng, 1, 2), ci = uniform_int(rng, 1, 3), co = uniform_int(rng, 1, 3);
  const int k = uniform_int(rng, 0, 1) ? 3 : 1;
  const int stride = uniform_int(rng, 1, 2);
  const int pad = k / 2;
  // Odd sizes keep stride-2 geometry exact for k=3, pad=1 and k=1, pad=0.
  const int h = 2 * uniform_int(rng, 1, 3) + 1, w = 2 * uniform_int(rng, 1, 3) + 1;
  std::vector<Tensor> in = {randn(rng, {n, ci, h, w}), randn(rng, {co, ci, k, k}), randn(rng, {co})};
  return gradcheck([&](const auto& v) { return conv2d(v[0], v[1], v[2], stride, pad); }, in, seed);
}

double depthwise_case(std::uint64_t seed) {
  Rng rng(seed);
  const int n = uniform_int(rng, 1, 2), c = uniform_int(rng, 1, 4);
  const int stride = uniform_int(rng, 1, 2);
  const int h = 2 * uniform_int(rng, 1, 3) + 1, w = 2 * uniform_int(rng, 1, 3) + 1;
  std::vector<Tensor> in = {randn(rng, {n, c, h, w}), randn(rng, {c, 1, 3, 3}), randn(rng, {c})};
  return gradcheck([&](const auto& v) { return depthwise_conv2d(v[0], v[1], v[2], stride, 1); }, in, seed);
}

double deformable_case(std::uint64_t seed) {
  Rng rng(seed);
  const int n = uniform_int(rng, 1, 2), ci = uniform_int(rng, 1, 3), co = uniform_int(rng, 1, 3);
  const int h = uniform_int(rng, 3, 5), w = uniform_int(rng, 3, 5);
  std::vector<Tensor> in = {randn(rng, {n, ci, h, w}), randn(rng, {co, ci, 3, 3}), randn(rng, {co}),
                            fractional_offsets(rng, {n, 18, h, w})};
  return gradcheck([&](const auto& v) { return deformable_conv2d(v[0], v[1], v[2], v[3]); }, in, seed);
}

double leaky_case(std::uint64_t seed) {
  Rng rng(seed);
  const double slope = std::uniform_real_distribution<double>(0.05, 0.5)(rng);
  Tensor x = randn(rng, {uniform_int(rng, 1, 2), uniform_int(rng, 1, 3), uniform_int(rng, 2, 5), 3});
  // Keep samples off the kink at zero.
  for (auto& v : x.mutable_data())
    if (std::abs(v) < 1e-3) v += 1e-2;
  return gradcheck([&](const auto& v) { return leaky_relu(v[0], slope); }, {x}, seed);
}

double block_case(std::uint64_t seed, BlockKind kind) {
  Rng rng(seed);
  const int n = uniform_int(rng, 1, 2), c = uniform_int(rng, 1, 3);
  const int h = uniform_int(rng, 3, 5), w = uniform_int(rng, 3, 5);
  const double slope = 0.2;
  std::vector<Tensor> in = {randn(rng, {n, c, h, w})};
  if (kind == BlockKind::dwrb) {
    in.push_back(randn(rng, {c, 1, 3, 3}, 0.5));
    in.push_back(randn(rng, {c}, 0.5));
    in.push_back(randn(rng, {c, c, 1, 1}, 0.5));
    in.push_back(randn(rng, {c}, 0.5));
  } else {
    in.push_back(randn(rng, {c, c, 3, 3}, 0.5));
    in.push_back(randn(rng, {c}, 0.5));
    in.push_back(randn(rng, {c, c, 3, 3}, 0.5));
    in.push_back(randn(rng, {c}, 0.5));
    if (kind == BlockKind::drb) {
      in.push_back(randn(rng, {18, c, 3, 3}, 0.3));
      in.push_back(randn(rng, {18}, 0.3));
    }
  }
  auto f = [&](const std::vector<Tensor>& v) {
    BlockParams p{{v[1], v[2]}, {v[3], v[4]}, std::nullopt};
    switch (kind) {
      case BlockKind::rb: return residual_block(v[0], p, slope);
      case BlockKind::dwrb: return depthwise_residual_block(v[0], p, slope);
      case BlockKind::drb: p.offset = ConvParams{v[5], v[6]}; return deformable_residual_block(v[0], p, slope);
    }
    return Tensor();
  };
  return gradcheck(f, in, seed);
}

double freq_loss_case(std::uint64_t seed) {
  Rng rng(seed);
  const int r = uniform_int(rng, 3, 5);
  std::vector<double> table(r - 2);
  for (auto& b : table) b = std::uniform_real_distribution<double>(0.5, 10.0)(rng);
  const WeightProfile w = weights_from_table(r, table);
  const CharbonnierParams p{std::uniform_real_distribution<double>(1e-3, 0.5)(rng)};
  const Shape s = {uniform_int(rng, 1, 2), r * r, uniform_int(rng, 1, 3), uniform_int(rng, 1, 3)};
  std::vector<Tensor> in = {randn(rng, s), randn(rng, s)};
  return gradcheck([&](const auto& v) { return freq_loss(v[0], v[1], w, p); }, in, seed);
}

}  // namespace

std::vector<GradientCase> gradient_cases() {
  return {{"conv2d", conv_case},
          {"depthwise_conv2d", depthwise_case},
          {"deformable_conv2d", deformable_case},
          {"leaky_relu", leaky_case},
          {"residual_block", [](std::uint64_t s) { return block_case(s, BlockKind::rb); }},
          {"deformable_residual_block", [](std::uint64_t s) { return block_case(s, BlockKind::drb); }},
          {"depthwise_residual_block", [](std::uint64_t s) { return block_case(s, BlockKind::dwrb); }},
          {"freq_loss", freq_loss_case}};
}

DctCheck dct_roundtrip_check(int blocks, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-128.0, 127.0);
  DctCheck out;
  for (int i = 0; i < blocks; ++i) {
    PixelBlock p(kBlockSize);
    for (auto& v : p.values) v = u(rng);
    const DctBlock d = forward_dct_block(p);
    const PixelBlock back = inverse_dct_block(d);
    double ep = 0.0, ed = 0.0;
    for (std::size_t k = 0; k < p.values.size(); ++k) {
      out.max_roundtrip_error = std::max(out.max_roundtrip_error, std::abs(back.values[k] - p.values[k]));
      ep += p.values[k] * p.values[k];
      ed += d.values[k] * d.values[k];
    }
    out.max_parseval_error = std::max(out.max_parseval_error, std::abs(ed - ep) / ep);
  }
  return out;
}

double codec_roundtrip_check(int images, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < images; ++i) {
    const int w = kBlockSize * uniform_int(rng, 1, 4), h = kBlockSize * uniform_int(rng, 1, 4);
    Image img(w, h, 3);
    for (auto& pl : img.planes)
      for (auto& v : pl.data) v = uniform_int(rng, 0, 255);
    YccImage ycc = rgb_to_ycc(img);
    const BlockGrid grid = plane_to_blocks(ycc.y);
    const FreqMaps maps = reform_to_maps(grid, {kDefaultRegion});
    ycc.y = blocks_to_plane(maps_to_blocks(maps, grid));
    const Image back = quantize8(ycc_to_rgb(ycc));
    for (int c = 0; c < 3; ++c)
      for (std::size_t k = 0; k < img.planes[c].data.size(); ++k)
        worst = std::max(worst, std::abs(back.planes[c].data[k] - img.planes[c].data[k]));
  }
  return worst;
}

double deformable_degeneracy_check(std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const int n = uniform_int(rng, 1, 2), ci = uniform_int(rng, 1, 4), co = uniform_int(rng, 1, 4);
    const int h = uniform_int(rng, 3, 9), w = uniform_int(rng, 3, 9);
    const Tensor x = randn(rng, {n, ci, h, w}, 1.0, false);
    const Tensor k = randn(rng, {co, ci, 3, 3}, 1.0, false);
    const Tensor b = randn(rng, {co}, 1.0, false);
    const Tensor a = deformable_conv2d(x, k, b, Tensor::zeros({n, 18, h, w}));
    const Tensor c = conv2d(x, k, b, 1, 1);
    for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a.data()[i] - c.data()[i]));
  }
  return worst;
}

void randomize_params(ModelParams& params, std::uint64_t seed, double stddev) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, stddev);
  for (auto& [_, t] : params.tensors())
    for (auto& v : t.mutable_data()) v = n(rng);
}

double model_twin_check(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.feature_channels = 3;
  cfg.blocks_per_group = 2;
  cfg.sen_rg = 1;
  cfg.sen_drg = 2;
  cfg.frn_dwrg = 1;
  cfg.frn_rg = 1;
  cfg.region = 4;
  cfg.block_size = 8;
  cfg.shrink_stages = 3;
  ModelParams params = init_params(cfg, seed);
  randomize_params(params, seed + 1, 0.3);
  ModelConfig twin_cfg = cfg;
  twin_cfg.sen_rg += twin_cfg.sen_drg;
  twin_cfg.sen_drg = 0;
  ModelParams twin;
  for (auto& [name, t] : params.tensors()) {
    if (name.find(".offset.") != std::string::npos) {
      std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
      continue;
    }
    twin.set(name, t);
  }
  Rng rng(seed + 2);
  const Tensor img = randn(rng, {2, 1, 16, 24}, 1.0, false);
  const Tensor maps = randn(rng, {2, 16, 2, 3}, 1.0, false);
  NoGradGuard guard;
  const Tensor a = freqnet_forward(img, maps, params, cfg);
  const Tensor b = freqnet_forward(img, maps, twin, twin_cfg);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

double backend_agreement_check(std::uint64_t seed) {
  Rng rng(seed);
  const kernels::Backend previous = kernels::backend();
  double worst = 0.0;
  auto run_both = [&](const std::function<std::vector<double>()>& f) {
    kernels::set_backend(kernels::Backend::serial);
    const auto a = f();
    kernels::set_backend(kernels::Backend::omp);
    const auto b = f();
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  };
  for (int t = 0; t < 4; ++t) {
    const int n = uniform_int(rng, 1, 2), ci = uniform_int(rng, 1, 4), co = uniform_int(rng, 1, 4);
    const int h = 2 * uniform_int(rng, 2, 5) + 1, w = 2 * uniform_int(rng, 2, 5) + 1;
    const Tensor x = randn(rng, {n, ci, h, w});
    const Tensor k = randn(rng, {co, ci, 3, 3});
    const Tensor dk = randn(rng, {ci, 1, 3, 3});
    const Tensor b = randn(rng, {co});
    const Tensor db = randn(rng, {ci});
    const Tensor off = fractional_offsets(rng, {n, 18, h, w});
    // Forward values and every gradient, flattened.
    auto collect = [&](auto forward) {
      return [&, forward]() {
        std::vector<Tensor> in = {x, k, dk, b, db, off};
        for (auto& t : in) t.zero_grad();
        const Tensor y = forward();
        sum(mul(y, y)).backward();
        std::vector<double> out(y.data().begin(), y.data().end());
        for (const auto& t : in) out.insert(out.end(), t.grad().begin(), t.grad().end());
        return out;
      };
    };
    run_both(collect([&] { return conv2d(x, k, b, 2, 1); }));
    run_both(collect([&] { return depthwise_conv2d(x, dk, db, 1, 1); }));
    run_both(collect([&] { return deformable_conv2d(x, k, b, off); }));
  }
  kernels::set_backend(previous);
  return worst;
}

std::vector<CheckResult> run_selfcheck(int gradient_seeds, std::ostream& os) {
  std::vector<CheckResult> out;
  auto record = [&](std::string name, double value, double tol) {
    CheckResult r{std::move(name), value, tol, value <= tol};
    os << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(34) << r.name << " " << std::scientific
       << std::setprecision(3) << r.value << " (tol " << r.tolerance << ")\n";
    out.push_back(std::move(r));
  };
  const DctCheck dct = dct_roundtrip_check(200, 1);
  record("dct_roundtrip_max_abs", dct.max_roundtrip_error, 1e-9);
  record("dct_parseval_rel", dct.max_parseval_error, 1e-9);
  record("codec_roundtrip_levels", codec_roundtrip_check(5, 2), 1.0);
  for (const auto& c : gradient_cases()) {
    double worst = 0.0;
    for (int s = 0; s < gradient_seeds; ++s) worst = std::max(worst, c.run(1000 + s));
    record("grad_" + c.name, worst, 1e-4);
  }
  record("deformable_zero_offset_vs_conv", deformable_degeneracy_check(3), 1e-12);
  record("model_vs_rb_only_twin", model_twin_check(4), 1e-10);
  record("omp_vs_serial", backend_agreement_check(5), 0.0);
  return out;
}

}  // namespace freqnet
