// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "freqnet/error.hpp"
#include "freqnet/gradcheck.hpp"
#include "freqnet/loss_metrics.hpp"
#include "support.hpp"

using namespace freqnet;
using namespace freqnet::test;

namespace {

FreqMaps rand_maps(Rng& rng, int r, int hb, int wb, bool normalized = true) {
  FreqMaps m(r, kBlockSize, hb, wb);
  m.data = rand_vec(rng, m.data.size(), -2.0, 2.0);
  m.normalized = normalized;
  return m;
}

}  // namespace

TEST_SUITE("loss_metrics") {
  TEST_CASE("charbonnier closed forms") {
    CHECK(charbonnier(3.0, 3.0) == 1e-3);
    CHECK(charbonnier(1.0, 0.0) == doctest::Approx(1.0000005).epsilon(1e-12));
    CHECK(charbonnier(-4.0, 0.0, {0.5}) == doctest::Approx(std::sqrt(16.25)));
    CHECK_THROWS_AS(CharbonnierParams{0.0}.validate(), InvalidInput);
  }

  TEST_CASE("charbonnier has zero slope at equality") {
    const double h = 1e-7;
    CHECK(std::abs((charbonnier(h, 0) - charbonnier(-h, 0)) / (2 * h)) < 1e-9);
  }

  TEST_CASE("annulus assignment") {
    CHECK(annulus_of(0, 0) == 3);
    CHECK(annulus_of(2, 2) == 3);
    CHECK(annulus_of(5, 2) == 6);
    CHECK(annulus_of(9, 9) == 10);
    CHECK(annulus_label(3) == "3");
    CHECK(annulus_label(6) == "6-5");
    CHECK(parse_annulus_label("7-6") == 7);
    CHECK_THROWS_AS(parse_annulus_label("7-5"), InvalidInput);
    CHECK_THROWS_AS(parse_annulus_label("2-1"), InvalidInput);
    // Annulus k holds k^2 - (k-1)^2 = 2k - 1 channels; the core holds 9.
    CHECK(annulus_channels(10, 3).size() == 9);
    for (int k = 4; k <= 10; ++k) CHECK(annulus_channels(10, k).size() == static_cast<std::size_t>(2 * k - 1));
  }

  TEST_CASE("reference weight table") {
    const WeightProfile w = table1_weights(10);
    CHECK(w.annulus_table == std::vector<double>{1, 1, 5, 10, 10, 5, 1, 1});
    CHECK(w.betas[0] == 1.0);
    CHECK(w.betas[5 * 10 + 2] == 10.0);
    CHECK(w.betas[99] == 1.0);
    CHECK(std::accumulate(w.betas.begin(), w.betas.end(), 0.0) == 412.0);
    CHECK_THROWS_AS(table1_weights(8), InvalidInput);
    CHECK_THROWS_AS(weights_from_table(5, {1, 2}), InvalidInput);
    CHECK_THROWS_AS(weights_from_table(4, {1, -2}), InvalidInput);
  }

  TEST_CASE("identical maps give the closed-form minimum") {
    Rng rng(60);
    const FreqMaps m = rand_maps(rng, 10, 2, 3);
    const double l = freq_loss(m, m, table1_weights(10));
    CHECK(l == doctest::Approx(4.12e-3).epsilon(1e-12));
    CHECK(frm(l) == doctest::Approx(23.851).epsilon(1e-4));
  }

  TEST_CASE("freq_loss reduces to charbonnier for one channel and position") {
    FreqMaps a(1, kBlockSize, 1, 1), b(1, kBlockSize, 1, 1);
    a.data = {0.7};
    b.data = {-0.2};
    a.normalized = b.normalized = true;
    CHECK(freq_loss(a, b, uniform_weights(1)) == doctest::Approx(charbonnier(0.7, -0.2)));
  }

  TEST_CASE("freq_loss properties on random maps") {
    Rng rng(61);
    for (int t = 0; t < 30; ++t) {
      const int r = rand_int(rng, 3, 10);
      std::vector<double> table(r - 2);
      for (auto& b : table) b = rand_real(rng, 0.1, 10);
      const WeightProfile w = weights_from_table(r, table);
      WeightProfile w2 = w;
      for (auto& b : w2.betas) b *= 2;
      const FreqMaps a = rand_maps(rng, r, rand_int(rng, 1, 3), rand_int(rng, 1, 3));
      FreqMaps b = a;
      b.data = rand_vec(rng, a.data.size(), -2, 2);
      const CharbonnierParams p{rand_real(rng, 1e-4, 1e-1)};
      const double l = freq_loss(a, b, w, p);
      const double floor = p.epsilon * std::accumulate(w.betas.begin(), w.betas.end(), 0.0) / (r * r);
      CHECK(l > floor);
      CHECK(freq_loss(a, a, w, p) == doctest::Approx(floor).epsilon(1e-12));
      CHECK(freq_loss(b, a, w, p) == doctest::Approx(l).epsilon(1e-14));
      CHECK(freq_loss(a, b, w2, p) == doctest::Approx(2 * l).epsilon(1e-14));
    }
  }

  TEST_CASE("freq_loss contract checks") {
    Rng rng(62);
    const FreqMaps a = rand_maps(rng, 10, 2, 2);
    CHECK_THROWS_AS(freq_loss(a, rand_maps(rng, 10, 2, 1), table1_weights(10)), InvalidInput);
    CHECK_THROWS_AS(freq_loss(a, rand_maps(rng, 10, 2, 2, false), table1_weights(10)), InvalidInput);
    CHECK_THROWS_AS(freq_loss(rand_maps(rng, 4, 2, 2), rand_maps(rng, 4, 2, 2), table1_weights(10)), InvalidInput);
  }

  TEST_CASE("tensor freq_loss agrees with the map version and has correct gradients") {
    Rng rng(63);
    const FreqMaps a = rand_maps(rng, 10, 2, 3), b = rand_maps(rng, 10, 2, 3);
    const Tensor ta = Tensor::from({1, 100, 2, 3}, a.data, true), tb = Tensor::from({1, 100, 2, 3}, b.data);
    const WeightProfile w = table1_weights(10);
    CHECK(freq_loss(ta, tb, w).item() == doctest::Approx(freq_loss(a, b, w)).epsilon(1e-14));
    const double err = gradcheck([&](const auto& v) { return freq_loss(v[0], v[1], w); },
                                 {ta, Tensor::from({1, 100, 2, 3}, b.data, true)}, 3);
    CHECK(err < 1e-5);
  }

  TEST_CASE("batch loss is the mean of per-sample losses") {
    Rng rng(64);
    const WeightProfile w = uniform_weights(3);
    const auto x = rand_vec(rng, 2 * 9 * 4), y = rand_vec(rng, 2 * 9 * 4);
    const double full = freq_loss(Tensor::from({2, 9, 2, 2}, x), Tensor::from({2, 9, 2, 2}, y), w).item();
    const double first = freq_loss(Tensor::from({1, 9, 2, 2}, {x.begin(), x.begin() + 36}),
                                   Tensor::from({1, 9, 2, 2}, {y.begin(), y.begin() + 36}), w)
                             .item();
    const double second = freq_loss(Tensor::from({1, 9, 2, 2}, {x.begin() + 36, x.end()}),
                                    Tensor::from({1, 9, 2, 2}, {y.begin() + 36, y.end()}), w)
                              .item();
    CHECK(full == doctest::Approx((first + second) / 2).epsilon(1e-14));
  }

  TEST_CASE("frm") {
    CHECK(frm(1.0) == 0.0);
    CHECK(frm(0.01) == doctest::Approx(20.0));
    CHECK(frm(0.001) > frm(0.01));
    CHECK_THROWS_AS(frm(0.0), InvalidInput);
    CHECK_THROWS_AS(frm(-1.0), InvalidInput);
  }

  TEST_CASE("psnr_y") {
    Rng rng(65);
    Image a = rand_image(rng, 16, 8, 1);
    for (auto& v : a.planes[0].data) v = std::min(v, 254.0);
    CHECK(std::isinf(psnr_y(a, a)));
    Image b = a;
    for (auto& v : b.planes[0].data) v += 1.0;
    CHECK(psnr_y(a, b) == doctest::Approx(20 * std::log10(255.0)).epsilon(1e-12));
    CHECK(psnr_y(a, b) == doctest::Approx(48.13).epsilon(1e-4));
    CHECK_THROWS_AS(psnr_y(a, rand_image(rng, 8, 8, 1)), InvalidInput);
  }

  TEST_CASE("psnr_y is invariant to pixel permutation and chroma changes") {
    Rng rng(66);
    const Image a = rand_image(rng, 12, 10, 3), b = rand_image(rng, 12, 10, 3);
    const double base = psnr_y(a, b);
    Image pa = a, pb = b;
    for (int c = 0; c < 3; ++c) {
      std::reverse(pa.planes[c].data.begin(), pa.planes[c].data.end());
      std::reverse(pb.planes[c].data.begin(), pb.planes[c].data.end());
    }
    CHECK(psnr_y(pa, pb) == doctest::Approx(base).epsilon(1e-12));
    // Shift chroma while keeping luma fixed; stay inside the gamut.
    YccImage ya = rgb_to_ycc(a), yb = rgb_to_ycc(b);
    for (auto* y : {&ya, &yb}) {
      for (auto& v : y->cb.data) v *= 0.5;
      for (auto& v : y->cr.data) v *= 0.5;
    }
    CHECK(psnr_y(ycc_to_rgb(ya), ycc_to_rgb(yb)) == doctest::Approx(base).epsilon(1e-9));
  }

  TEST_CASE("region residual profile examples") {
    Rng rng(67);
    const BlockGrid hr = plane_to_blocks(rand_plane(rng, 64, 32));
    std::vector<GridPair> same = {{hr, hr}};
    const ResidualProfile z = region_residual_profile(same);
    for (double r : z.res) CHECK(r == 0.0);

    // Difference only at DC: every region sees it.
    BlockGrid lr = hr;
    for (auto& b : lr.blocks) b.at(0, 0) += 32.0;
    std::vector<GridPair> dc = {{hr, lr}};
    const ResidualProfile p = region_residual_profile(dc);
    CHECK(p.res[0] == doctest::Approx(1.0));  // 32 * (1/32) per pixel
    CHECK(p.v[0] == doctest::Approx(1.0));
    for (int i = 1; i < 8; ++i) CHECK(std::abs(p.v[i]) < 1e-12);

    // Difference only at (9, 9): invisible until the 10x10 region.
    BlockGrid hi = hr;
    for (auto& b : hi.blocks) b.at(9, 9) += 5.0;
    std::vector<GridPair> corner = {{hr, hi}};
    const ResidualProfile q = region_residual_profile(corner);
    for (int i = 0; i < 7; ++i) CHECK(std::abs(q.v[i]) < 1e-12);
    CHECK(q.v[7] > 0.0);
    // Oracle: mean |5 * basis_9(i) basis_9(j)| = 5 * (mean |basis_9|)^2.
    double m = 0;
    for (int i = 0; i < 32; ++i) m += std::abs(std::sqrt(2.0 / 32) * std::cos((2 * i + 1) * 9 * M_PI / 64));
    m /= 32;
    CHECK(q.res[7] == doctest::Approx(5 * m * m).epsilon(1e-10));
    CHECK_THROWS_AS(region_residual_profile(std::vector<GridPair>{}), InvalidInput);
  }

  TEST_CASE("profile at i = 8 on band-limited blocks is the plain residual") {
    Rng rng(68);
    const Plane a = rand_plane(rng, 64, 64), b = rand_plane(rng, 64, 64);
    BlockGrid ga = plane_to_blocks(a), gb = plane_to_blocks(b);
    for (auto* g : {&ga, &gb})
      for (auto& blk : g->blocks)
        for (int u = 0; u < 32; ++u)
          for (int v = 0; v < 32; ++v)
            if (u >= 10 || v >= 10) blk.at(u, v) = 0.0;
    const Plane pa = blocks_to_plane(ga), pb = blocks_to_plane(gb);
    double mad = 0;
    for (std::size_t k = 0; k < pa.data.size(); ++k) mad += std::abs(pa.data[k] - pb.data[k]);
    mad /= static_cast<double>(pa.data.size());
    std::vector<GridPair> pairs = {{ga, gb}};
    CHECK(region_residual_profile(pairs).res[7] == doctest::Approx(mad).epsilon(1e-12));
  }
}
