// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <functional>

#include "freqnet/error.hpp"
#include "freqnet/kernels.hpp"
#include "support.hpp"

using namespace freqnet;
using namespace freqnet::test;
namespace k = freqnet::kernels;

namespace {

std::size_t idx4(int c1, int c2, int c3, int a, int b, int c, int d) {
  return ((static_cast<std::size_t>(a) * c1 + b) * c2 + c) * c3 + d;
}

// Plain cross-correlation written directly from the definition.
std::vector<double> oracle_conv(const k::ConvShape& s, const std::vector<double>& x, const std::vector<double>& w,
                                const std::vector<double>& b, bool depthwise) {
  const int oh = s.out_height(), ow = s.out_width();
  std::vector<double> y(static_cast<std::size_t>(s.batch) * s.out_channels * oh * ow);
  for (int n = 0; n < s.batch; ++n)
    for (int o = 0; o < s.out_channels; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = b[o];
          for (int c = 0; c < s.in_channels; ++c) {
            if (depthwise && c != o) continue;
            for (int p = 0; p < s.kernel; ++p)
              for (int q = 0; q < s.kernel; ++q) {
                const int yy = i * s.stride - s.pad + p, xx = j * s.stride - s.pad + q;
                if (yy < 0 || yy >= s.height || xx < 0 || xx >= s.width) continue;
                const double wv = depthwise ? w[idx4(1, s.kernel, s.kernel, o, 0, p, q)]
                                            : w[idx4(s.in_channels, s.kernel, s.kernel, o, c, p, q)];
                acc += wv * x[idx4(s.in_channels, s.height, s.width, n, c, yy, xx)];
              }
          }
          y[idx4(s.out_channels, oh, ow, n, o, i, j)] = acc;
        }
  return y;
}

// Bilinear interpolation as a sum of tent functions over the integer grid.
double tent_sample(const std::vector<double>& x, std::size_t base, int h, int w, double py, double px) {
  double acc = 0.0;
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx) {
      const double wy = std::max(0.0, 1.0 - std::abs(py - yy)), wx = std::max(0.0, 1.0 - std::abs(px - xx));
      if (wy > 0 && wx > 0) acc += wy * wx * x[base + static_cast<std::size_t>(yy) * w + xx];
    }
  return acc;
}

std::vector<double> oracle_deformable(const k::ConvShape& s, const std::vector<double>& x,
                                      const std::vector<double>& w, const std::vector<double>& b,
                                      const std::vector<double>& off) {
  const int kk = s.kernel * s.kernel;
  std::vector<double> y(static_cast<std::size_t>(s.batch) * s.out_channels * s.height * s.width);
  for (int n = 0; n < s.batch; ++n)
    for (int o = 0; o < s.out_channels; ++o)
      for (int i = 0; i < s.height; ++i)
        for (int j = 0; j < s.width; ++j) {
          double acc = b[o];
          for (int c = 0; c < s.in_channels; ++c)
            for (int p = 0; p < s.kernel; ++p)
              for (int q = 0; q < s.kernel; ++q) {
                const int t = p * s.kernel + q;
                const double dy = off[idx4(2 * kk, s.height, s.width, n, 2 * t, i, j)];
                const double dx = off[idx4(2 * kk, s.height, s.width, n, 2 * t + 1, i, j)];
                const std::size_t base = idx4(s.in_channels, s.height, s.width, n, c, 0, 0);
                acc += w[idx4(s.in_channels, s.kernel, s.kernel, o, c, p, q)] *
                       tent_sample(x, base, s.height, s.width, i - s.pad + p + dy, j - s.pad + q + dx);
              }
          y[idx4(s.out_channels, s.height, s.width, n, o, i, j)] = acc;
        }
  return y;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

k::ConvShape rand_shape(Rng& rng, bool depthwise) {
  k::ConvShape s;
  s.batch = rand_int(rng, 1, 3);
  s.in_channels = rand_int(rng, 1, 4);
  s.out_channels = depthwise ? s.in_channels : rand_int(rng, 1, 4);
  const int choice = rand_int(rng, 0, 3);
  s.kernel = choice == 0 ? 1 : (choice == 3 ? 4 : 3);
  s.stride = s.kernel == 4 ? 2 : rand_int(rng, 1, 2);
  s.pad = s.kernel == 4 ? 1 : s.kernel / 2;
  s.height = 2 * rand_int(rng, 2, 6) + (s.kernel == 4 ? 0 : 1);
  s.width = 2 * rand_int(rng, 2, 6) + (s.kernel == 4 ? 0 : 1);
  return s;
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("conv2d forward matches the definition for both backends") {
    Rng rng(30);
    for (int t = 0; t < 40; ++t) {
      const auto s = rand_shape(rng, false);
      const auto x = rand_vec(rng, static_cast<std::size_t>(s.batch) * s.in_channels * s.height * s.width);
      const auto w = rand_vec(rng, static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel);
      const auto b = rand_vec(rng, s.out_channels);
      const auto expect = oracle_conv(s, x, w, b, false);
      std::vector<double> ys(expect.size()), yo(expect.size());
      k::serial::conv2d_forward(s, x, w, b, ys);
      k::omp::conv2d_forward(s, x, w, b, yo);
      CHECK(max_abs_diff(ys, expect) < 1e-12);
      CHECK(yo == ys);
    }
  }

  TEST_CASE("depthwise forward matches the definition for both backends") {
    Rng rng(31);
    for (int t = 0; t < 40; ++t) {
      const auto s = rand_shape(rng, true);
      const auto x = rand_vec(rng, static_cast<std::size_t>(s.batch) * s.in_channels * s.height * s.width);
      const auto w = rand_vec(rng, static_cast<std::size_t>(s.in_channels) * s.kernel * s.kernel);
      const auto b = rand_vec(rng, s.in_channels);
      const auto expect = oracle_conv(s, x, w, b, true);
      std::vector<double> ys(expect.size()), yo(expect.size());
      k::serial::depthwise_forward(s, x, w, b, ys);
      k::omp::depthwise_forward(s, x, w, b, yo);
      CHECK(max_abs_diff(ys, expect) < 1e-12);
      CHECK(yo == ys);
    }
  }

  TEST_CASE("conv backward kernels satisfy the adjoint identities") {
    // <conv(x), g> = <x, conv^T(g)> + <b, sum g>, and the same pairing for w.
    Rng rng(32);
    for (int t = 0; t < 30; ++t) {
      for (bool dw : {false, true}) {
        const auto s = rand_shape(rng, dw);
        const std::size_t nx = static_cast<std::size_t>(s.batch) * s.in_channels * s.height * s.width;
        const std::size_t nw = dw ? static_cast<std::size_t>(s.in_channels) * s.kernel * s.kernel
                                  : static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel;
        const std::size_t ny = static_cast<std::size_t>(s.batch) * s.out_channels * s.out_height() * s.out_width();
        const auto x = rand_vec(rng, nx), w = rand_vec(rng, nw), g = rand_vec(rng, ny);
        const std::vector<double> zero_b(s.out_channels, 0.0);
        const auto y = oracle_conv(s, x, w, zero_b, dw);
        for (auto backend : {0, 1}) {
          std::vector<double> gx(nx), gw(nw), gb(s.out_channels);
          if (dw) {
            (backend ? k::omp::depthwise_backward_input : k::serial::depthwise_backward_input)(s, g, w, gx);
            (backend ? k::omp::depthwise_backward_params : k::serial::depthwise_backward_params)(s, x, g, gw, gb);
          } else {
            (backend ? k::omp::conv2d_backward_input : k::serial::conv2d_backward_input)(s, g, w, gx);
            (backend ? k::omp::conv2d_backward_params : k::serial::conv2d_backward_params)(s, x, g, gw, gb);
          }
          const double lhs = dot(y, g);
          CHECK(dot(x, gx) == doctest::Approx(lhs).epsilon(1e-10));
          CHECK(dot(w, gw) == doctest::Approx(lhs).epsilon(1e-10));
          double gsum = 0;
          for (int o = 0; o < s.out_channels; ++o) gsum += gb[o];
          double all = 0;
          for (double v : g) all += v;
          CHECK(gsum == doctest::Approx(all).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("omp and serial backward kernels agree bit for bit") {
    Rng rng(33);
    for (int t = 0; t < 20; ++t) {
      const auto s = rand_shape(rng, false);
      const std::size_t nx = static_cast<std::size_t>(s.batch) * s.in_channels * s.height * s.width;
      const std::size_t nw = static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel;
      const std::size_t ny = static_cast<std::size_t>(s.batch) * s.out_channels * s.out_height() * s.out_width();
      const auto x = rand_vec(rng, nx), w = rand_vec(rng, nw), g = rand_vec(rng, ny);
      std::vector<double> a(nx), b(nx), wa(nw), wb(nw), ba(s.out_channels), bb(s.out_channels);
      k::serial::conv2d_backward_input(s, g, w, a);
      k::omp::conv2d_backward_input(s, g, w, b);
      k::serial::conv2d_backward_params(s, x, g, wa, ba);
      k::omp::conv2d_backward_params(s, x, g, wb, bb);
      CHECK(a == b);
      CHECK(wa == wb);
      CHECK(ba == bb);
    }
  }

  TEST_CASE("deformable forward matches tent-function sampling") {
    Rng rng(34);
    for (int t = 0; t < 20; ++t) {
      k::ConvShape s;
      s.batch = rand_int(rng, 1, 2);
      s.in_channels = rand_int(rng, 1, 3);
      s.out_channels = rand_int(rng, 1, 3);
      s.height = rand_int(rng, 2, 6);
      s.width = rand_int(rng, 2, 6);
      s.kernel = 3;
      s.pad = 1;
      const auto x = rand_vec(rng, static_cast<std::size_t>(s.batch) * s.in_channels * s.height * s.width);
      const auto w = rand_vec(rng, static_cast<std::size_t>(s.out_channels) * s.in_channels * 9);
      const auto b = rand_vec(rng, s.out_channels);
      // Offsets large enough to leave the image on some taps.
      const auto off = rand_vec(rng, static_cast<std::size_t>(s.batch) * 18 * s.height * s.width, -3.0, 3.0);
      const auto expect = oracle_deformable(s, x, w, b, off);
      std::vector<double> ys(expect.size()), yo(expect.size());
      k::serial::deformable_forward(s, x, w, b, off, ys);
      k::omp::deformable_forward(s, x, w, b, off, yo);
      CHECK(max_abs_diff(ys, expect) < 1e-12);
      CHECK(yo == ys);
    }
  }

  TEST_CASE("deformable with integer offsets is a shifted gather") {
    k::ConvShape s{1, 1, 5, 5, 1, 3, 1, 1};
    std::vector<double> x(25);
    for (int i = 0; i < 25; ++i) x[i] = i;
    std::vector<double> w(9, 0.0), b{0.0}, off(18 * 25, 0.0), y(25);
    w[4] = 1.0;  // center tap only
    for (int p = 0; p < 25; ++p) off[(2 * 4) * 25 + p] = 1.0;  // center tap dy = +1
    k::serial::deformable_forward(s, x, w, b, off, y);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) CHECK(y[i * 5 + j] == (i + 1 < 5 ? x[(i + 1) * 5 + j] : 0.0));
  }

  TEST_CASE("deformable backward agrees across backends and with the adjoint") {
    Rng rng(35);
    for (int t = 0; t < 10; ++t) {
      k::ConvShape s{rand_int(rng, 1, 2), rand_int(rng, 1, 3), rand_int(rng, 3, 6), rand_int(rng, 3, 6),
                     rand_int(rng, 1, 3), 3, 1, 1};
      const std::size_t nx = static_cast<std::size_t>(s.batch) * s.in_channels * s.height * s.width;
      const std::size_t nw = static_cast<std::size_t>(s.out_channels) * s.in_channels * 9;
      const std::size_t ny = static_cast<std::size_t>(s.batch) * s.out_channels * s.height * s.width;
      const std::size_t no = static_cast<std::size_t>(s.batch) * 18 * s.height * s.width;
      const auto x = rand_vec(rng, nx), w = rand_vec(rng, nw), g = rand_vec(rng, ny), off = rand_vec(rng, no, -2, 2);
      std::vector<double> gx1(nx), gw1(nw), gb1(s.out_channels), go1(no);
      std::vector<double> gx2(nx), gw2(nw), gb2(s.out_channels), go2(no);
      k::serial::deformable_backward(s, x, w, off, g, gx1, gw1, gb1, go1);
      k::omp::deformable_backward(s, x, w, off, g, gx2, gw2, gb2, go2);
      CHECK(gx1 == gx2);
      CHECK(gw1 == gw2);
      CHECK(gb1 == gb2);
      CHECK(go1 == go2);
      const std::vector<double> zero_b(s.out_channels, 0.0);
      const auto y = oracle_deformable(s, x, w, zero_b, off);
      CHECK(dot(x, gx1) == doctest::Approx(dot(y, g)).epsilon(1e-10));
      CHECK(dot(w, gw1) == doctest::Approx(dot(y, g)).epsilon(1e-10));
    }
  }

  TEST_CASE("bilinear sampling") {
    const std::vector<double> p = {1, 2, 3, 4};
    CHECK(k::bilinear(p, 2, 2, 0.5, 0.5) == doctest::Approx(2.5));
    CHECK(k::bilinear(p, 2, 2, 1.0, 0.0) == 3.0);
    CHECK(k::bilinear(p, 2, 2, -0.5, 0.0) == doctest::Approx(0.5));
    CHECK(k::bilinear(p, 2, 2, 5.0, 0.0) == 0.0);
  }

  TEST_CASE("geometry validation") {
    k::ConvShape s{1, 1, 6, 6, 1, 3, 2, 1};
    CHECK_THROWS_AS(s.validate(), InvalidInput);
    s.height = s.width = 7;
    CHECK_NOTHROW(s.validate());
  }
}
