// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "freqnet/error.hpp"
#include "freqnet/image.hpp"
#include "support.hpp"

using namespace freqnet;
using namespace freqnet::test;

TEST_SUITE("image") {
  TEST_CASE("ycc of primaries") {
    Image img(3, 1, 3);
    img.planes[0].data = {255, 0, 255};
    img.planes[1].data = {255, 0, 0};
    img.planes[2].data = {255, 0, 0};
    const YccImage y = rgb_to_ycc(img);
    CHECK(y.y.data[0] == doctest::Approx(127.0));
    CHECK(y.y.data[1] == doctest::Approx(-128.0));
    CHECK(y.cb.data[0] == doctest::Approx(0.0));
    // Pure red: Y = 0.299 * 255, Cr = 0.5 * 255.
    CHECK(y.y.data[2] == doctest::Approx(0.299 * 255 - 128));
    CHECK(y.cr.data[2] == doctest::Approx(127.5));
    CHECK(y.cb.data[2] == doctest::Approx(-0.168736 * 255).epsilon(1e-5));
  }

  TEST_CASE("ycc round trip is exact up to rounding") {
    Rng rng(1);
    for (int t = 0; t < 10; ++t) {
      const Image img = rand_image(rng, rand_int(rng, 1, 20), rand_int(rng, 1, 20), 3);
      const Image back = ycc_to_rgb(rgb_to_ycc(img));
      for (int c = 0; c < 3; ++c) CHECK(max_abs_diff(back.planes[c].data, img.planes[c].data) < 1e-9);
    }
  }

  TEST_CASE("gray luma is level shifted") {
    Image g(2, 2, 1, 200.0);
    CHECK(luma_plane(g).data[3] == 72.0);
  }

  TEST_CASE("bicubic preserves constants") {
    Plane p(12, 8, 37.5);
    for (auto [num, den] : {std::pair{4, 1}, std::pair{1, 4}, std::pair{1, 2}, std::pair{3, 1}}) {
      const Plane q = bicubic_resize(p, num, den);
      CHECK(q.width == 12 * num / den);
      for (double v : q.data) CHECK(v == doctest::Approx(37.5).epsilon(1e-12));
    }
  }

  TEST_CASE("bicubic upscaling reproduces quadratics away from borders") {
    // The a = -0.5 cubic kernel has third-order accuracy.
    const int n = 20;
    Plane p(n, n);
    auto f = [](double x, double y) { return 0.3 * x * x - 1.2 * x * y + 2.0 * y + 5.0; };
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) p.at(x, y) = f(x, y);
    const Plane q = bicubic_resize(p, 4, 1);
    for (int y = 12; y < 4 * n - 12; ++y)
      for (int x = 12; x < 4 * n - 12; ++x) {
        const double u = (x + 0.5) / 4 - 0.5, v = (y + 0.5) / 4 - 0.5;
        CHECK(q.at(x, y) == doctest::Approx(f(u, v)).epsilon(1e-10));
      }
  }

  TEST_CASE("bicubic downscaling maps ramps to ramps in the interior") {
    const int n = 64;
    Plane p(n, 4);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < n; ++x) p.at(x, y) = 2.0 * x + 1.0;
    const Plane q = bicubic_resize(p, 1, 4);
    REQUIRE(q.width == 16);
    for (int x = 2; x < 14; ++x) CHECK(q.at(x, 0) == doctest::Approx(2.0 * ((x + 0.5) * 4 - 0.5) + 1.0));
  }

  TEST_CASE("bicubic downscale antialiases a checkerboard") {
    Plane p(32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) p.at(x, y) = ((x + y) % 2) ? 100.0 : -100.0;
    const Plane q = bicubic_resize(p, 1, 4);
    for (double v : q.data) CHECK(std::abs(v) < 5.0);
  }

  TEST_CASE("bicubic rejects non-integral output sizes") {
    CHECK_THROWS_AS(bicubic_resize(Plane(10, 10), 1, 4), InvalidInput);
  }

  TEST_CASE("crop helpers") {
    Rng rng(2);
    const Image img = rand_image(rng, 70, 100, 3);
    const Image c = center_crop_to_multiple(img, 32);
    CHECK(c.width == 64);
    CHECK(c.height == 96);
    CHECK(c.planes[1].at(0, 0) == img.planes[1].at(3, 2));
    const Image d = crop(img, 5, 7, 10, 11);
    CHECK(d.planes[2].at(9, 10) == img.planes[2].at(14, 17));
    CHECK_THROWS_AS(crop(img, 65, 0, 10, 10), InvalidInput);
  }

  TEST_CASE("quantize8 rounds and clamps") {
    Image img(4, 1, 1);
    img.planes[0].data = {-3.0, 12.49, 12.5, 300.0};
    const Image q = quantize8(img);
    CHECK(q.planes[0].data == std::vector<double>{0.0, 12.0, 13.0, 255.0});
  }

  TEST_CASE("png round trip") {
    Rng rng(3);
    const auto dir = temp_dir("png");
    for (int ch : {1, 3}) {
      const Image img = rand_image(rng, 17, 9, ch);
      write_png(dir / "a.png", img);
      const Image back = read_png(dir / "a.png");
      REQUIRE(back.channels() == ch);
      for (int c = 0; c < ch; ++c) CHECK(back.planes[c].data == img.planes[c].data);
    }
    CHECK_THROWS(read_png(dir / "missing.png"));
  }
}
