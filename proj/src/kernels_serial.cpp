// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels: one output element at a time, straight from the
// definitions. Slow but easy to audit.
#include <algorithm>
#include <atomic>
#include <string>

#include "freqnet/error.hpp"
#include "freqnet/kernels.hpp"
#include "kernel_common.hpp"

namespace freqnet::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::omp};
}

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

void ConvShape::validate() const {
  if (batch < 1 || in_channels < 1 || out_channels < 1 || height < 1 || width < 1 || kernel < 1 ||
      stride < 1 || pad < 0)
    throw InvalidInput("conv: non-positive dimension");
  const int span_h = height + 2 * pad - kernel;
  const int span_w = width + 2 * pad - kernel;
  if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0)
    throw InvalidInput("conv: output size not integral for " + std::to_string(height) + "x" +
                       std::to_string(width) + " k=" + std::to_string(kernel) +
                       " s=" + std::to_string(stride) + " p=" + std::to_string(pad));
}

double bilinear(std::span<const double> plane, int h, int w, double py, double px) {
  return detail::sample(plane.data(), h, w, detail::bilinear_taps(h, w, py, px));
}

namespace serial {

using detail::idx4;

void conv2d_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y) {
  const int ho = s.out_height(), wo = s.out_width(), k = s.kernel;
  for (int n = 0; n < s.batch; ++n)
    for (int oc = 0; oc < s.out_channels; ++oc)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = b[oc];
          for (int ic = 0; ic < s.in_channels; ++ic)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int iy = oy * s.stride - s.pad + kh;
                const int ix = ox * s.stride - s.pad + kw;
                if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
                acc += w[idx4(s.in_channels, k, k, oc, ic, kh, kw)] *
                       x[idx4(s.in_channels, s.height, s.width, n, ic, iy, ix)];
              }
          y[idx4(s.out_channels, ho, wo, n, oc, oy, ox)] = acc;
        }
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx) {
  const int ho = s.out_height(), wo = s.out_width(), k = s.kernel;
  for (int n = 0; n < s.batch; ++n)
    for (int ic = 0; ic < s.in_channels; ++ic)
      for (int iy = 0; iy < s.height; ++iy)
        for (int ix = 0; ix < s.width; ++ix) {
          double acc = 0.0;
          for (int oc = 0; oc < s.out_channels; ++oc)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int ty = iy + s.pad - kh;
                const int tx = ix + s.pad - kw;
                if (ty < 0 || tx < 0 || ty % s.stride || tx % s.stride) continue;
                const int oy = ty / s.stride, ox = tx / s.stride;
                if (oy >= ho || ox >= wo) continue;
                acc += w[idx4(s.in_channels, k, k, oc, ic, kh, kw)] *
                       gy[idx4(s.out_channels, ho, wo, n, oc, oy, ox)];
              }
          gx[idx4(s.in_channels, s.height, s.width, n, ic, iy, ix)] = acc;
        }
}

void conv2d_backward_params(const ConvShape& s, std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            std::span<double> gb) {
  const int ho = s.out_height(), wo = s.out_width(), k = s.kernel;
  for (int oc = 0; oc < s.out_channels; ++oc) {
    double acc_b = 0.0;
    for (int n = 0; n < s.batch; ++n)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) acc_b += gy[idx4(s.out_channels, ho, wo, n, oc, oy, ox)];
    gb[oc] = acc_b;
    for (int ic = 0; ic < s.in_channels; ++ic)
      for (int kh = 0; kh < k; ++kh)
        for (int kw = 0; kw < k; ++kw) {
          double acc = 0.0;
          for (int n = 0; n < s.batch; ++n)
            for (int oy = 0; oy < ho; ++oy)
              for (int ox = 0; ox < wo; ++ox) {
                const int iy = oy * s.stride - s.pad + kh;
                const int ix = ox * s.stride - s.pad + kw;
                if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
                acc += gy[idx4(s.out_channels, ho, wo, n, oc, oy, ox)] *
                       x[idx4(s.in_channels, s.height, s.width, n, ic, iy, ix)];
              }
          gw[idx4(s.in_channels, k, k, oc, ic, kh, kw)] = acc;
        }
  }
}

void depthwise_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                       std::span<const double> b, std::span<double> y) {
  const int ho = s.out_height(), wo = s.out_width(), k = s.kernel, c = s.in_channels;
  for (int n = 0; n < s.batch; ++n)
    for (int ch = 0; ch < c; ++ch)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = b[ch];
          for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
              const int iy = oy * s.stride - s.pad + kh;
              const int ix = ox * s.stride - s.pad + kw;
              if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
              acc += w[idx4(1, k, k, ch, 0, kh, kw)] * x[idx4(c, s.height, s.width, n, ch, iy, ix)];
            }
          y[idx4(c, ho, wo, n, ch, oy, ox)] = acc;
        }
}

void depthwise_backward_input(const ConvShape& s, std::span<const double> gy,
                              std::span<const double> w, std::span<double> gx) {
  const int ho = s.out_height(), wo = s.out_width(), k = s.kernel, c = s.in_channels;
  for (int n = 0; n < s.batch; ++n)
    for (int ch = 0; ch < c; ++ch)
      for (int iy = 0; iy < s.height; ++iy)
        for (int ix = 0; ix < s.width; ++ix) {
          double acc = 0.0;
          for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
              const int ty = iy + s.pad - kh;
              const int tx = ix + s.pad - kw;
              if (ty < 0 || tx < 0 || ty % s.stride || tx % s.stride) continue;
              const int oy = ty / s.stride, ox = tx / s.stride;
              if (oy >= ho || ox >= wo) continue;
              acc += w[idx4(1, k, k, ch, 0, kh, kw)] * gy[idx4(c, ho, wo, n, ch, oy, ox)];
            }
          gx[idx4(c, s.height, s.width, n, ch, iy, ix)] = acc;
        }
}

void depthwise_backward_params(const ConvShape& s, std::span<const double> x,
                               std::span<const double> gy, std::span<double> gw,
                               std::span<double> gb) {
  const int ho = s.out_height(), wo = s.out_width(), k = s.kernel, c = s.in_channels;
  for (int ch = 0; ch < c; ++ch) {
    double acc_b = 0.0;
    for (int n = 0; n < s.batch; ++n)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) acc_b += gy[idx4(c, ho, wo, n, ch, oy, ox)];
    gb[ch] = acc_b;
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw) {
        double acc = 0.0;
        for (int n = 0; n < s.batch; ++n)
          for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
              const int iy = oy * s.stride - s.pad + kh;
              const int ix = ox * s.stride - s.pad + kw;
              if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
              acc += gy[idx4(c, ho, wo, n, ch, oy, ox)] *
                     x[idx4(c, s.height, s.width, n, ch, iy, ix)];
            }
        gw[idx4(1, k, k, ch, 0, kh, kw)] = acc;
      }
  }
}

namespace {

detail::BilinearTaps deform_taps(const ConvShape& s, std::span<const double> offsets, int n, int t,
                                 int oy, int ox) {
  const int k = s.kernel, kk = k * k;
  const double dy = offsets[idx4(2 * kk, s.height, s.width, n, 2 * t, oy, ox)];
  const double dx = offsets[idx4(2 * kk, s.height, s.width, n, 2 * t + 1, oy, ox)];
  const double py = oy - s.pad + t / k + dy;
  const double px = ox - s.pad + t % k + dx;
  return detail::bilinear_taps(s.height, s.width, py, px);
}

}  // namespace

void deformable_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                        std::span<const double> b, std::span<const double> offsets,
                        std::span<double> y) {
  const int h = s.height, wd = s.width, kk = s.kernel * s.kernel;
  for (int n = 0; n < s.batch; ++n)
    for (int oc = 0; oc < s.out_channels; ++oc)
      for (int oy = 0; oy < h; ++oy)
        for (int ox = 0; ox < wd; ++ox) {
          double acc = b[oc];
          for (int ic = 0; ic < s.in_channels; ++ic) {
            const double* plane = x.data() + idx4(s.in_channels, h, wd, n, ic, 0, 0);
            for (int t = 0; t < kk; ++t) {
              const auto taps = deform_taps(s, offsets, n, t, oy, ox);
              acc += w[(static_cast<std::size_t>(oc) * s.in_channels + ic) * kk + t] *
                     detail::sample(plane, h, wd, taps);
            }
          }
          y[idx4(s.out_channels, h, wd, n, oc, oy, ox)] = acc;
        }
}

void deformable_backward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                         std::span<const double> offsets, std::span<const double> gy,
                         std::span<double> gx, std::span<double> gw, std::span<double> gb,
                         std::span<double> goffsets) {
  const int h = s.height, wd = s.width, kk = s.kernel * s.kernel;
  const int cin = s.in_channels, cout = s.out_channels;
  std::fill(gx.begin(), gx.end(), 0.0);
  std::fill(goffsets.begin(), goffsets.end(), 0.0);

  for (int oc = 0; oc < cout; ++oc) {
    double acc = 0.0;
    for (int n = 0; n < s.batch; ++n)
      for (int oy = 0; oy < h; ++oy)
        for (int ox = 0; ox < wd; ++ox) acc += gy[idx4(cout, h, wd, n, oc, oy, ox)];
    gb[oc] = acc;
  }

  for (int oc = 0; oc < cout; ++oc)
    for (int ic = 0; ic < cin; ++ic)
      for (int t = 0; t < kk; ++t) {
        double acc = 0.0;
        for (int n = 0; n < s.batch; ++n) {
          const double* plane = x.data() + idx4(cin, h, wd, n, ic, 0, 0);
          for (int oy = 0; oy < h; ++oy)
            for (int ox = 0; ox < wd; ++ox)
              acc += gy[idx4(cout, h, wd, n, oc, oy, ox)] *
                     detail::sample(plane, h, wd, deform_taps(s, offsets, n, t, oy, ox));
        }
        gw[(static_cast<std::size_t>(oc) * cin + ic) * kk + t] = acc;
      }

  // Gradient reaching each sampled value: sum over output channels.
  auto column_grad = [&](int n, int ic, int t, int oy, int ox) {
    double g = 0.0;
    for (int oc = 0; oc < cout; ++oc)
      g += w[(static_cast<std::size_t>(oc) * cin + ic) * kk + t] *
           gy[idx4(cout, h, wd, n, oc, oy, ox)];
    return g;
  };

  for (int n = 0; n < s.batch; ++n)
    for (int ic = 0; ic < cin; ++ic) {
      double* gplane = gx.data() + idx4(cin, h, wd, n, ic, 0, 0);
      for (int t = 0; t < kk; ++t)
        for (int oy = 0; oy < h; ++oy)
          for (int ox = 0; ox < wd; ++ox)
            detail::scatter(gplane, h, wd, deform_taps(s, offsets, n, t, oy, ox),
                            column_grad(n, ic, t, oy, ox));
    }

  for (int n = 0; n < s.batch; ++n)
    for (int t = 0; t < kk; ++t)
      for (int oy = 0; oy < h; ++oy)
        for (int ox = 0; ox < wd; ++ox) {
          const auto taps = deform_taps(s, offsets, n, t, oy, ox);
          double acc_y = 0.0, acc_x = 0.0;
          for (int ic = 0; ic < cin; ++ic) {
            double dpy, dpx;
            detail::sample_grad(x.data() + idx4(cin, h, wd, n, ic, 0, 0), h, wd, taps, dpy, dpx);
            const double g = column_grad(n, ic, t, oy, ox);
            acc_y += g * dpy;
            acc_x += g * dpx;
          }
          goffsets[idx4(2 * kk, h, wd, n, 2 * t, oy, ox)] = acc_y;
          goffsets[idx4(2 * kk, h, wd, n, 2 * t + 1, oy, ox)] = acc_x;
        }
}

}  // namespace serial
}  // namespace freqnet::kernels
