// SPDX-License-Identifier: Apache-2.0
//
// OpenMP kernels. Loops are reordered so the innermost loop streams over a
// contiguous output row, and every parallel region writes disjoint outputs.
// Per-element accumulation order matches the serial reference exactly.
#include <algorithm>
#include <vector>

#include "freqnet/kernels.hpp"
#include "kernel_common.hpp"

namespace freqnet::kernels::omp {

using detail::idx4;

namespace {

// Output indices o in [lo, hi) whose input coordinate o*stride - pad + kw lies in [0, extent).
struct Range {
  int lo, hi;
};

Range valid_range(int out_extent, int in_extent, int stride, int pad, int kw) {
  int lo = 0;
  while (lo < out_extent && lo * stride - pad + kw < 0) ++lo;
  int hi = out_extent;
  while (hi > lo && (hi - 1) * stride - pad + kw >= in_extent) --hi;
  return {lo, hi};
}

}  // namespace

void conv2d_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y) {
  const int ho = s.out_height(), wo = s.out_width(), k = s.kernel;
  const int cin = s.in_channels, cout = s.out_channels;
  const int jobs = s.batch * cout;
#pragma omp parallel for schedule(static)
  for (int job = 0; job < jobs; ++job) {
    const int n = job / cout, oc = job % cout;
    double* out = y.data() + idx4(cout, ho, wo, n, oc, 0, 0);
    std::fill(out, out + static_cast<std::size_t>(ho) * wo, b[oc]);
    for (int ic = 0; ic < cin; ++ic) {
      const double* in = x.data() + idx4(cin, s.height, s.width, n, ic, 0, 0);
      const double* wk = w.data() + idx4(cin, k, k, oc, ic, 0, 0);
      for (int kh = 0; kh < k; ++kh) {
        const Range ry = valid_range(ho, s.height, s.stride, s.pad, kh);
        for (int kw = 0; kw < k; ++kw) {
          const double wv = wk[kh * k + kw];
          const Range rx = valid_range(wo, s.width, s.stride, s.pad, kw);
          for (int oy = ry.lo; oy < ry.hi; ++oy) {
            const double* row = in + static_cast<std::size_t>(oy * s.stride - s.pad + kh) * s.width;
            double* orow = out + static_cast<std::size_t>(oy) * wo;
            for (int ox = rx.lo; ox < rx.hi; ++ox) orow[ox] += wv * row[ox * s.stride - s.pad + kw];
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx) {
  const int ho = s.out_height(), wo = s.out_width(), k = s.kernel;
  const int cin = s.in_channels, cout = s.out_channels;
  const int jobs = s.batch * cin;
#pragma omp parallel for schedule(static)
  for (int job = 0; job < jobs; ++job) {
    const int n = job / cin, ic = job % cin;
    double* g = gx.data() + idx4(cin, s.height, s.width, n, ic, 0, 0);
    std::fill(g, g + static_cast<std::size_t>(s.height) * s.width, 0.0);
    for (int oc = 0; oc < cout; ++oc) {
      const double* go = gy.data() + idx4(cout, ho, wo, n, oc, 0, 0);
      const double* wk = w.data() + idx4(cin, k, k, oc, ic, 0, 0);
      for (int kh = 0; kh < k; ++kh) {
        const Range ry = valid_range(ho, s.height, s.stride, s.pad, kh);
        for (int kw = 0; kw < k; ++kw) {
          const double wv = wk[kh * k + kw];
          const Range rx = valid_range(wo, s.width, s.stride, s.pad, kw);
          for (int oy = ry.lo; oy < ry.hi; ++oy) {
            double* row = g + static_cast<std::size_t>(oy * s.stride - s.pad + kh) * s.width;
            const double* grow = go + static_cast<std::size_t>(oy) * wo;
            for (int ox = rx.lo; ox < rx.hi; ++ox) row[ox * s.stride - s.pad + kw] += wv * grow[ox];
          }
        }
      }
    }
  }
}

void conv2d_backward_params(const ConvShape& s, std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw,
                            std::span<double> gb) {
  const int ho = s.out_height(), wo = s.out_width(), k = s.kernel;
  const int cin = s.in_channels, cout = s.out_channels;
#pragma omp parallel for schedule(static)
  for (int oc = 0; oc < cout; ++oc) {
    double acc = 0.0;
    for (int n = 0; n < s.batch; ++n) {
      const double* go = gy.data() + idx4(cout, ho, wo, n, oc, 0, 0);
      for (int i = 0; i < ho * wo; ++i) acc += go[i];
    }
    gb[oc] = acc;
  }
  const int jobs = cout * cin;
#pragma omp parallel for schedule(static)
  for (int job = 0; job < jobs; ++job) {
    const int oc = job / cin, ic = job % cin;
    for (int kh = 0; kh < k; ++kh) {
      const Range ry = valid_range(ho, s.height, s.stride, s.pad, kh);
      for (int kw = 0; kw < k; ++kw) {
        const Range rx = valid_range(wo, s.width, s.stride, s.pad, kw);
        double acc = 0.0;
        for (int n = 0; n < s.batch; ++n) {
          const double* go = gy.data() + idx4(cout, ho, wo, n, oc, 0, 0);
          const double* in = x.data() + idx4(cin, s.height, s.width, n, ic, 0, 0);
          for (int oy = ry.lo; oy < ry.hi; ++oy) {
            const double* row = in + static_cast<std::size_t>(oy * s.stride - s.pad + kh) * s.width;
            const double* grow = go + static_cast<std::size_t>(oy) * wo;
            for (int ox = rx.lo; ox < rx.hi; ++ox) acc += grow[ox] * row[ox * s.stride - s.pad + kw];
          }
        }
        gw[idx4(cin, k, k, oc, ic, kh, kw)] = acc;
      }
    }
  }
}

void depthwise_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                       std::span<const double> b, std::span<double> y) {
  const int ho = s.out_height(), wo = s.out_width(), k = s.kernel, c = s.in_channels;
  const int jobs = s.batch * c;
#pragma omp parallel for schedule(static)
  for (int job = 0; job < jobs; ++job) {
    const int n = job / c, ch = job % c;
    double* out = y.data() + idx4(c, ho, wo, n, ch, 0, 0);
    const double* in = x.data() + idx4(c, s.height, s.width, n, ch, 0, 0);
    std::fill(out, out + static_cast<std::size_t>(ho) * wo, b[ch]);
    for (int kh = 0; kh < k; ++kh) {
      const Range ry = valid_range(ho, s.height, s.stride, s.pad, kh);
      for (int kw = 0; kw < k; ++kw) {
        const double wv = w[idx4(1, k, k, ch, 0, kh, kw)];
        const Range rx = valid_range(wo, s.width, s.stride, s.pad, kw);
        for (int oy = ry.lo; oy < ry.hi; ++oy) {
          const double* row = in + static_cast<std::size_t>(oy * s.stride - s.pad + kh) * s.width;
          double* orow = out + static_cast<std::size_t>(oy) * wo;
          for (int ox = rx.lo; ox < rx.hi; ++ox) orow[ox] += wv * row[ox * s.stride - s.pad + kw];
        }
      }
    }
  }
}

void depthwise_backward_input(const ConvShape& s, std::span<const double> gy,
                              std::span<const double> w, std::span<double> gx) {
  const int ho = s.out_height(), wo = s.out_width(), k = s.kernel, c = s.in_channels;
  const int jobs = s.batch * c;
#pragma omp parallel for schedule(static)
  for (int job = 0; job < jobs; ++job) {
    const int n = job / c, ch = job % c;
    double* g = gx.data() + idx4(c, s.height, s.width, n, ch, 0, 0);
    const double* go = gy.data() + idx4(c, ho, wo, n, ch, 0, 0);
    std::fill(g, g + static_cast<std::size_t>(s.height) * s.width, 0.0);
    for (int kh = 0; kh < k; ++kh) {
      const Range ry = valid_range(ho, s.height, s.stride, s.pad, kh);
      for (int kw = 0; kw < k; ++kw) {
        const double wv = w[idx4(1, k, k, ch, 0, kh, kw)];
        const Range rx = valid_range(wo, s.width, s.stride, s.pad, kw);
        for (int oy = ry.lo; oy < ry.hi; ++oy) {
          double* row = g + static_cast<std::size_t>(oy * s.stride - s.pad + kh) * s.width;
          const double* grow = go + static_cast<std::size_t>(oy) * wo;
          for (int ox = rx.lo; ox < rx.hi; ++ox) row[ox * s.stride - s.pad + kw] += wv * grow[ox];
        }
      }
    }
  }
}

void depthwise_backward_params(const ConvShape& s, std::span<const double> x,
                               std::span<const double> gy, std::span<double> gw,
                               std::span<double> gb) {
  const int ho = s.out_height(), wo = s.out_width(), k = s.kernel, c = s.in_channels;
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    double acc_b = 0.0;
    for (int n = 0; n < s.batch; ++n) {
      const double* go = gy.data() + idx4(c, ho, wo, n, ch, 0, 0);
      for (int i = 0; i < ho * wo; ++i) acc_b += go[i];
    }
    gb[ch] = acc_b;
    for (int kh = 0; kh < k; ++kh) {
      const Range ry = valid_range(ho, s.height, s.stride, s.pad, kh);
      for (int kw = 0; kw < k; ++kw) {
        const Range rx = valid_range(wo, s.width, s.stride, s.pad, kw);
        double acc = 0.0;
        for (int n = 0; n < s.batch; ++n) {
          const double* go = gy.data() + idx4(c, ho, wo, n, ch, 0, 0);
          const double* in = x.data() + idx4(c, s.height, s.width, n, ch, 0, 0);
          for (int oy = ry.lo; oy < ry.hi; ++oy) {
            const double* row = in + static_cast<std::size_t>(oy * s.stride - s.pad + kh) * s.width;
            const double* grow = go + static_cast<std::size_t>(oy) * wo;
            for (int ox = rx.lo; ox < rx.hi; ++ox) acc += grow[ox] * row[ox * s.stride - s.pad + kw];
          }
        }
        gw[idx4(1, k, k, ch, 0, kh, kw)] = acc;
      }
    }
  }
}

namespace {

// Bilinear footprints for one batch item: taps[t * hw + pos].
std::vector<detail::BilinearTaps> deform_footprints(const ConvShape& s,
                                                    std::span<const double> offsets, int n) {
  const int h = s.height, wd = s.width, k = s.kernel, kk = k * k, hw = h * wd;
  std::vector<detail::BilinearTaps> taps(static_cast<std::size_t>(kk) * hw);
  for (int t = 0; t < kk; ++t) {
    const double* dy = offsets.data() + idx4(2 * kk, h, wd, n, 2 * t, 0, 0);
    const double* dx = offsets.data() + idx4(2 * kk, h, wd, n, 2 * t + 1, 0, 0);
    for (int oy = 0; oy < h; ++oy)
      for (int ox = 0; ox < wd; ++ox) {
        const int pos = oy * wd + ox;
        taps[static_cast<std::size_t>(t) * hw + pos] = detail::bilinear_taps(
            h, wd, oy - s.pad + t / k + dy[pos], ox - s.pad + t % k + dx[pos]);
      }
  }
  return taps;
}

// col[(ic * kk + t) * hw + pos] = sampled input value.
void deform_columns(const ConvShape& s, std::span<const double> x, int n,
                    const std::vector<detail::BilinearTaps>& taps, std::vector<double>& col) {
  const int h = s.height, wd = s.width, kk = s.kernel * s.kernel, hw = h * wd;
  const int cin = s.in_channels;
  col.resize(static_cast<std::size_t>(cin) * kk * hw);
#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < cin; ++ic) {
    const double* plane = x.data() + idx4(cin, h, wd, n, ic, 0, 0);
    double* c = col.data() + static_cast<std::size_t>(ic) * kk * hw;
    for (std::size_t i = 0; i < taps.size(); ++i) c[i] = detail::sample(plane, h, wd, taps[i]);
  }
}

}  // namespace

void deformable_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                        std::span<const double> b, std::span<const double> offsets,
                        std::span<double> y) {
  const int h = s.height, wd = s.width, kk = s.kernel * s.kernel, hw = h * wd;
  const int cin = s.in_channels, cout = s.out_channels;
  std::vector<double> col;
  for (int n = 0; n < s.batch; ++n) {
    const auto taps = deform_footprints(s, offsets, n);
    deform_columns(s, x, n, taps, col);
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < cout; ++oc) {
      double* out = y.data() + idx4(cout, h, wd, n, oc, 0, 0);
      std::fill(out, out + hw, b[oc]);
      for (int j = 0; j < cin * kk; ++j) {
        const double wv = w[static_cast<std::size_t>(oc) * cin * kk + j];
        const double* c = col.data() + static_cast<std::size_t>(j) * hw;
        for (int pos = 0; pos < hw; ++pos) out[pos] += wv * c[pos];
      }
    }
  }
}

void deformable_backward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                         std::span<const double> offsets, std::span<const double> gy,
                         std::span<double> gx, std::span<double> gw, std::span<double> gb,
                         std::span<double> goffsets) {
  const int h = s.height, wd = s.width, kk = s.kernel * s.kernel, hw = h * wd;
  const int cin = s.in_channels, cout = s.out_channels;
  std::fill(gw.begin(), gw.end(), 0.0);

#pragma omp parallel for schedule(static)
  for (int oc = 0; oc < cout; ++oc) {
    double acc = 0.0;
    for (int n = 0; n < s.batch; ++n) {
      const double* go = gy.data() + idx4(cout, h, wd, n, oc, 0, 0);
      for (int pos = 0; pos < hw; ++pos) acc += go[pos];
    }
    gb[oc] = acc;
  }

  std::vector<double> col;
  std::vector<double> gcol(static_cast<std::size_t>(cin) * kk * hw);
  for (int n = 0; n < s.batch; ++n) {
    const auto taps = deform_footprints(s, offsets, n);
    deform_columns(s, x, n, taps, col);

#pragma omp parallel for schedule(static)
    for (int j = 0; j < cout * cin * kk; ++j) {
      const int oc = j / (cin * kk), rest = j % (cin * kk);
      const double* go = gy.data() + idx4(cout, h, wd, n, oc, 0, 0);
      const double* c = col.data() + static_cast<std::size_t>(rest) * hw;
      double acc = gw[j];
      for (int pos = 0; pos < hw; ++pos) acc += go[pos] * c[pos];
      gw[j] = acc;
    }

#pragma omp parallel for schedule(static)
    for (int j = 0; j < cin * kk; ++j) {
      double* g = gcol.data() + static_cast<std::size_t>(j) * hw;
      std::fill(g, g + hw, 0.0);
      for (int oc = 0; oc < cout; ++oc) {
        const double wv = w[static_cast<std::size_t>(oc) * cin * kk + j];
        const double* go = gy.data() + idx4(cout, h, wd, n, oc, 0, 0);
        for (int pos = 0; pos < hw; ++pos) g[pos] += wv * go[pos];
      }
    }

#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < cin; ++ic) {
      double* gplane = gx.data() + idx4(cin, h, wd, n, ic, 0, 0);
      std::fill(gplane, gplane + hw, 0.0);
      const double* g = gcol.data() + static_cast<std::size_t>(ic) * kk * hw;
      for (std::size_t i = 0; i < taps.size(); ++i) detail::scatter(gplane, h, wd, taps[i], g[i]);
    }

#pragma omp parallel for schedule(static)
    for (int t = 0; t < kk; ++t) {
      double* goy = goffsets.data() + idx4(2 * kk, h, wd, n, 2 * t, 0, 0);
      double* gox = goffsets.data() + idx4(2 * kk, h, wd, n, 2 * t + 1, 0, 0);
      for (int pos = 0; pos < hw; ++pos) {
        const auto& tp = taps[static_cast<std::size_t>(t) * hw + pos];
        double acc_y = 0.0, acc_x = 0.0;
        for (int ic = 0; ic < cin; ++ic) {
          double dpy, dpx;
          detail::sample_grad(x.data() + idx4(cin, h, wd, n, ic, 0, 0), h, wd, tp, dpy, dpx);
          const double g = gcol[(static_cast<std::size_t>(ic) * kk + t) * hw + pos];
          acc_y += g * dpy;
          acc_x += g * dpx;
        }
        goy[pos] = acc_y;
        gox[pos] = acc_x;
      }
    }
  }
}

}  // namespace freqnet::kernels::omp
