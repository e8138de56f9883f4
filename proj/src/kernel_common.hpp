// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "freqnet/kernels.hpp"

namespace freqnet::kernels::detail {

inline std::size_t idx4(int d1, int d2, int d3, int a, int b, int c, int d) {
  return ((static_cast<std::size_t>(a) * d1 + b) * d2 + c) * d3 + d;
}

/// Bilinear footprint of one fractional sample: up to four taps inside the plane.
struct BilinearTaps {
  int y0 = 0, x0 = 0;
  double ly = 0, lx = 0;
  bool inside = false;  // false when the sample lies entirely outside (value 0)
};

inline BilinearTaps bilinear_taps(int h, int w, double py, double px) {
  BilinearTaps t;
  if (py <= -1.0 || py >= h || px <= -1.0 || px >= w) return t;
  t.inside = true;
  const double fy = std::floor(py);
  const double fx = std::floor(px);
  t.y0 = static_cast<int>(fy);
  t.x0 = static_cast<int>(fx);
  t.ly = py - fy;
  t.lx = px - fx;
  return t;
}

inline double tap(const double* plane, int h, int w, int y, int x) {
  return (y >= 0 && y < h && x >= 0 && x < w) ? plane[static_cast<std::size_t>(y) * w + x] : 0.0;
}

inline double sample(const double* plane, int h, int w, const BilinearTaps& t) {
  if (!t.inside) return 0.0;
  const double hy = 1.0 - t.ly, hx = 1.0 - t.lx;
  return hy * hx * tap(plane, h, w, t.y0, t.x0) + hy * t.lx * tap(plane, h, w, t.y0, t.x0 + 1) +
         t.ly * hx * tap(plane, h, w, t.y0 + 1, t.x0) +
         t.ly * t.lx * tap(plane, h, w, t.y0 + 1, t.x0 + 1);
}

/// d sample / d py and d sample / d px.
inline void sample_grad(const double* plane, int h, int w, const BilinearTaps& t, double& dpy,
                        double& dpx) {
  dpy = dpx = 0.0;
  if (!t.inside) return;
  const double v00 = tap(plane, h, w, t.y0, t.x0);
  const double v01 = tap(plane, h, w, t.y0, t.x0 + 1);
  const double v10 = tap(plane, h, w, t.y0 + 1, t.x0);
  const double v11 = tap(plane, h, w, t.y0 + 1, t.x0 + 1);
  const double hy = 1.0 - t.ly, hx = 1.0 - t.lx;
  dpy = -hx * v00 - t.lx * v01 + hx * v10 + t.lx * v11;
  dpx = -hy * v00 + hy * v01 - t.ly * v10 + t.ly * v11;
}

/// Adds g * (bilinear weights) into the in-bounds taps of `plane`.
inline void scatter(double* plane, int h, int w, const BilinearTaps& t, double g) {
  if (!t.inside) return;
  const double hy = 1.0 - t.ly, hx = 1.0 - t.lx;
  auto add = [&](int y, int x, double wgt) {
    if (y >= 0 && y < h && x >= 0 && x < w) plane[static_cast<std::size_t>(y) * w + x] += g * wgt;
  };
  add(t.y0, t.x0, hy * hx);
  add(t.y0, t.x0 + 1, hy * t.lx);
  add(t.y0 + 1, t.x0, t.ly * hx);
  add(t.y0 + 1, t.x0 + 1, t.ly * t.lx);
}

}  // namespace freqnet::kernels::detail
