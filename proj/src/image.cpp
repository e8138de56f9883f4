// SPDX-License-Identifier: Apache-2.0
#include "freqnet/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "freqnet/error.hpp"

namespace freqnet {

Plane::Plane(int w, int h, double fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
  if (w < 0 || h < 0) throw InvalidInput("Plane: negative dimensions");
}

Image::Image(int w, int h, int channels, double fill) : width(w), height(h) {
  if (channels != 1 && channels != 3)
    throw InvalidInput("Image: channels must be 1 or 3, got " + std::to_string(channels));
  planes.assign(channels, Plane(w, h, fill));
}

namespace {

// BT.601 luma weights. Chroma scaling follows from them, which keeps the
// inverse exact instead of relying on rounded matrix entries.
constexpr double kKr = 0.299;
constexpr double kKb = 0.114;
constexpr double kKg = 1.0 - kKr - kKb;

}  // namespace

YccImage rgb_to_ycc(const Image& img) {
  if (img.channels() != 3)
    throw InvalidInput("rgb_to_ycc: expected 3 channels, got " + std::to_string(img.channels()));
  YccImage out;
  out.y = Plane(img.width, img.height);
  out.cb = Plane(img.width, img.height);
  out.cr = Plane(img.width, img.height);
  const auto& r = img.planes[0].data;
  const auto& g = img.planes[1].data;
  const auto& b = img.planes[2].data;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double y = kKr * r[i] + kKg * g[i] + kKb * b[i];
    out.y.data[i] = y - out.level_shift;
    out.cb.data[i] = 0.5 * (b[i] - y) / (1.0 - kKb);
    out.cr.data[i] = 0.5 * (r[i] - y) / (1.0 - kKr);
  }
  return out;
}

Image ycc_to_rgb(const YccImage& ycc) {
  if (!ycc.y.same_size(ycc.cb) || !ycc.y.same_size(ycc.cr))
    throw InvalidInput("ycc_to_rgb: plane sizes differ");
  Image out(ycc.y.width, ycc.y.height, 3);
  auto clamp = [](double v) { return std::clamp(v, 0.0, 255.0); };
  for (std::size_t i = 0; i < ycc.y.data.size(); ++i) {
    const double y = ycc.y.data[i] + ycc.level_shift;
    const double r = y + 2.0 * (1.0 - kKr) * ycc.cr.data[i];
    const double b = y + 2.0 * (1.0 - kKb) * ycc.cb.data[i];
    out.planes[0].data[i] = clamp(r);
    out.planes[1].data[i] = clamp((y - kKr * r - kKb * b) / kKg);
    out.planes[2].data[i] = clamp(b);
  }
  return out;
}

Plane luma_plane(const Image& img) {
  if (img.channels() == 3) return rgb_to_ycc(img).y;
  if (img.channels() != 1) throw InvalidInput("luma_plane: expected 1 or 3 channels");
  Plane y = img.planes[0];
  for (auto& v : y.data) v -= 128.0;
  return y;
}

namespace {

double cubic(double x) {
  const double ax = std::abs(x);
  const double ax2 = ax * ax;
  const double ax3 = ax2 * ax;
  if (ax <= 1.0) return 1.5 * ax3 - 2.5 * ax2 + 1.0;
  if (ax <= 2.0) return -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0;
  return 0.0;
}

struct Contribution {
  std::vector<int> index;
  std::vector<double> weight;
};

// One row of resampling weights per output sample.
std::vector<Contribution> contributions(int in_len, int out_len, double scale) {
  double kernel_width = 4.0;
  const bool antialias = scale < 1.0;
  if (antialias) kernel_width /= scale;
  const int taps = static_cast<int>(std::ceil(kernel_width)) + 2;
  std::vector<Contribution> out(out_len);
  for (int i = 0; i < out_len; ++i) {
    // 1-based coordinates, MATLAB convention.
    const double u = (i + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
    const int left = static_cast<int>(std::floor(u - kernel_width / 2.0));
    Contribution c;
    double sum = 0.0;
    for (int p = 0; p < taps; ++p) {
      const int idx = left + p;
      const double w = antialias ? scale * cubic(scale * (u - idx)) : cubic(u - idx);
      if (w == 0.0) continue;
      // Symmetric reflection of the 1-based index into [1, in_len].
      const int period = 2 * in_len;
      int m = (idx - 1) % period;
      if (m < 0) m += period;
      const int src = m < in_len ? m : period - 1 - m;
      c.index.push_back(src);
      c.weight.push_back(w);
      sum += w;
    }
    for (auto& w : c.weight) w /= sum;
    out[i] = std::move(c);
  }
  return out;
}

int scaled_length(int len, int num, int den, const char* what) {
  const long long scaled = static_cast<long long>(len) * num;
  if (scaled % den != 0)
    throw InvalidInput(std::string("bicubic_resize: non-integral output ") + what);
  return static_cast<int>(scaled / den);
}

}  // namespace

Plane bicubic_resize(const Plane& plane, int num, int den) {
  if (num <= 0 || den <= 0) throw InvalidInput("bicubic_resize: factor must be positive");
  if (plane.width == 0 || plane.height == 0) throw InvalidInput("bicubic_resize: empty plane");
  const int out_w = scaled_length(plane.width, num, den, "width");
  const int out_h = scaled_length(plane.height, num, den, "height");
  if (out_w == 0 || out_h == 0) throw InvalidInput("bicubic_resize: output would be empty");
  const double scale = static_cast<double>(num) / den;

  // Height first, then width.
  const auto rows = contributions(plane.height, out_h, scale);
  Plane tmp(plane.width, out_h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < out_h; ++y) {
    const auto& c = rows[y];
    for (int x = 0; x < plane.width; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < c.index.size(); ++k) acc += c.weight[k] * plane.at(x, c.index[k]);
      tmp.at(x, y) = acc;
    }
  }
  const auto cols = contributions(plane.width, out_w, scale);
  Plane out(out_w, out_h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const auto& c = cols[x];
      double acc = 0.0;
      for (std::size_t k = 0; k < c.index.size(); ++k) acc += c.weight[k] * tmp.at(c.index[k], y);
      out.at(x, y) = acc;
    }
  }
  return out;
}

Image bicubic_resize(const Image& img, int num, int den) {
  Image out;
  for (const auto& p : img.planes) out.planes.push_back(bicubic_resize(p, num, den));
  out.width = out.planes.front().width;
  out.height = out.planes.front().height;
  return out;
}

Image crop(const Image& img, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > img.width || y0 + h > img.height)
    throw InvalidInput("crop: window outside image");
  Image out(w, h, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.planes[c].at(x, y) = img.planes[c].at(x0 + x, y0 + y);
  return out;
}

Image center_crop_to_multiple(const Image& img, int m) {
  const int w = img.width / m * m;
  const int h = img.height / m * m;
  if (w == 0 || h == 0) throw InvalidInput("center_crop_to_multiple: image smaller than one block");
  if (w == img.width && h == img.height) return img;
  return crop(img, (img.width - w) / 2, (img.height - h) / 2, w, h);
}

Image quantize8(const Image& img) {
  Image out = img;
  for (auto& p : out.planes)
    for (auto& v : p.data) v = std::clamp(std::round(v), 0.0, 255.0);
  return out;
}

}  // namespace freqnet
