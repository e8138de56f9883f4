// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace freqnet {

/// Single real-valued image plane, row-major.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(int w, int h, double fill = 0.0);

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool same_size(const Plane& o) const { return width == o.width && height == o.height; }
};

/// Planar image with 1 (luma) or 3 (RGB) channels, intensities nominally in [0,255].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<Plane> planes;

  Image() = default;
  Image(int w, int h, int channels, double fill = 0.0);

  int channels() const { return static_cast<int>(planes.size()); }
};

/// Zero-centered YCbCr planes. Every plane carries the -128 level shift.
struct YccImage {
  Plane y;
  Plane cb;
  Plane cr;
  double level_shift = 128.0;
};

/// Full-range BT.601 RGB -> YCbCr with the JPEG level shift applied to all planes.
YccImage rgb_to_ycc(const Image& img);
/// Inverse of rgb_to_ycc; output clamped to [0,255].
Image ycc_to_rgb(const YccImage& ycc);

/// Level-shifted luma of a 1- or 3-channel image.
Plane luma_plane(const Image& img);

/// Resample with the a = -0.5 cubic kernel. Downscaling widens the kernel
/// (antialiased, as in MATLAB imresize); borders use symmetric reflection.
/// `num/den` is the scale factor; output dims must come out integral.
Plane bicubic_resize(const Plane& plane, int num, int den);
Image bicubic_resize(const Image& img, int num, int den);

/// Centered crop to the largest multiple of `m` in each dimension.
Image center_crop_to_multiple(const Image& img, int m);
Image crop(const Image& img, int x0, int y0, int w, int h);

/// Round and clamp each sample to an 8-bit level.
Image quantize8(const Image& img);

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

}  // namespace freqnet
