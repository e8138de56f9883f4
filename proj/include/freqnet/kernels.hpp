// SPDX-License-Identifier: Apache-2.0
//
// Convolution kernels over contiguous NCHW double buffers.
//
// Two implementations share every signature:
//   serial:: direct per-output-element summation, kept as the reference.
//   omp::    loop-reordered kernels parallelised with OpenMP.
// Both accumulate every output element in the same (in_channel, kh, kw)
// order, so their results agree bit-for-bit on any thread count.
//
// Backward kernels overwrite their gradient outputs.
#pragma once

#include <span>

namespace freqnet::kernels {

struct ConvShape {
  int batch = 1;
  int in_channels = 0;
  int height = 0;
  int width = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 0;

  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  /// Throws InvalidInput when the geometry does not divide evenly.
  void validate() const;
};

enum class Backend { serial, omp };
void set_backend(Backend b);
Backend backend();

namespace serial {

void conv2d_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y);
void conv2d_backward_input(const ConvShape& s, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx);
void conv2d_backward_params(const ConvShape& s, std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw, std::span<double> gb);

// Depthwise: out_channels == in_channels, w is [C, 1, k, k].
void depthwise_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                       std::span<const double> b, std::span<double> y);
void depthwise_backward_input(const ConvShape& s, std::span<const double> gy,
                              std::span<const double> w, std::span<double> gx);
void depthwise_backward_params(const ConvShape& s, std::span<const double> x,
                               std::span<const double> gy, std::span<double> gw,
                               std::span<double> gb);

// Deformable v1, stride 1, same padding. offsets is [N, 2*k*k, H, W] holding
// (dy, dx) for each tap; samples are bilinear with zeros outside the image.
void deformable_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                        std::span<const double> b, std::span<const double> offsets,
                        std::span<double> y);
void deformable_backward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                         std::span<const double> offsets, std::span<const double> gy,
                         std::span<double> gx, std::span<double> gw, std::span<double> gb,
                         std::span<double> goffsets);

}  // namespace serial

namespace omp {

void conv2d_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y);
void conv2d_backward_input(const ConvShape& s, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx);
void conv2d_backward_params(const ConvShape& s, std::span<const double> x,
                            std::span<const double> gy, std::span<double> gw, std::span<double> gb);

void depthwise_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                       std::span<const double> b, std::span<double> y);
void depthwise_backward_input(const ConvShape& s, std::span<const double> gy,
                              std::span<const double> w, std::span<double> gx);
void depthwise_backward_params(const ConvShape& s, std::span<const double> x,
                               std::span<const double> gy, std::span<double> gw,
                               std::span<double> gb);

void deformable_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                        std::span<const double> b, std::span<const double> offsets,
                        std::span<double> y);
void deformable_backward(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                         std::span<const double> offsets, std::span<const double> gy,
                         std::span<double> gx, std::span<double> gw, std::span<double> gb,
                         std::span<double> goffsets);

}  // namespace omp

/// Bilinear sample of an H x W plane at fractional (py, px), zero outside.
double bilinear(std::span<const double> plane, int h, int w, double py, double px);

}  // namespace freqnet::kernels
