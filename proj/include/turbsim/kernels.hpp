#pragma once

#include "turbsim/image.hpp"

// OpenMP-parallel image kernels. Every output pixel is computed by exactly one
// thread with a fixed summation order, so results are bit-identical for any
// thread count. Serial counterparts live in turbsim/reference.hpp.

namespace turbsim {

/// Sampled exp(-(x^2+y^2)/(2 variance)) truncated at radius ceil(3 sqrt(variance)),
/// normalized to unit sum. variance == 0 gives the 1x1 delta kernel.
GaussianKernel gaussian_kernel(double variance);

/// Reflect-101 index mapping (..., 2, 1, | 0, 1, ..., n-1, | n-2, ...) valid
/// for any integer i, including offsets several periods away.
int reflect_index(int i, int n);

/// Spatial convolution with reflect padding. Separable two-pass route.
Image convolve(const Image& image, const GaussianKernel& kernel);

/// Spatial convolution with reflect padding: out(x,y) = sum k(dx,dy) in(x-dx, y-dy).
Image convolve(const Image& image, const Kernel& kernel);

/// FFT route for convolve(image, kernel). The image is reflect-padded by the
/// kernel radius before the transform so borders agree with the direct route.
/// Throws ParameterError when the kernel side exceeds the smaller image side.
Image fft_convolve(const Image& image, const Kernel& kernel);

/// Bilinear interpolation with coordinates clamped to the image border.
double bilinear_sample(const Image& image, double x, double y);

/// Backward warp: out(x,y) = bilinear_sample(in, x + du(x,y), y + dv(x,y)).
Image warp(const Image& image, const DistortionField& field);

/// Number of OpenMP threads the kernels will use (1 without OpenMP).
int kernel_threads();

}  // namespace turbsim
