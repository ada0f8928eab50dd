#include "turbsim/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace turbsim {

int kernel_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

GaussianKernel gaussian_kernel(double variance) {
  if (!(variance >= 0.0) || !std::isfinite(variance))
    throw ParameterError("gaussian_kernel: variance must be finite and >= 0");

  GaussianKernel g;
  g.variance = variance;
  g.radius = variance == 0.0 ? 0 : static_cast<int>(std::ceil(3.0 * std::sqrt(variance)));
  const int side = 2 * g.radius + 1;

  g.profile.assign(side, 0.0);
  if (g.radius == 0) {
    g.profile[0] = 1.0;
  } else {
    double sum = 0.0;
    for (int i = -g.radius; i <= g.radius; ++i) {
      g.profile[i + g.radius] = std::exp(-(i * i) / (2.0 * variance));
      sum += g.profile[i + g.radius];
    }
    for (double& w : g.profile) w /= sum;
  }

  // exp(-(x^2+y^2)/2v) factorizes, so the normalized 2-D sample grid is the
  // outer product of the normalized 1-D profile.
  g.kernel = Kernel::zeros(g.radius);
  for (int j = 0; j < side; ++j)
    for (int i = 0; i < side; ++i)
      g.kernel.weights[static_cast<std::size_t>(j) * side + i] = g.profile[j] * g.profile[i];
  return g;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  int r = i % period;
  if (r < 0) r += period;
  return r < n ? r : period - r;
}

Image convolve(const Image& image, const GaussianKernel& kernel) {
  if (image.empty()) throw ParameterError("convolve: empty image");
  const int w = image.width();
  const int h = image.height();
  const int r = kernel.radius;
  if (r == 0) return image;
  const double* p = kernel.profile.data() + r;

  Image tmp(w, h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const double* src = image.row(y);
    double* dst = tmp.row(y);
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      if (x - r >= 0 && x + r < w) {
        for (int d = -r; d <= r; ++d) acc += p[d] * src[x - d];
      } else {
        for (int d = -r; d <= r; ++d) acc += p[d] * src[reflect_index(x - d, w)];
      }
      dst[x] = acc;
    }
  }

  Image out(w, h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    double* dst = out.row(y);
    for (int d = -r; d <= r; ++d) {
      const double* src = tmp.row(reflect_index(y - d, h));
      const double weight = p[d];
      for (int x = 0; x < w; ++x) dst[x] += weight * src[x];
    }
  }
  return out;
}

Image convolve(const Image& image, const Kernel& kernel) {
  if (image.empty()) throw ParameterError("convolve: empty image");
  const int w = image.width();
  const int h = image.height();
  const int r = kernel.radius;
  const int side = kernel.side();

  Image out(w, h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    double* dst = out.row(y);
    const bool interior_row = y - r >= 0 && y + r < h;
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      if (interior_row && x - r >= 0 && x + r < w) {
        for (int dy = -r; dy <= r; ++dy) {
          const double* src = image.row(y - dy) + x;
          const double* k = kernel.weights.data() + static_cast<std::size_t>(dy + r) * side + r;
          for (int dx = -r; dx <= r; ++dx) acc += k[dx] * src[-dx];
        }
      } else {
        for (int dy = -r; dy <= r; ++dy) {
          const double* src = image.row(reflect_index(y - dy, h));
          const double* k = kernel.weights.data() + static_cast<std::size_t>(dy + r) * side + r;
          for (int dx = -r; dx <= r; ++dx) acc += k[dx] * src[reflect_index(x - dx, w)];
        }
      }
      dst[x] = acc;
    }
  }
  return out;
}

double bilinear_sample(const Image& image, double x, double y) {
  const int w = image.width();
  const int h = image.height();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * image.at(x0, y0) + fx * image.at(x1, y0);
  const double bottom = (1.0 - fx) * image.at(x0, y1) + fx * image.at(x1, y1);
  return (1.0 - fy) * top + fy * bottom;
}

Image warp(const Image& image, const DistortionField& field) {
  if (field.du.width() != image.width() || field.du.height() != image.height() ||
      !field.du.same_shape(field.dv))
    throw ParameterError("warp: distortion field dimensions do not match image");
  const int w = image.width();
  const int h = image.height();
  Image out(w, h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const double* du = field.du.row(y);
    const double* dv = field.dv.row(y);
    double* dst = out.row(y);
    for (int x = 0; x < w; ++x) dst[x] = bilinear_sample(image, x + du[x], y + dv[x]);
  }
  return out;
}

}  // namespace turbsim
