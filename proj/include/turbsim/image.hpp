#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "turbsim/errors.hpp"

namespace turbsim {

/// Single-channel raster of doubles, row-major. Intensities are nominally in
/// [0,1]; nothing here enforces the range.
class Image {
public:
  Image() = default;
  Image(int width, int height, double fill = 0.0)
      : width_(width), height_(height) {
    if (width < 0 || height < 0) throw ParameterError("Image: negative dimensions");
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int x, int y) { return data_[index(x, y)]; }
  double at(int x, int y) const { return data_[index(x, y)]; }

  double* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_; }
  const double* row(int y) const { return data_.data() + static_cast<std::size_t>(y) * width_; }

  std::span<double> pixels() { return data_; }
  std::span<const double> pixels() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Image&, const Image&) = default;

private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Square, odd-sized convolution kernel of side 2*radius+1, row-major,
/// centred on element (radius, radius).
struct Kernel {
  int radius = 0;
  std::vector<double> weights{1.0};

  int side() const { return 2 * radius + 1; }
  double at(int dx, int dy) const {
    return weights[static_cast<std::size_t>(dy + radius) * side() + (dx + radius)];
  }
  double& at(int dx, int dy) {
    return weights[static_cast<std::size_t>(dy + radius) * side() + (dx + radius)];
  }

  static Kernel zeros(int radius) {
    Kernel k;
    k.radius = radius;
    k.weights.assign(static_cast<std::size_t>(k.side()) * k.side(), 0.0);
    return k;
  }
};

/// Sampled, truncated, unit-sum Gaussian. Separable: weights are the outer
/// product of `profile` with itself.
struct GaussianKernel {
  double variance = 0.0;
  int radius = 0;
  std::vector<double> profile{1.0};  // 1-D, length 2*radius+1, unit sum
  Kernel kernel;                     // 2-D outer product
};

/// Per-pixel backward-warp displacements in pixels.
struct DistortionField {
  Image du;
  Image dv;

  DistortionField() = default;
  DistortionField(int width, int height) : du(width, height), dv(width, height) {}
  int width() const { return du.width(); }
  int height() const { return du.height(); }
};

/// 64-bit seed. Identical seed and parameters give bit-identical output.
struct Seed {
  std::uint64_t value = 0;
  friend bool operator==(Seed, Seed) = default;
};

}  // namespace turbsim
