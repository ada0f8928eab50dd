#pragma once

#include "turbsim/image.hpp"

namespace turbsim {

/// Blur-and-warp model parameters. Defaults are the published table values
/// with the distortion gain used for the turbulent test set.
struct GeometricParams {
  double gamma = 100.0;      // distortion gain; multiplies a smoothed unit-normal field
  double sigma_d_sq = 5.0;   // spatial-correlation variance of the distortion field, px^2
  double sigma_b_sq = 0.5;   // blur variance, px^2

  void validate() const;
};

/// d_u = gamma (G_D * v_u), d_v = gamma (G_D * v_v) with v_u, v_v independent
/// white-noise fields drawn from streams derived from `seed`.
DistortionField distortion_field(int height, int width, const GeometricParams& params, Seed seed);

struct GeometricResult {
  Image image;
  DistortionField field;
};

/// warp(convolve(image, G_B), distortion_field(...)); also returns the field.
GeometricResult simulate_geometric_detailed(const Image& image, const GeometricParams& params, Seed seed);

Image simulate_geometric(const Image& image, const GeometricParams& params, Seed seed);

}  // namespace turbsim
