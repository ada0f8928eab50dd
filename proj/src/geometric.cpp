#include "turbsim/geometric.hpp"

#include <cmath>

#include "turbsim/kernels.hpp"
#include "turbsim/random.hpp"

namespace turbsim {

namespace {
constexpr std::uint64_t kStreamU = 0x75;  // 'u'
constexpr std::uint64_t kStreamV = 0x76;  // 'v'
}  // namespace

void GeometricParams::validate() const {
  auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!ok(gamma)) throw ParameterError("geometric: gamma must be >= 0");
  if (!ok(sigma_d_sq)) throw ParameterError("geometric: sigma_d_sq must be >= 0");
  if (!ok(sigma_b_sq)) throw ParameterError("geometric: sigma_b_sq must be >= 0");
}

DistortionField distortion_field(int height, int width, const GeometricParams& params, Seed seed) {
  params.validate();
  if (height < 1 || width < 1) throw ParameterError("distortion_field: dimensions must be >= 1");

  DistortionField field(width, height);
  if (params.gamma == 0.0) return field;

  const GaussianKernel g = gaussian_kernel(params.sigma_d_sq);
  field.du = convolve(white_noise_field(height, width, derive_seed(seed, kStreamU)), g);
  field.dv = convolve(white_noise_field(height, width, derive_seed(seed, kStreamV)), g);
  for (double& v : field.du.pixels()) v *= params.gamma;
  for (double& v : field.dv.pixels()) v *= params.gamma;
  return field;
}

GeometricResult simulate_geometric_detailed(const Image& image, const GeometricParams& params, Seed seed) {
  params.validate();
  if (image.empty()) throw ParameterError("simulate_geometric: empty image");
  const Image blurred = convolve(image, gaussian_kernel(params.sigma_b_sq));
  GeometricResult result;
  result.field = distortion_field(image.height(), image.width(), params, seed);
  result.image = warp(blurred, result.field);
  return result;
}

Image simulate_geometric(const Image& image, const GeometricParams& params, Seed seed) {
  return simulate_geometric_detailed(image, params, seed).image;
}

}  // namespace turbsim
