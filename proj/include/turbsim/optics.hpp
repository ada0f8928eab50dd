#pragma once

#include <optional>
#include <span>
#include <vector>

#include "turbsim/image.hpp"

namespace turbsim {

/// Camera and atmosphere description. Lengths in metres.
///
/// The turbulence strength comes either from `cn2` (uniform horizontal path)
/// or from an explicit `fried_parameter`; the explicit value wins.
struct OpticalParams {
  double aperture_diameter = 0.029;
  double wavelength = 10.5e-6;
  std::optional<double> cn2 = 1e-15;            // m^(-2/3)
  double focal_length = 0.013;
  double propagation_length = 2000.0;
  std::optional<double> fried_parameter;        // r0 override
  int image_width = 640;                        // sensor width used for the pixel pitch
  int image_height = 640;
  double horizontal_fov_deg = 45.0;
  std::optional<double> pixel_pitch_override;   // m

  void validate() const;

  /// Parameters of the published Zernike-simulator table (r0 from Cn^2).
  static OpticalParams table2();
  /// Parameters of the published P2S table (r0 given directly, in metres).
  static OpticalParams table3();
};

struct NollMode {
  int n = 0;  // radial order
  int m = 0;  // signed azimuthal order: m > 0 cosine, m < 0 sine
  friend bool operator==(NollMode, NollMode) = default;
};

/// Noll's single-index ordering. Throws ParameterError for j < 1.
NollMode noll_to_nm(int j);

/// Radial polynomial R_n^|m|(rho).
double zernike_radial(int n, int m_abs, double rho);

/// Noll-normalized Zernike value: unit RMS over the unit disk.
double zernike_eval(int n, int m, double rho, double theta);

/// Zernike modes j = 1..num_modes sampled at pixel centres of a square pupil
/// grid inscribed in the aperture. Edge pixels carry fractional transmission
/// (the area of the cell inside the disk), which is also the weight of the
/// discrete inner product.
class ZernikeBasis {
public:
  ZernikeBasis(int grid_size = 64, int num_modes = 36);

  int grid_size() const { return grid_size_; }
  int num_modes() const { return num_modes_; }
  const Image& pupil() const { return pupil_; }
  /// Mode raster for Noll index j (1-based); zero where the pupil is zero.
  const Image& mode(int j) const;
  /// sum(pupil * a * b) / sum(pupil).
  double inner_product(const Image& a, const Image& b) const;

private:
  int grid_size_;
  int num_modes_;
  Image pupil_;
  double pupil_area_ = 0.0;
  std::vector<Image> modes_;
};

/// r0 = override, or (0.423 k^2 Cn^2 L)^(-3/5) with k = 2 pi / lambda.
double fried_parameter(const OpticalParams& params);

/// Sensor pixel pitch: override, or 2 f tan(HFoV/2) / image_width.
double pixel_pitch(const OpticalParams& params);

struct PixelShift {
  double dx = 0.0;
  double dy = 0.0;
};

/// Image-plane displacement of a point source for Noll tilt coefficients
/// (radians). Angle of arrival 2 lambda c / (pi D), times f / pitch.
PixelShift tilt_to_pixels(double c2, double c3, const OpticalParams& params);

/// W = sum_j coeffs[j-1] Z_j on the pupil grid (coeffs[0] is piston).
Image wavefront(std::span<const double> coeffs, const ZernikeBasis& basis);

struct PsfOptions {
  int support = 33;      // odd, in sensor pixels
  int pad_factor = 2;    // FFT size = pad_factor * pupil grid
};

/// |DFT(pupil * exp(i phase))|^2 on the fine focal-plane grid, resampled to
/// sensor pixels by linear splatting (conserves energy and centroid),
/// cropped to the support and normalized to unit sum.
Kernel psf_from_phase(const Image& phase, const Image& pupil, const OpticalParams& params,
                      const PsfOptions& options = {});

/// Convenience overload using basis.pupil().
Kernel psf_from_phase(const Image& phase, const ZernikeBasis& basis, const OpticalParams& params,
                      const PsfOptions& options = {});

/// Intensity centroid (x, y) of a kernel relative to its centre, in pixels.
PixelShift kernel_centroid(const Kernel& kernel);

}  // namespace turbsim
