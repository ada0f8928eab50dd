#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "turbsim/image.hpp"
#include "turbsim/optics.hpp"
#include "turbsim/zernike_sim.hpp"

namespace turbsim {

struct PsfBasisConfig {
  int num_modes = 36;     // J; coefficient vectors have J - 1 entries
  int samples = 2000;     // N
  int components = 32;    // K
  int pupil_grid = 64;
  PsfOptions psf{};
};

/// PCA basis of tilt-free PSFs plus an affine map from Noll coefficients
/// (a_2..a_J) to basis weights.
struct PsfBasis {
  int num_modes = 0;
  int support = 0;
  int samples = 0;
  int pupil_grid = 0;
  int pad_factor = 0;
  std::uint64_t params_hash = 0;
  Kernel mean_psf;
  std::vector<Kernel> kernels;             // K, orthonormal under the Frobenius product
  Eigen::MatrixXd projection;              // K x (J - 1)
  Eigen::VectorXd intercept;               // K
  std::vector<double> explained_variance;  // fraction per component, non-increasing
  double training_residual = 0.0;          // mean relative L2 of the affine-map PSFs on the training set

  int components() const { return static_cast<int>(kernels.size()); }
  int dim() const { return num_modes - 1; }
};

/// Identifies everything a basis depends on: the optics that shape the PSF
/// (aperture, wavelength, r0, focal length, pixel pitch), J, the pupil grid
/// and the PSF options.
std::uint64_t psf_params_hash(const OpticalParams& params, const PsfBasisConfig& config);

/// Draws a = L z from the Noll statistics, renders tilt-free PSFs and runs PCA.
/// Throws ParameterError unless samples >= components >= 0.
PsfBasis build_psf_basis(const OpticalParams& params, const PsfBasisConfig& config, Seed seed,
                         const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

/// Coefficient samples and their PSFs as used by build_psf_basis (for tests
/// and diagnostics). Rows of `coeffs` are samples.
struct PsfSamples {
  Eigen::MatrixXd coeffs;        // N x (J - 1)
  std::vector<Kernel> psfs;
};
PsfSamples sample_psfs(const OpticalParams& params, const PsfBasisConfig& config, int count, Seed seed,
                       const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

/// weights = projection * coeffs + intercept.
Eigen::VectorXd p2s_transform(std::span<const double> coeffs, const PsfBasis& basis);

/// mean + sum_k w_k kernel_k, without renormalization.
Kernel reconstruct_psf(const PsfBasis& basis, const Eigen::VectorXd& weights);

/// Frobenius projection of a PSF onto the basis (the optimal PCA weights).
Eigen::VectorXd project_psf(const PsfBasis& basis, const Kernel& psf);

/// Binary layout (little-endian host, 64-bit floats row-major):
///   char[8] "TSIMP2SB", u32 version, u32 K, u32 support, u32 J, u64 params hash,
///   u32 N, u32 pupil grid, u32 pad factor, then mean (support^2), K kernels, projection (K x (J-1)),
///   intercept (K), explained variance (K), training residual.
void write_psf_basis(const std::filesystem::path& path, const PsfBasis& basis);
PsfBasis read_psf_basis(const std::filesystem::path& path);

/// Per-pixel weight rasters (one per component) from a node-grid coefficient
/// field: weights are computed at the nodes and upsampled bilinearly, which
/// equals transforming bilinearly upsampled coefficients because the map is affine.
std::vector<Image> p2s_weight_fields(const ZernikeCoeffField& field, const PsfBasis& basis, int height, int width);

/// Blur stage: [conv(I, mean) + sum_k w_k conv(I, b_k)] / [sum(mean) + sum_k w_k sum(b_k)].
Image p2s_blur(const Image& image, const PsfBasis& basis, const std::vector<Image>& weights);

struct P2sSimOptions {
  int grid_spacing = 16;  // coefficient-field node spacing, px
  std::optional<std::filesystem::path> cache_dir;
};

struct P2sSimResult {
  Image image;
  ZernikeCoeffField coeffs;
  DistortionField field;
};

/// Throws ConfigError when the basis was built for other parameters.
P2sSimResult simulate_p2s_detailed(const Image& image, const OpticalParams& params, const PsfBasis& basis,
                                   const SpatialCorrelationModel& corr, const P2sSimOptions& options, Seed seed);

Image simulate_p2s(const Image& image, const OpticalParams& params, const PsfBasis& basis,
                   const SpatialCorrelationModel& corr, Seed seed);

}  // namespace turbsim
