#pragma once

#include <optional>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "turbsim/image.hpp"
#include "turbsim/optics.hpp"

namespace turbsim {

/// Spatial correlation of the coefficient field between grid nodes.
/// Only the Gaussian model is implemented: corr(lag) = exp(-lag^2 / (2 l^2)).
struct SpatialCorrelationModel {
  double correlation_length = 32.0;  // px
  std::string method = "gaussian";

  void validate() const;
};

/// Noll coefficients a_2..a_J (radians) on a regular grid of nodes. Node (r, c)
/// sits at pixel (c * spacing, r * spacing); with the default 50% tile overlap
/// the spacing is half the tile size and every node is a tile centre.
struct ZernikeCoeffField {
  int rows = 0;
  int cols = 0;
  int tile_size = 0;
  int num_modes = 0;        // J; each node holds J - 1 values
  std::vector<double> data; // node-major: ((r * cols) + c) * (J - 1) + (j - 2)

  int spacing() const { return tile_size / 2; }
  int dim() const { return num_modes - 1; }
  std::span<const double> node(int r, int c) const {
    return {data.data() + (static_cast<std::size_t>(r) * cols + c) * dim(), static_cast<std::size_t>(dim())};
  }
  /// Coefficient of Noll mode j (2..J) at node (r, c).
  double at(int r, int c, int j) const { return node(r, c)[j - 2]; }
};

/// Separable mode x space model: each mode gets a white-noise grid filtered by
/// a Gaussian so node-to-node correlation is exp(-lag^2 / (2 l^2)), then the
/// modes of each node are mixed with the Cholesky factor of
/// noll_covariance(J, D / r0). Requires tile_size >= 8 (even) and J >= 3.
ZernikeCoeffField sample_coeff_field(int height, int width, int tile_size, const OpticalParams& params,
                                     const SpatialCorrelationModel& corr, int num_modes, Seed seed,
                                     const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

/// Per-pixel backward-warp field from the (c2, c3) node values: tilt_to_pixels
/// at every node, bilinear upsampling, and a sign flip so image content moves
/// the way the PSF centroid would.
DistortionField tilt_distortion_field(const ZernikeCoeffField& field, const OpticalParams& params, int height,
                                      int width);

/// Raised-cosine weight of a tile centred at `centre` (stride `spacing`) at
/// coordinate x. Adjacent tiles sum to one.
double tile_window(int x, int centre, int spacing);

/// Sum of all tile windows at every pixel (1 everywhere by construction).
Image blend_window_sum(int height, int width, int tile_size);

struct ZernikeSimOptions {
  int tile_size = 32;
  int num_modes = 36;
  int pupil_grid = 64;
  PsfOptions psf{};
  std::optional<std::filesystem::path> cache_dir;
};

struct ZernikeSimResult {
  Image image;
  ZernikeCoeffField coeffs;
  DistortionField field;
};

/// Tilt warp followed by spatially varying blur. Each tile is convolved with
/// the PSF of its j >= 4 modes and the tiles are blended with raised-cosine
/// windows.
ZernikeSimResult simulate_zernike_detailed(const Image& image, const OpticalParams& params,
                                           const SpatialCorrelationModel& corr, const ZernikeSimOptions& options,
                                           Seed seed);

Image simulate_zernike(const Image& image, const OpticalParams& params, const SpatialCorrelationModel& corr,
                       int num_modes, Seed seed);

/// Shared, immutable Zernike basis for (grid, modes).
const ZernikeBasis& shared_basis(int grid_size, int num_modes);

}  // namespace turbsim
