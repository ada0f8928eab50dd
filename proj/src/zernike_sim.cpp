#include "turbsim/zernike_sim.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "turbsim/fft.hpp"
#include "turbsim/kernels.hpp"
#include "turbsim/noll_covariance.hpp"
#include "turbsim/random.hpp"

namespace turbsim {

namespace {
constexpr std::uint64_t kStreamCoeff = 0x7a63;  // "zc"
}

void SpatialCorrelationModel::validate() const {
  if (!(correlation_length > 0.0) || !std::isfinite(correlation_length))
    throw ParameterError("correlation_length must be > 0");
  if (method != "gaussian") throw ParameterError("unknown spatial correlation method '" + method + "'");
}

const ZernikeBasis& shared_basis(int grid_size, int num_modes) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::unique_ptr<ZernikeBasis>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{grid_size, num_modes}];
  if (!slot) slot = std::make_unique<ZernikeBasis>(grid_size, num_modes);
  return *slot;
}

ZernikeCoeffField sample_coeff_field(int height, int width, int tile_size, const OpticalParams& params,
                                     const SpatialCorrelationModel& corr, int num_modes, Seed seed,
                                     const std::optional<std::filesystem::path>& cache_dir) {
  if (height < 1 || width < 1) throw ParameterError("sample_coeff_field: dimensions must be >= 1");
  if (tile_size < 8 || tile_size % 2 != 0) throw ParameterError("sample_coeff_field: tile_size must be even and >= 8");
  if (num_modes < 3) throw ParameterError("sample_coeff_field: num_modes must be >= 3");
  params.validate();
  corr.validate();

  ZernikeCoeffField field;
  field.tile_size = tile_size;
  field.num_modes = num_modes;
  const int s = field.spacing();
  field.cols = (width - 1 + s - 1) / s + 1;
  field.rows = (height - 1 + s - 1) / s + 1;
  const int dim = field.dim();
  const std::size_t nodes = static_cast<std::size_t>(field.rows) * field.cols;

  const double d_over_r0 = params.aperture_diameter / fried_parameter(params);
  const Eigen::MatrixXd chol = cholesky_with_jitter(cached_noll_covariance(num_modes, d_over_r0, cache_dir));

  // Filtering white noise with g gives autocorrelation g * g; a Gaussian of
  // variance l^2 / 2 therefore yields exp(-lag^2 / (2 l^2)).
  const double l_grid = corr.correlation_length / s;
  const GaussianKernel g = gaussian_kernel(l_grid * l_grid / 2.0);
  double g_norm = 0.0;
  for (double w : g.kernel.weights) g_norm += w * w;
  g_norm = std::sqrt(g_norm);
  const int apron = g.radius;

  std::vector<double> unit(nodes * dim);
  for (int i = 0; i < dim; ++i) {
    const Image noise = white_noise_field(field.rows + 2 * apron, field.cols + 2 * apron,
                                          derive_seed(seed, kStreamCoeff, static_cast<std::uint64_t>(i)));
    const Image smooth = convolve(noise, g);
    for (int r = 0; r < field.rows; ++r)
      for (int c = 0; c < field.cols; ++c)
        unit[(static_cast<std::size_t>(r) * field.cols + c) * dim + i] = smooth.at(c + apron, r + apron) / g_norm;
  }

  field.data.assign(nodes * dim, 0.0);
  for (std::size_t n = 0; n < nodes; ++n) {
    const double* z = unit.data() + n * dim;
    double* a = field.data.data() + n * dim;
    for (int i = 0; i < dim; ++i) {
      double acc = 0.0;
      for (int k = 0; k <= i; ++k) acc += chol(i, k) * z[k];
      a[i] = acc;
    }
  }
  return field;
}

DistortionField tilt_distortion_field(const ZernikeCoeffField& field, const OpticalParams& params, int height,
                                      int width) {
  Image sx(field.cols, field.rows), sy(field.cols, field.rows);
  for (int r = 0; r < field.rows; ++r)
    for (int c = 0; c < field.cols; ++c) {
      const PixelShift shift = tilt_to_pixels(field.at(r, c, 2), field.at(r, c, 3), params);
      sx.at(c, r) = shift.dx;
      sy.at(c, r) = shift.dy;
    }
  const double inv = 1.0 / field.spacing();
  DistortionField out(width, height);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      out.du.at(x, y) = -bilinear_sample(sx, x * inv, y * inv);
      out.dv.at(x, y) = -bilinear_sample(sy, x * inv, y * inv);
    }
  return out;
}

double tile_window(int x, int centre, int spacing) {
  const int d = x - centre;
  if (d <= -spacing || d >= spacing) return 0.0;
  const double c = std::cos(std::numbers::pi * d / (2.0 * spacing));
  return c * c;
}

Image blend_window_sum(int height, int width, int tile_size) {
  const int s = tile_size / 2;
  const int cols = (width - 1 + s - 1) / s + 1;
  const int rows = (height - 1 + s - 1) / s + 1;
  Image sum(width, height);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      for (int y = std::max(0, r * s - s + 1); y <= std::min(height - 1, r * s + s - 1); ++y)
        for (int x = std::max(0, c * s - s + 1); x <= std::min(width - 1, c * s + s - 1); ++x)
          sum.at(x, y) += tile_window(x, c * s, s) * tile_window(y, r * s, s);
  return sum;
}

ZernikeSimResult simulate_zernike_detailed(const Image& image, const OpticalParams& params,
                                           const SpatialCorrelationModel& corr, const ZernikeSimOptions& options,
                                           Seed seed) {
  if (image.empty()) throw ParameterError("simulate_zernike: empty image");
  const int w = image.width(), h = image.height();
  ZernikeSimResult result;
  result.coeffs =
      sample_coeff_field(h, w, options.tile_size, params, corr, options.num_modes, seed, options.cache_dir);
  result.field = tilt_distortion_field(result.coeffs, params, h, w);
  const Image warped = warp(image, result.field);

  const ZernikeCoeffField& cf = result.coeffs;
  const ZernikeBasis& basis = shared_basis(options.pupil_grid, options.num_modes);
  const int s = cf.spacing();
  const int radius = options.psf.support / 2;
  const Kernel diffraction = psf_from_phase(Image(options.pupil_grid, options.pupil_grid), basis, params, options.psf);

  // Tile (r, c) covers pixels strictly inside (centre - s, centre + s).
  auto lo = [s](int k) { return std::max(0, k * s - s + 1); };
  const int tiles = cf.rows * cf.cols;
  std::vector<Image> blurred(tiles);
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < tiles; ++t) {
    const int r = t / cf.cols, c = t % cf.cols;
    const int x0 = lo(c), y0 = lo(r);
    const int x1 = std::min(w - 1, c * s + s - 1), y1 = std::min(h - 1, r * s + s - 1);
    Kernel psf = diffraction;
    if (cf.num_modes >= 4) {
      std::vector<double> coeffs(cf.num_modes, 0.0);
      for (int j = 4; j <= cf.num_modes; ++j) coeffs[j - 1] = cf.at(r, c, j);
      psf = psf_from_phase(wavefront(coeffs, basis), basis, params, options.psf);
    }
    Image patch(x1 - x0 + 1 + 2 * radius, y1 - y0 + 1 + 2 * radius);
    for (int py = 0; py < patch.height(); ++py) {
      const double* src = warped.row(reflect_index(y0 - radius + py, h));
      for (int px = 0; px < patch.width(); ++px) patch.at(px, py) = src[reflect_index(x0 - radius + px, w)];
    }
    blurred[t] = fft_convolve_valid(patch, psf);
  }

  result.image = Image(w, h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const int r0 = y / s;
    for (int x = 0; x < w; ++x) {
      const int c0 = x / s;
      double acc = 0.0;
      for (int r = r0; r <= std::min(r0 + 1, cf.rows - 1); ++r) {
        const double wy = tile_window(y, r * s, s);
        if (wy == 0.0) continue;
        for (int c = c0; c <= std::min(c0 + 1, cf.cols - 1); ++c) {
          const double wx = tile_window(x, c * s, s);
          if (wx == 0.0) continue;
          acc += wy * wx * blurred[r * cf.cols + c].at(x - lo(c), y - lo(r));
        }
      }
      result.image.at(x, y) = acc;
    }
  }
  return result;
}

Image simulate_zernike(const Image& image, const OpticalParams& params, const SpatialCorrelationModel& corr,
                       int num_modes, Seed seed) {
  ZernikeSimOptions options;
  options.num_modes = num_modes;
  options.cache_dir = cache_dir_from_env();
  return simulate_zernike_detailed(image, params, corr, options, seed).image;
}

}  // namespace turbsim
