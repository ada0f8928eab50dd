#include "turbsim/optics.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "turbsim/fft.hpp"

namespace turbsim {

namespace {

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace

void OpticalParams::validate() const {
  if (!positive(aperture_diameter)) throw ParameterError("optics: aperture_diameter must be > 0");
  if (!positive(wavelength)) throw ParameterError("optics: wavelength must be > 0");
  if (!positive(focal_length)) throw ParameterError("optics: focal_length must be > 0");
  if (!positive(propagation_length)) throw ParameterError("optics: propagation_length must be > 0");
  if (cn2 && !positive(*cn2)) throw ParameterError("optics: cn2 must be > 0");
  if (fried_parameter && !positive(*fried_parameter)) throw ParameterError("optics: fried_parameter must be > 0");
  if (!cn2 && !fried_parameter) throw ParameterError("optics: one of cn2 or fried_parameter is required");
  if (image_width < 1 || image_height < 1) throw ParameterError("optics: image dimensions must be >= 1");
  if (!(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0))
    throw ParameterError("optics: horizontal_fov_deg must be in (0, 180)");
  if (pixel_pitch_override && !positive(*pixel_pitch_override))
    throw ParameterError("optics: pixel_pitch must be > 0");
}

OpticalParams OpticalParams::table2() { return OpticalParams{}; }

OpticalParams OpticalParams::table3() {
  OpticalParams p;
  p.cn2.reset();
  p.fried_parameter = 0.0145;
  p.propagation_length = 4000.0;
  return p;
}

NollMode noll_to_nm(int j) {
  if (j < 1) throw ParameterError("noll_to_nm: index must be >= 1, got " + std::to_string(j));
  int n = 0;
  while (j > (n + 1) * (n + 2) / 2) ++n;
  const int k = j - n * (n + 1) / 2 - 1;  // position within radial order n
  const int m_abs = (n % 2 == 0) ? 2 * ((k + 1) / 2) : 2 * (k / 2) + 1;
  if (m_abs == 0) return {n, 0};
  return {n, (j % 2 == 0) ? m_abs : -m_abs};
}

double zernike_radial(int n, int m_abs, double rho) {
  double r = 0.0;
  for (int s = 0; s <= (n - m_abs) / 2; ++s) {
    const double c = ((s % 2) ? -1.0 : 1.0) * factorial(n - s) /
                     (factorial(s) * factorial((n + m_abs) / 2 - s) * factorial((n - m_abs) / 2 - s));
    r += c * std::pow(rho, n - 2 * s);
  }
  return r;
}

double zernike_eval(int n, int m, double rho, double theta) {
  const int m_abs = std::abs(m);
  if (n < 0 || m_abs > n || (n - m_abs) % 2 != 0)
    throw ParameterError("zernike_eval: invalid (n, m) = (" + std::to_string(n) + ", " + std::to_string(m) + ")");
  const double radial = zernike_radial(n, m_abs, rho);
  if (m == 0) return std::sqrt(n + 1.0) * radial;
  const double angular = m > 0 ? std::cos(m * theta) : std::sin(m_abs * theta);
  return std::sqrt(2.0 * (n + 1.0)) * radial * angular;
}

ZernikeBasis::ZernikeBasis(int grid_size, int num_modes) : grid_size_(grid_size), num_modes_(num_modes) {
  if (grid_size < 4) throw ParameterError("ZernikeBasis: grid_size must be >= 4");
  if (num_modes < 1) throw ParameterError("ZernikeBasis: num_modes must be >= 1");

  const int n = grid_size;
  const double half = n / 2.0;
  constexpr int kSuper = 8;
  pupil_ = Image(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      // Fully inside / outside cells are decided from the corners.
      const double x0 = (x - half) / half, x1 = (x + 1 - half) / half;
      const double y0 = (y - half) / half, y1 = (y + 1 - half) / half;
      const double near_x = std::min(std::abs(x0), std::abs(x1)) * ((x0 < 0) != (x1 < 0) ? 0.0 : 1.0);
      const double near_y = std::min(std::abs(y0), std::abs(y1)) * ((y0 < 0) != (y1 < 0) ? 0.0 : 1.0);
      const double far_x = std::max(std::abs(x0), std::abs(x1));
      const double far_y = std::max(std::abs(y0), std::abs(y1));
      double weight;
      if (far_x * far_x + far_y * far_y <= 1.0) {
        weight = 1.0;
      } else if (near_x * near_x + near_y * near_y >= 1.0) {
        weight = 0.0;
      } else {
        int inside = 0;
        for (int sy = 0; sy < kSuper; ++sy)
          for (int sx = 0; sx < kSuper; ++sx) {
            const double px = x0 + (x1 - x0) * (sx + 0.5) / kSuper;
            const double py = y0 + (y1 - y0) * (sy + 0.5) / kSuper;
            inside += (px * px + py * py <= 1.0);
          }
        weight = static_cast<double>(inside) / (kSuper * kSuper);
      }
      pupil_.at(x, y) = weight;
      pupil_area_ += weight;
    }
  }

  modes_.reserve(num_modes);
  for (int j = 1; j <= num_modes; ++j) {
    const NollMode nm = noll_to_nm(j);
    Image mode(n, n);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        if (pupil_.at(x, y) == 0.0) continue;
        const double px = (x + 0.5 - half) / half;
        const double py = (y + 0.5 - half) / half;
        mode.at(x, y) = zernike_eval(nm.n, nm.m, std::hypot(px, py), std::atan2(py, px));
      }
    modes_.push_back(std::move(mode));
  }
}

const Image& ZernikeBasis::mode(int j) const {
  if (j < 1 || j > num_modes_) throw ParameterError("ZernikeBasis: mode index out of range");
  return modes_[j - 1];
}

double ZernikeBasis::inner_product(const Image& a, const Image& b) const {
  double acc = 0.0;
  const auto p = pupil_.pixels();
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  for (std::size_t i = 0; i < p.size(); ++i) acc += p[i] * pa[i] * pb[i];
  return acc / pupil_area_;
}

double fried_parameter(const OpticalParams& params) {
  if (params.fried_parameter) {
    if (!positive(*params.fried_parameter)) throw ParameterError("fried_parameter: override must be > 0");
    return *params.fried_parameter;
  }
  if (!params.cn2) throw ParameterError("fried_parameter: neither cn2 nor a fried_parameter override given");
  if (!positive(*params.cn2) || !positive(params.wavelength) || !positive(params.propagation_length))
    throw ParameterError("fried_parameter: cn2, wavelength and propagation_length must be > 0");
  const double k = 2.0 * std::numbers::pi / params.wavelength;
  return std::pow(0.423 * k * k * *params.cn2 * params.propagation_length, -3.0 / 5.0);
}

double pixel_pitch(const OpticalParams& params) {
  if (params.pixel_pitch_override) return *params.pixel_pitch_override;
  const double half_fov = params.horizontal_fov_deg * std::numbers::pi / 360.0;
  return 2.0 * params.focal_length * std::tan(half_fov) / params.image_width;
}

PixelShift tilt_to_pixels(double c2, double c3, const OpticalParams& params) {
  const double to_angle = 2.0 * params.wavelength / (std::numbers::pi * params.aperture_diameter);
  const double to_pixels = params.focal_length / pixel_pitch(params);
  return {c2 * to_angle * to_pixels, c3 * to_angle * to_pixels};
}

Image wavefront(std::span<const double> coeffs, const ZernikeBasis& basis) {
  if (static_cast<int>(coeffs.size()) > basis.num_modes())
    throw ParameterError("wavefront: more coefficients than basis modes");
  const int n = basis.grid_size();
  Image w(n, n);
  auto out = w.pixels();
  for (std::size_t j = 0; j < coeffs.size(); ++j) {
    const double c = coeffs[j];
    if (c == 0.0) continue;
    const auto mode = basis.mode(static_cast<int>(j) + 1).pixels();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * mode[i];
  }
  return w;
}

Kernel psf_from_phase(const Image& phase, const Image& pupil, const OpticalParams& params,
                      const PsfOptions& options) {
  if (phase.width() != phase.height()) throw ParameterError("psf_from_phase: pupil raster must be square");
  if (!phase.same_shape(pupil)) throw ParameterError("psf_from_phase: phase and pupil shapes differ");
  if (options.support < 1 || options.support % 2 == 0) throw ParameterError("psf_from_phase: support must be odd");
  if (options.pad_factor < 2) throw ParameterError("psf_from_phase: pad_factor must be >= 2");

  const int n = phase.width();
  const int m = n * options.pad_factor;
  std::vector<std::complex<double>> field(static_cast<std::size_t>(m) * m);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double a = pupil.at(x, y);
      if (a != 0.0) field[static_cast<std::size_t>(y) * m + x] = std::polar(a, phase.at(x, y));
    }
  fft2d_forward(field, m, m);

  // Fine sample u (cycles/sample u/m) sits at angle lambda u / (m delta),
  // delta = D / n; in sensor pixels that is u * step.
  const double step = params.focal_length * params.wavelength * n /
                      (static_cast<double>(m) * params.aperture_diameter * pixel_pitch(params));
  const int radius = options.support / 2;
  Kernel psf = Kernel::zeros(radius);

  // Precompute the separable splat weights per fine index; u = -m/2 has no
  // mirror partner and is dropped to keep the kernel point-symmetric.
  struct Splat {
    int lo;
    double w_lo;
    double w_hi;
  };
  std::vector<Splat> splat(m);
  for (int k = 0; k < m; ++k) {
    const int u = k < m / 2 ? k : k - m;
    const double q = u * step;
    const double fl = std::floor(q);
    splat[k] = {static_cast<int>(fl), 1.0 - (q - fl), q - fl};
  }
  auto in_range = [radius](int v) { return v >= -radius && v <= radius; };

  for (int ky = 0; ky < m; ++ky) {
    if (ky == m / 2) continue;
    const Splat sy = splat[ky];
    for (int kx = 0; kx < m; ++kx) {
      if (kx == m / 2) continue;
      const Splat sx = splat[kx];
      const double intensity = std::norm(field[static_cast<std::size_t>(ky) * m + kx]);
      if (intensity == 0.0) continue;
      const int ys[2] = {sy.lo, sy.lo + 1};
      const double wy[2] = {sy.w_lo, sy.w_hi};
      const int xs[2] = {sx.lo, sx.lo + 1};
      const double wx[2] = {sx.w_lo, sx.w_hi};
      for (int a = 0; a < 2; ++a) {
        if (!in_range(ys[a]) || wy[a] == 0.0) continue;
        for (int b = 0; b < 2; ++b) {
          if (!in_range(xs[b]) || wx[b] == 0.0) continue;
          psf.at(xs[b], ys[a]) += intensity * wy[a] * wx[b];
        }
      }
    }
  }

  double sum = 0.0;
  for (double v : psf.weights) sum += v;
  if (!(sum > 0.0) || !std::isfinite(sum)) throw NumericalError("psf_from_phase: PSF has no energy inside support");
  for (double& v : psf.weights) v /= sum;
  return psf;
}

Kernel psf_from_phase(const Image& phase, const ZernikeBasis& basis, const OpticalParams& params,
                      const PsfOptions& options) {
  return psf_from_phase(phase, basis.pupil(), params, options);
}

PixelShift kernel_centroid(const Kernel& kernel) {
  double sx = 0.0, sy = 0.0, total = 0.0;
  for (int dy = -kernel.radius; dy <= kernel.radius; ++dy)
    for (int dx = -kernel.radius; dx <= kernel.radius; ++dx) {
      const double w = kernel.at(dx, dy);
      sx += w * dx;
      sy += w * dy;
      total += w;
    }
  return {sx / total, sy / total};
}

}  // namespace turbsim
