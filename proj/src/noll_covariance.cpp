#include "turbsim/noll_covariance.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include "turbsim/errors.hpp"
#include "turbsim/optics.hpp"

namespace turbsim {

namespace {

constexpr double kTailStart = 200.0;

// Unit-strength matrices, keyed by J. Entries for D/r0 = 1.
std::map<int, Eigen::MatrixXd>& unit_memo() {
  static std::map<int, Eigen::MatrixXd> memo;
  return memo;
}

std::mutex& memo_mutex() {
  static std::mutex m;
  return m;
}

Eigen::MatrixXd unit_covariance(int num_modes) {
  {
    std::lock_guard lock(memo_mutex());
    auto it = unit_memo().find(num_modes);
    if (it != unit_memo().end()) return it->second;
  }

  const int dim = num_modes - 1;
  const double prefactor = kolmogorov_constant() * 8.0 * std::pow(std::numbers::pi, 8.0 / 3.0);
  std::map<std::pair<int, int>, double> radial_cache;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  for (int a = 0; a < dim; ++a) {
    const NollMode ma = noll_to_nm(a + 2);
    for (int b = a; b < dim; ++b) {
      const NollMode mb = noll_to_nm(b + 2);
      if (std::abs(ma.m) != std::abs(mb.m)) continue;
      if (ma.m != 0 && ((ma.m > 0) != (mb.m > 0))) continue;
      const auto key = std::minmax(ma.n, mb.n);
      auto it = radial_cache.find(key);
      if (it == radial_cache.end()) it = radial_cache.emplace(key, noll_radial_integral(key.first, key.second)).first;
      const int parity = (ma.n + mb.n - 2 * std::abs(ma.m)) / 2;
      const double sign = parity % 2 == 0 ? 1.0 : -1.0;
      const double v = prefactor * sign * std::sqrt((ma.n + 1.0) * (mb.n + 1.0)) * it->second;
      cov(a, b) = v;
      cov(b, a) = v;
    }
  }

  std::lock_guard lock(memo_mutex());
  unit_memo().emplace(num_modes, cov);
  return cov;
}

std::uint64_t key_hash(int num_modes, double d_over_r0) {
  std::uint64_t bits;
  std::memcpy(&bits, &d_over_r0, sizeof bits);
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 1099511628211ull;
    }
  };
  mix(static_cast<std::uint64_t>(num_modes));
  mix(bits);
  return h;
}

constexpr char kMagic[8] = {'T', 'S', 'N', 'O', 'L', 'L', 'C', 'V'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

double kolmogorov_constant() {
  // [(24/5) Gamma(6/5)]^(5/6) Gamma(11/6)^2 / (2 pi^(11/3)) ~= 0.022896
  return std::pow(24.0 / 5.0 * std::tgamma(6.0 / 5.0), 5.0 / 6.0) * std::pow(std::tgamma(11.0 / 6.0), 2.0) /
         (2.0 * std::pow(std::numbers::pi, 11.0 / 3.0));
}

double noll_radial_integral(int n, int n_prime) {
  if (n < 1 || n_prime < 1) throw ParameterError("noll_radial_integral: radial orders must be >= 1");
  const double nu_a = n + 1.0;
  const double nu_b = n_prime + 1.0;
  auto integrand = [=](double t) {
    if (t <= 0.0) return 0.0;
    if (t < 1e-6)  // leading series term; avoids inf * 0 near the origin
      return std::exp((nu_a + nu_b) * std::log(t / 2.0) - (14.0 / 3.0) * std::log(t) - std::lgamma(nu_a + 1.0) -
                      std::lgamma(nu_b + 1.0));
    return std::pow(t, -14.0 / 3.0) * std::cyl_bessel_j(nu_a, t) * std::cyl_bessel_j(nu_b, t);
  };

  // [0, pi] carries the t^(-2/3) endpoint singularity of the lowest order.
  boost::math::quadrature::tanh_sinh<double> ts;
  double err0 = 0.0;
  double total = ts.integrate(integrand, 0.0, std::numbers::pi, 1e-12, &err0);
  double err_sum = std::abs(err0);

  // Oscillatory body, one half-period at a time.
  for (double a = std::numbers::pi; a < kTailStart; a += std::numbers::pi) {
    double err = 0.0;
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, a, a + std::numbers::pi, 5,
                                                                            1e-12, &err);
    err_sum += std::abs(err) * std::numbers::pi / 2.0;
  }
  // Non-oscillating part of the large-argument asymptote beyond the cut.
  const double t_end = std::numbers::pi * std::ceil(kTailStart / std::numbers::pi);
  total += std::cos((nu_b - nu_a) * std::numbers::pi / 2.0) / std::numbers::pi * (3.0 / 14.0) *
           std::pow(t_end, -14.0 / 3.0);

  if (!std::isfinite(total) || err_sum > 1e-8 * std::max(std::abs(total), 1e-300) + 1e-14) {
    std::ostringstream msg;
    msg << "noll_radial_integral(" << n << ", " << n_prime << ") did not converge: value " << total
        << ", error estimate " << err_sum;
    throw NumericalError(msg.str());
  }
  return total;
}

Eigen::MatrixXd noll_covariance(int num_modes, double d_over_r0) {
  if (num_modes < 2) throw ParameterError("noll_covariance: num_modes must be >= 2");
  if (!(d_over_r0 > 0.0) || !std::isfinite(d_over_r0))
    throw ParameterError("noll_covariance: d_over_r0 must be > 0");
  return unit_covariance(num_modes) * std::pow(d_over_r0, 5.0 / 3.0);
}

void write_covariance_file(const std::filesystem::path& path, int num_modes, double d_over_r0,
                           const Eigen::MatrixXd& cov) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write covariance cache " + path.string());
  const std::uint32_t j = static_cast<std::uint32_t>(num_modes);
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  out.write(reinterpret_cast<const char*>(&j), sizeof j);
  out.write(reinterpret_cast<const char*>(&d_over_r0), sizeof d_over_r0);
  for (Eigen::Index r = 0; r < cov.rows(); ++r)
    for (Eigen::Index c = 0; c < cov.cols(); ++c) {
      const double v = cov(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  if (!out) throw IoError("short write to covariance cache " + path.string());
}

std::optional<Eigen::MatrixXd> read_covariance_file(const std::filesystem::path& path, int num_modes,
                                                    double d_over_r0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::uint32_t version = 0, j = 0;
  double ratio = 0.0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&j), sizeof j);
  in.read(reinterpret_cast<char*>(&ratio), sizeof ratio);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0 || version != kVersion ||
      j != static_cast<std::uint32_t>(num_modes) || ratio != d_over_r0)
    return std::nullopt;
  const int dim = num_modes - 1;
  Eigen::MatrixXd cov(dim, dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) in.read(reinterpret_cast<char*>(&cov(r, c)), sizeof(double));
  if (!in) return std::nullopt;
  return cov;
}

Eigen::MatrixXd cached_noll_covariance(int num_modes, double d_over_r0,
                                       const std::optional<std::filesystem::path>& cache_dir) {
  if (!cache_dir) return noll_covariance(num_modes, d_over_r0);
  std::ostringstream name;
  name << "noll_J" << num_modes << '_' << std::hex << key_hash(num_modes, d_over_r0) << ".bin";
  const auto path = *cache_dir / name.str();
  if (auto cached = read_covariance_file(path, num_modes, d_over_r0)) return *cached;
  Eigen::MatrixXd cov = noll_covariance(num_modes, d_over_r0);
  std::error_code ec;
  std::filesystem::create_directories(*cache_dir, ec);
  // A cache that cannot be written is not an error for the caller.
  try {
    write_covariance_file(path, num_modes, d_over_r0, cov);
  } catch (const IoError&) {
  }
  return cov;
}

Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& cov) {
  const double scale = std::max(cov.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  for (double jitter : {0.0, 1e-15, 1e-14, 1e-13, 1e-12}) {
    Eigen::MatrixXd a = cov;
    a.diagonal().array() += jitter * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericalError("cholesky_with_jitter: covariance is not positive semi-definite");
}

std::optional<std::filesystem::path> cache_dir_from_env() {
  const char* dir = std::getenv("TURBSIM_CACHE_DIR");
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  return std::filesystem::path(dir);
}

}  // namespace turbsim
