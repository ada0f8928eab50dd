#pragma once

#include <filesystem>
#include <optional>

#include <Eigen/Dense>

namespace turbsim {

/// Kolmogorov phase power-spectrum constant: Phi(k) = C r0^(-5/3) k^(-11/3),
/// k in cycles per metre.
double kolmogorov_constant();

/// Int_0^inf t^(-14/3) J_{n+1}(t) J_{n'+1}(t) dt by adaptive quadrature.
/// Throws NumericalError when the quadrature error estimate is not small.
double noll_radial_integral(int n, int n_prime);

/// Covariance of the Noll coefficients a_2..a_J (radians^2) for Kolmogorov
/// turbulence, as a (J-1) x (J-1) matrix: row/column i is Noll index i+2.
/// Entries scale exactly as (D/r0)^(5/3). Pairs with different azimuthal
/// order, or with different parity (cosine vs sine), are zero.
Eigen::MatrixXd noll_covariance(int num_modes, double d_over_r0);

/// Binary cache file for covariance matrices:
///   char[8] "TSNOLLCV", uint32 version (=1), uint32 J, float64 d_over_r0,
///   then (J-1)^2 float64 row-major. Little-endian host layout.
void write_covariance_file(const std::filesystem::path& path, int num_modes, double d_over_r0,
                           const Eigen::MatrixXd& cov);
/// Returns nullopt if the file is missing, malformed or describes other (J, D/r0).
std::optional<Eigen::MatrixXd> read_covariance_file(const std::filesystem::path& path, int num_modes,
                                                    double d_over_r0);

/// noll_covariance backed by the on-disk cache in `cache_dir` (if given).
Eigen::MatrixXd cached_noll_covariance(int num_modes, double d_over_r0,
                                       const std::optional<std::filesystem::path>& cache_dir);

/// Lower Cholesky factor, retrying with diagonal jitter up to 1e-12 x trace scale.
/// Throws NumericalError if the matrix is not positive semi-definite.
Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& cov);

/// Directory named by TURBSIM_CACHE_DIR, if set and non-empty.
std::optional<std::filesystem::path> cache_dir_from_env();

}  // namespace turbsim
