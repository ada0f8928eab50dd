#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "test_support.hpp"
#include "turbsim/noll_covariance.hpp"
#include "turbsim/optics.hpp"

using namespace turbsim;

TEST(Noll, OrderingFirstModes) {
  EXPECT_EQ(noll_to_nm(1), (NollMode{0, 0}));
  EXPECT_EQ(noll_to_nm(2), (NollMode{1, 1}));
  EXPECT_EQ(noll_to_nm(3), (NollMode{1, -1}));
  EXPECT_EQ(noll_to_nm(4), (NollMode{2, 0}));
  EXPECT_EQ(noll_to_nm(5), (NollMode{2, -2}));
  EXPECT_EQ(noll_to_nm(6), (NollMode{2, 2}));
  EXPECT_EQ(noll_to_nm(11), (NollMode{4, 0}));
  EXPECT_EQ(noll_to_nm(22), (NollMode{6, 0}));
  EXPECT_THROW(noll_to_nm(0), ParameterError);
}

TEST(Noll, MatchesEnumerationOracle) {
  for (int j = 1; j <= 66; ++j) {
    const auto expected = oracles::noll_by_enumeration(j);
    EXPECT_EQ(noll_to_nm(j), (NollMode{expected.first, expected.second})) << "j=" << j;
  }
}

TEST(Zernike, PistonAndTilt) {
  for (double rho : {0.0, 0.3, 1.0})
    for (double theta : {0.0, 1.0, 4.0}) EXPECT_EQ(zernike_eval(0, 0, rho, theta), 1.0);
  EXPECT_NEAR(zernike_eval(1, 1, 1.0, 0.0), 2.0, 1e-15);
  EXPECT_NEAR(zernike_eval(2, 0, 1.0, 0.0), std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(zernike_eval(4, 0, 0.0, 0.0), std::sqrt(5.0), 1e-14);  // sqrt(5)(6r^4-6r^2+1)
  EXPECT_THROW(zernike_eval(3, 2, 0.5, 0.0), ParameterError);
  EXPECT_THROW(zernike_eval(1, 2, 0.5, 0.0), ParameterError);
}

TEST(Zernike, DiscreteOrthonormality256) {
  const ZernikeBasis basis(256, 15);
  for (int a = 1; a <= 15; ++a)
    for (int b = a; b <= 15; ++b) {
      const double ip = basis.inner_product(basis.mode(a), basis.mode(b));
      if (a == b)
        EXPECT_NEAR(ip, 1.0, 1e-2) << a;
      else
        EXPECT_LT(std::abs(ip), 1e-3) << a << "," << b;
    }
}

TEST(Fried, Table2ClosedForm) {
  const double r0 = fried_parameter(OpticalParams::table2());
  const double k = 2 * std::numbers::pi / 10.5e-6;
  const double oracle = std::pow(0.423 * k * k * 1e-15 * 2000.0, -0.6);
  EXPECT_NEAR(r0, oracle, 1e-12 * oracle);
  EXPECT_NEAR(r0, 2.05, 0.01 * 2.05);
}

TEST(Fried, Table3Passthrough) { EXPECT_EQ(fried_parameter(OpticalParams::table3()), 0.0145); }

TEST(Fried, PowerLaws) {
  const OpticalParams base = OpticalParams::table2();
  const double r0 = fried_parameter(base);
  OpticalParams p = base;
  p.cn2 = *base.cn2 / 2;
  EXPECT_NEAR(fried_parameter(p) / r0, std::pow(2.0, 0.6), 1e-12);
  p = base;
  p.wavelength *= 2;
  EXPECT_NEAR(fried_parameter(p) / r0, std::pow(2.0, 1.2), 1e-12);
  p = base;
  p.propagation_length *= 3;
  EXPECT_NEAR(fried_parameter(p) / r0, std::pow(3.0, -0.6), 1e-12);
}

TEST(Fried, MissingStrengthRejected) {
  OpticalParams p;
  p.cn2.reset();
  EXPECT_THROW(fried_parameter(p), ParameterError);
}

TEST(NollCovariance, RadialIntegralMatchesGammaClosedForm) {
  for (int n = 1; n <= 7; ++n)
    for (int m = n; m <= 7; m += 2) {
      const double closed = oracles::noll_radial_integral_closed_form(n, m);
      EXPECT_NEAR(noll_radial_integral(n, m), closed, 1e-8 * std::abs(closed)) << n << "," << m;
    }
}

TEST(NollCovariance, TiltVarianceKnownValue) {
  const auto cov = noll_covariance(3, 1.0);
  EXPECT_NEAR(cov(0, 0), 0.449, 0.002);  // Noll's 0.448 with 0.023 rounded
  EXPECT_EQ(cov(0, 0), cov(1, 1));
  EXPECT_EQ(cov(0, 1), 0.0);
}

TEST(NollCovariance, SymmetricPsdAndStructure) {
  const auto cov = noll_covariance(36, 2.0);
  EXPECT_TRUE(cov.isApprox(cov.transpose(), 0.0));
  EXPECT_NO_THROW(cholesky_with_jitter(cov));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  EXPECT_GT(es.eigenvalues().minCoeff(), -1e-12);
  for (int a = 0; a < 35; ++a)
    for (int b = 0; b < 35; ++b) {
      const auto ma = noll_to_nm(a + 2), mb = noll_to_nm(b + 2);
      const bool same_symmetry = ma.m == mb.m;
      if (!same_symmetry) {
        EXPECT_EQ(cov(a, b), 0.0) << a + 2 << "," << b + 2;
      }
    }
  // Tilt couples with coma (j=2 with j=8): negative correlation.
  EXPECT_LT(cov(0, 6), 0.0);
}

TEST(NollCovariance, ScalingLaw) {
  const auto a = noll_covariance(21, 1.5);
  const auto b = noll_covariance(21, 3.0);
  const double factor = std::pow(2.0, 5.0 / 3.0);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) EXPECT_NEAR(b(i, j), factor * a(i, j), 1e-14 * std::abs(b(i, j)));
}

TEST(NollCovariance, ResidualVarianceMatchesNollAsymptote) {
  const double d_over_r0 = 2.0;
  const auto cov = noll_covariance(36, d_over_r0);
  const double total = oracles::piston_removed_phase_variance() * std::pow(d_over_r0, 5.0 / 3.0);
  const double residual = total - cov.trace();
  const double asymptote = 0.2944 * std::pow(36.0, -std::sqrt(3.0) / 2.0) * std::pow(d_over_r0, 5.0 / 3.0);
  EXPECT_NEAR(residual / asymptote, 1.0, 0.10);
}

TEST(NollCovariance, InvalidArguments) {
  EXPECT_THROW(noll_covariance(1, 1.0), ParameterError);
  EXPECT_THROW(noll_covariance(10, 0.0), ParameterError);
}

TEST(NollCovariance, CacheFileRoundTrip) {
  const auto dir = testing_support::scratch_dir("covcache");
  const auto direct = noll_covariance(15, 2.0);
  const auto first = cached_noll_covariance(15, 2.0, dir);
  EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir), std::filesystem::directory_iterator{}), 1);
  const auto second = cached_noll_covariance(15, 2.0, dir);
  EXPECT_TRUE(first == direct);
  EXPECT_TRUE(second == direct);
  EXPECT_FALSE(read_covariance_file(dir / "missing.bin", 15, 2.0).has_value());
  const auto file = std::filesystem::directory_iterator(dir)->path();
  EXPECT_FALSE(read_covariance_file(file, 15, 2.5).has_value());
  EXPECT_FALSE(read_covariance_file(file, 16, 2.0).has_value());
}

TEST(Wavefront, ZeroAndSingleMode) {
  const ZernikeBasis basis(32, 10);
  std::vector<double> c(10, 0.0);
  const Image flat = wavefront(c, basis);
  for (double v : flat.pixels()) EXPECT_EQ(v, 0.0);
  c[3] = 1.0;  // Noll j = 4
  EXPECT_EQ(wavefront(c, basis), basis.mode(4));
  EXPECT_THROW(wavefront(std::vector<double>(11, 0.0), basis), ParameterError);
}

TEST(Wavefront, MatchesDirectSummation) {
  const ZernikeBasis basis(48, 21);
  std::mt19937_64 rng(5);
  std::vector<double> c(21);
  for (double& v : c) v = testing_support::uniform01(rng) - 0.5;
  const Image w = wavefront(c, basis);
  const double half = 24.0;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      if (basis.pupil().at(x, y) == 0.0) {
        EXPECT_EQ(w.at(x, y), 0.0);
        continue;
      }
      const double px = (x + 0.5 - half) / half, py = (y + 0.5 - half) / half;
      double direct = 0.0;
      for (int j = 1; j <= 21; ++j) {
        const auto nm = noll_to_nm(j);
        direct += c[j - 1] * zernike_eval(nm.n, nm.m, std::hypot(px, py), std::atan2(py, px));
      }
      EXPECT_NEAR(w.at(x, y), direct, 1e-9);
    }
}

TEST(TiltToPixels, PitchAndLinearity) {
  const OpticalParams p = OpticalParams::table2();
  EXPECT_NEAR(pixel_pitch(p), 2 * 0.013 * std::tan(22.5 * std::numbers::pi / 180) / 640, 1e-18);
  EXPECT_NEAR(pixel_pitch(p), 16.8e-6, 0.05e-6);
  const auto zero = tilt_to_pixels(0, 0, p);
  EXPECT_EQ(zero.dx, 0.0);
  EXPECT_EQ(zero.dy, 0.0);
  const auto one = tilt_to_pixels(1.5, -0.5, p);
  const auto two = tilt_to_pixels(3.0, -1.0, p);
  EXPECT_EQ(two.dx, 2 * one.dx);
  EXPECT_EQ(two.dy, 2 * one.dy);
  const double alpha = 2 * p.wavelength * 1.5 / (std::numbers::pi * p.aperture_diameter);
  EXPECT_NEAR(one.dx, alpha * p.focal_length / pixel_pitch(p), 1e-12);
}

TEST(Psf, ZeroPhaseIsSymmetricUnitSum) {
  const ZernikeBasis basis;
  const Kernel psf = psf_from_phase(Image(64, 64), basis, OpticalParams::table3());
  EXPECT_EQ(psf.side(), 33);
  double sum = 0.0;
  for (double v : psf.weights) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  for (int y = -16; y <= 16; ++y)
    for (int x = -16; x <= 16; ++x) EXPECT_NEAR(psf.at(x, y), psf.at(-x, -y), 1e-9);
  // Peak at the centre.
  EXPECT_EQ(*std::max_element(psf.weights.begin(), psf.weights.end()), psf.at(0, 0));
}

TEST(Psf, RandomPhaseIsProbabilityKernel) {
  const ZernikeBasis basis;
  const OpticalParams p = OpticalParams::table3();
  std::mt19937_64 rng(17);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> c(36);
    for (double& v : c) v = 4.0 * (testing_support::uniform01(rng) - 0.5);
    const Kernel psf = psf_from_phase(wavefront(c, basis), basis, p);
    double sum = 0.0;
    for (double v : psf.weights) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Psf, TiltCentroidMatchesTiltToPixels) {
  const ZernikeBasis basis;
  const OpticalParams p = OpticalParams::table3();
  for (double c2 : {-6.0, -2.0, 1.0, 4.0, 8.0}) {
    std::vector<double> c(3, 0.0);
    c[1] = c2;
    const auto centroid = kernel_centroid(psf_from_phase(wavefront(c, basis), basis, p));
    const auto expected = tilt_to_pixels(c2, 0.0, p);
    EXPECT_NEAR(centroid.dx, expected.dx, 0.1) << c2;
    EXPECT_NEAR(centroid.dy, 0.0, 1e-6);
  }
  std::vector<double> c(3, 0.0);
  c[2] = 5.0;
  const auto centroid = kernel_centroid(psf_from_phase(wavefront(c, basis), basis, p));
  EXPECT_NEAR(centroid.dy, tilt_to_pixels(0.0, 5.0, p).dy, 0.1);
}

TEST(Psf, RejectsBadInput) {
  const ZernikeBasis basis(16, 3);
  EXPECT_THROW(psf_from_phase(Image(16, 12), basis, OpticalParams{}), ParameterError);
  EXPECT_THROW(psf_from_phase(Image(16, 16), basis, OpticalParams{}, PsfOptions{32, 2}), ParameterError);
}
