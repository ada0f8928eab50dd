#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <fstream>

#include "test_support.hpp"
#include "turbsim/kernels.hpp"
#include "turbsim/p2s.hpp"

using namespace turbsim;

namespace {

double rel_l2(const Kernel& a, const Kernel& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.weights.size(); ++i) {
    num += (a.weights[i] - b.weights[i]) * (a.weights[i] - b.weights[i]);
    den += b.weights[i] * b.weights[i];
  }
  return std::sqrt(num / den);
}

Kernel normalized(Kernel k) {
  double s = 0;
  for (double w : k.weights) s += w;
  for (double& w : k.weights) w /= s;
  return k;
}

PsfBasisConfig small_config() {
  PsfBasisConfig c;
  c.num_modes = 15;
  c.samples = 300;
  c.components = 16;
  return c;
}

const PsfBasis& small_basis() {
  static const PsfBasis b = build_psf_basis(OpticalParams::table3(), small_config(), Seed{42});
  return b;
}

ZernikeCoeffField constant_field(int rows, int cols, int tile, const std::vector<double>& node) {
  ZernikeCoeffField f;
  f.rows = rows;
  f.cols = cols;
  f.tile_size = tile;
  f.num_modes = static_cast<int>(node.size()) + 1;
  for (int i = 0; i < rows * cols; ++i) f.data.insert(f.data.end(), node.begin(), node.end());
  return f;
}

}  // namespace

TEST(PsfBasis, OrthonormalKernels) {
  const PsfBasis& b = small_basis();
  ASSERT_EQ(b.components(), 16);
  for (int i = 0; i < b.components(); ++i)
    for (int j = i; j < b.components(); ++j) {
      double ip = 0;
      for (std::size_t k = 0; k < b.kernels[i].weights.size(); ++k) ip += b.kernels[i].weights[k] * b.kernels[j].weights[k];
      EXPECT_NEAR(ip, i == j ? 1.0 : 0.0, 1e-6) << i << "," << j;
    }
}

TEST(PsfBasis, ExplainedVarianceNonIncreasing) {
  const PsfBasis& b = small_basis();
  for (int k = 1; k < b.components(); ++k) EXPECT_LE(b.explained_variance[k], b.explained_variance[k - 1]);
  double total = 0;
  for (double v : b.explained_variance) total += v;
  EXPECT_LE(total, 1.0 + 1e-12);
}

TEST(PsfBasis, CompleteBasisReconstructsTrainingSet) {
  PsfBasisConfig c = small_config();
  c.samples = c.components = 24;
  const PsfBasis b = build_psf_basis(OpticalParams::table3(), c, Seed{7});
  const PsfSamples s = sample_psfs(OpticalParams::table3(), c, 24, Seed{7});
  double err = 0;
  for (const Kernel& k : s.psfs) err += rel_l2(reconstruct_psf(b, project_psf(b, k)), k);
  EXPECT_LT(err / 24, 1e-6);
}

TEST(PsfBasis, HeldOutReconstructionTable3) {
  const OpticalParams p = OpticalParams::table3();
  const PsfBasisConfig c;  // J = 36, N = 2000, K = 32
  const PsfBasis b = build_psf_basis(p, c, Seed{1});
  const PsfSamples held = sample_psfs(p, c, 200, Seed{2});
  double err = 0;
  for (const Kernel& k : held.psfs) err += rel_l2(reconstruct_psf(b, project_psf(b, k)), k);
  EXPECT_LE(err / 200, 0.05);
}

TEST(PsfBasis, ComponentCountValidated) {
  PsfBasisConfig c = small_config();
  c.samples = 10;
  c.components = 11;
  EXPECT_THROW(build_psf_basis(OpticalParams::table3(), c, Seed{1}), ParameterError);
}

TEST(PsfBasis, FileRoundTripAndCache) {
  const auto dir = testing_support::scratch_dir("p2sbasis");
  const PsfBasis& b = small_basis();
  write_psf_basis(dir / "b.bin", b);
  const PsfBasis r = read_psf_basis(dir / "b.bin");
  EXPECT_EQ(r.params_hash, b.params_hash);
  EXPECT_EQ(r.mean_psf.weights, b.mean_psf.weights);
  ASSERT_EQ(r.components(), b.components());
  for (int k = 0; k < b.components(); ++k) EXPECT_EQ(r.kernels[k].weights, b.kernels[k].weights);
  EXPECT_TRUE(r.projection == b.projection);
  EXPECT_TRUE(r.intercept == b.intercept);
  EXPECT_EQ(r.explained_variance, b.explained_variance);

  const PsfBasis c1 = build_psf_basis(OpticalParams::table3(), small_config(), Seed{42}, dir);
  const PsfBasis c2 = build_psf_basis(OpticalParams::table3(), small_config(), Seed{42}, dir);
  EXPECT_TRUE(c1.projection == b.projection);
  EXPECT_TRUE(c2.projection == b.projection);

  std::ofstream(dir / "junk.bin") << "not a basis";
  EXPECT_THROW(read_psf_basis(dir / "junk.bin"), IoError);
}

TEST(P2sTransform, AffineLinearity) {
  const PsfBasis& b = small_basis();
  std::mt19937_64 rng(3);
  std::vector<double> x(14), y(14), xy(14);
  for (int i = 0; i < 14; ++i) {
    x[i] = testing_support::uniform01(rng) - 0.5;
    y[i] = testing_support::uniform01(rng) - 0.5;
    xy[i] = x[i] + y[i];
  }
  const Eigen::VectorXd lhs = p2s_transform(xy, b);
  const Eigen::VectorXd rhs = p2s_transform(x, b) + p2s_transform(y, b) - b.intercept;
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_THROW(p2s_transform(std::vector<double>(13), b), ParameterError);
}

TEST(P2sTransform, ZeroCoefficientsGiveMeanPsf) {
  // The least-squares intercept lands on the training mean.
  const PsfBasis& b = small_basis();
  const Kernel rec = reconstruct_psf(b, p2s_transform(std::vector<double>(14, 0.0), b));
  EXPECT_LT(rel_l2(rec, b.mean_psf), 0.01);
}

TEST(P2sTransform, ZeroCoefficientsNearDiffractionPsfAtModerateTurbulence) {
  // D/r0 = 1: the mean PSF is still close to the aberration-free one.
  OpticalParams p = OpticalParams::table3();
  p.fried_parameter = p.aperture_diameter;
  PsfBasisConfig c;
  c.samples = 600;
  const PsfBasis b = build_psf_basis(p, c, Seed{5});
  const Kernel rec = reconstruct_psf(b, p2s_transform(std::vector<double>(35, 0.0), b));
  const Kernel diffraction = psf_from_phase(Image(64, 64), shared_basis(64, 36), p);
  EXPECT_LT(rel_l2(rec, diffraction), 0.10);
}

TEST(P2sTransform, TrainingPairWithinFittedResidual) {
  const PsfBasis& b = small_basis();
  const PsfSamples s = sample_psfs(OpticalParams::table3(), small_config(), 1, Seed{42});
  const Eigen::VectorXd a = s.coeffs.row(0).transpose();
  const Kernel rec = reconstruct_psf(b, p2s_transform({a.data(), 14}, b));
  const double err = rel_l2(rec, s.psfs[0]);
  RecordProperty("residual", std::to_string(err));
  EXPECT_GT(b.training_residual, 0.0);
  EXPECT_LE(err, 2.0 * b.training_residual);
}

TEST(P2sBlur, MeanOnlyBasisIsSingleConvolution) {
  PsfBasisConfig c = small_config();
  c.components = 0;
  const PsfBasis b = build_psf_basis(OpticalParams::table3(), c, Seed{9});
  const Image img = testing_support::synthetic_scene(64, 48, 1);
  const Image out = p2s_blur(img, b, {});
  EXPECT_LT(testing_support::max_abs_diff(out, convolve(img, b.mean_psf)), 1e-9);
}

TEST(P2sBlur, ConstantFieldMatchesSingleKernel) {
  const PsfBasis& b = small_basis();
  const PsfSamples s = sample_psfs(OpticalParams::table3(), small_config(), 1, Seed{77});
  std::vector<double> node(s.coeffs.cols());
  for (int i = 0; i < s.coeffs.cols(); ++i) node[i] = s.coeffs(0, i);
  const Image img = testing_support::synthetic_scene(80, 64, 2);
  const auto field = constant_field(5, 6, 32, node);
  const Image out = p2s_blur(img, b, p2s_weight_fields(field, b, 64, 80));
  const Kernel k = normalized(reconstruct_psf(b, p2s_transform(node, b)));
  EXPECT_LT(testing_support::max_abs_diff(out, convolve(img, k)), 1e-4);
}

TEST(P2sBlur, SmallInstanceMatchesBruteForceSpatiallyVaryingConvolution) {
  const PsfBasis& b = small_basis();
  const OpticalParams p = OpticalParams::table3();
  // 8x8 image, 2x2 nodes at spacing 7 (one tile per corner).
  const auto field = sample_coeff_field(8, 8, 14, p, {}, 15, Seed{11});
  ASSERT_EQ(field.rows * field.cols, 4);
  const Image img = testing_support::random_image(8, 8, 12);
  const auto weights = p2s_weight_fields(field, b, 8, 8);
  const Image fast = p2s_blur(img, b, weights);

  double worst = 0.0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      Eigen::VectorXd w(b.components());
      for (int k = 0; k < b.components(); ++k) w(k) = weights[k].at(x, y);
      const Kernel k = normalized(reconstruct_psf(b, w));
      double acc = 0.0;
      for (int dy = -k.radius; dy <= k.radius; ++dy)
        for (int dx = -k.radius; dx <= k.radius; ++dx)
          acc += k.at(dx, dy) * img.at(reflect_index(x - dx, 8), reflect_index(y - dy, 8));
      worst = std::max(worst, std::abs(acc - fast.at(x, y)));
    }
  EXPECT_LT(worst, 1e-4);
}

TEST(P2sBlur, ConstantImagePreserved) {
  const PsfBasis& b = small_basis();
  const Image img(64, 48, 0.37);
  const auto field = sample_coeff_field(48, 64, 32, OpticalParams::table3(), {}, 15, Seed{13});
  const Image out = p2s_blur(img, b, p2s_weight_fields(field, b, 48, 64));
  for (double v : out.pixels()) ASSERT_NEAR(v, 0.37, 1e-3);
}

TEST(SimulateP2s, HashMismatchIsConfigError) {
  OpticalParams other = OpticalParams::table3();
  other.fried_parameter = 0.02;
  EXPECT_THROW(simulate_p2s(Image(32, 32, 0.5), other, small_basis(), {}, Seed{1}), ConfigError);
}

TEST(SimulateP2s, DeterministicAcrossThreadCounts) {
  const Image img = testing_support::synthetic_scene(90, 70, 3);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const Image a = simulate_p2s(img, OpticalParams::table3(), small_basis(), {}, Seed{4});
  omp_set_num_threads(4);
  const Image b = simulate_p2s(img, OpticalParams::table3(), small_basis(), {}, Seed{4});
  omp_set_num_threads(saved);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, simulate_p2s(img, OpticalParams::table3(), small_basis(), {}, Seed{5}));
}

TEST(SimulateP2s, TinyImageFallsBackToDirectConvolution) {
  const Image img = testing_support::random_image(8, 8, 4);
  const Image out = simulate_p2s(img, OpticalParams::table3(), small_basis(), {}, Seed{4});
  for (double v : out.pixels()) EXPECT_TRUE(std::isfinite(v));
}
