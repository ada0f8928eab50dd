#include "turbsim/p2s.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "turbsim/fft.hpp"
#include "turbsim/kernels.hpp"
#include "turbsim/noll_covariance.hpp"
#include "turbsim/random.hpp"

namespace turbsim {

namespace {

constexpr std::array<char, 8> kMagic{'T', 'S', 'I', 'M', 'P', '2', 'S', 'B'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kStreamSample = 0x7032;  // "p2"

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 0x100000001b3ULL;
  }
  void f64(double v) { bytes(&v, sizeof v); }
  void i32(std::int32_t v) { bytes(&v, sizeof v); }
};

void validate_config(const PsfBasisConfig& c) {
  if (c.num_modes < 4) throw ParameterError("psf basis: num_modes must be >= 4");
  if (c.samples < 1) throw ParameterError("psf basis: samples must be >= 1");
  if (c.components < 0 || c.components > c.samples)
    throw ParameterError("psf basis: need samples >= components >= 0 (got N=" + std::to_string(c.samples) +
                         ", K=" + std::to_string(c.components) + ")");
  if (c.components > c.psf.support * c.psf.support)
    throw ParameterError("psf basis: more components than kernel pixels");
}

PsfBasisConfig config_of(const PsfBasis& b) {
  PsfBasisConfig c;
  c.num_modes = b.num_modes;
  c.pupil_grid = b.pupil_grid;
  c.psf.support = b.support;
  c.psf.pad_factor = b.pad_factor;
  return c;
}

double frobenius(const Kernel& k) {
  double s = 0.0;
  for (double w : k.weights) s += w * w;
  return std::sqrt(s);
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated PSF basis file " + path.string());
  return v;
}

}  // namespace

std::uint64_t psf_params_hash(const OpticalParams& params, const PsfBasisConfig& config) {
  Fnv f;
  f.f64(params.aperture_diameter);
  f.f64(params.wavelength);
  f.f64(fried_parameter(params));
  f.f64(params.focal_length);
  f.f64(pixel_pitch(params));
  f.i32(config.num_modes);
  f.i32(config.pupil_grid);
  f.i32(config.psf.support);
  f.i32(config.psf.pad_factor);
  return f.h;
}

PsfSamples sample_psfs(const OpticalParams& params, const PsfBasisConfig& config, int count, Seed seed,
                       const std::optional<std::filesystem::path>& cache_dir) {
  params.validate();
  const int J = config.num_modes;
  const double d_over_r0 = params.aperture_diameter / fried_parameter(params);
  const Eigen::MatrixXd chol = cholesky_with_jitter(cached_noll_covariance(J, d_over_r0, cache_dir));
  const ZernikeBasis& basis = shared_basis(config.pupil_grid, J);

  PsfSamples out;
  out.coeffs.resize(count, J - 1);
  out.psfs.resize(count);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    const std::vector<double> z = normal_vector(J - 1, derive_seed(seed, kStreamSample, static_cast<std::uint64_t>(i)));
    const Eigen::VectorXd a = chol * Eigen::Map<const Eigen::VectorXd>(z.data(), J - 1);
    out.coeffs.row(i) = a.transpose();
    std::vector<double> c(J, 0.0);
    for (int j = 4; j <= J; ++j) c[j - 1] = a(j - 2);  // tilts go to the warp, not the PSF
    out.psfs[i] = psf_from_phase(wavefront(c, basis), basis, params, config.psf);
  }
  return out;
}

PsfBasis build_psf_basis(const OpticalParams& params, const PsfBasisConfig& config, Seed seed,
                         const std::optional<std::filesystem::path>& cache_dir) {
  validate_config(config);
  const std::uint64_t hash = psf_params_hash(params, config);

  std::optional<std::filesystem::path> file;
  if (cache_dir) {
    std::ostringstream name;
    name << "p2s_" << std::hex << hash << std::dec << "_N" << config.samples << "_K" << config.components << "_s"
         << seed.value << ".bin";
    file = *cache_dir / name.str();
    if (std::filesystem::exists(*file)) {
      try {
        PsfBasis cached = read_psf_basis(*file);
        if (cached.params_hash == hash && cached.components() == config.components &&
            cached.samples == config.samples)
          return cached;
      } catch (const IoError&) {
        // fall through and rebuild
      }
    }
  }

  const PsfSamples s = sample_psfs(params, config, config.samples, seed, cache_dir);
  const int n = config.samples;
  const int side = config.psf.support;
  const int p = side * side;
  const int K = config.components;

  PsfBasis b;
  b.num_modes = config.num_modes;
  b.support = side;
  b.samples = n;
  b.pupil_grid = config.pupil_grid;
  b.pad_factor = config.psf.pad_factor;
  b.params_hash = hash;

  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i) x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(s.psfs[i].weights.data(), p);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  b.mean_psf = Kernel::zeros(side / 2);
  Eigen::Map<Eigen::RowVectorXd>(b.mean_psf.weights.data(), p) = mean;

  Eigen::MatrixXd components(p, K);
  if (K > 0) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
    const Eigen::VectorXd sv = svd.singularValues();
    const double total = sv.squaredNorm();
    for (int k = 0; k < K; ++k) {
      Eigen::VectorXd v = svd.matrixV().col(k);
      Eigen::Index arg;
      v.cwiseAbs().maxCoeff(&arg);
      if (v(arg) < 0) v = -v;
      components.col(k) = v;
      b.explained_variance.push_back(total > 0 ? sv(k) * sv(k) / total : 0.0);
      Kernel kk = Kernel::zeros(side / 2);
      Eigen::Map<Eigen::VectorXd>(kk.weights.data(), p) = v;
      b.kernels.push_back(std::move(kk));
    }
  }

  // Affine least-squares map from coefficients to PCA weights.
  const int d = config.num_modes - 1;
  Eigen::MatrixXd a1(n, d + 1);
  a1.leftCols(d) = s.coeffs;
  a1.col(d).setOnes();
  const Eigen::MatrixXd w = x * components;
  const Eigen::MatrixXd sol = a1.colPivHouseholderQr().solve(w);
  b.projection = sol.topRows(d).transpose();
  b.intercept = sol.row(d).transpose();

  double resid = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd ai = s.coeffs.row(i).transpose();
    const Kernel rec = reconstruct_psf(b, p2s_transform({ai.data(), static_cast<std::size_t>(d)}, b));
    double num = 0.0;
    for (int k = 0; k < p; ++k) num += std::pow(rec.weights[k] - s.psfs[i].weights[k], 2);
    resid += std::sqrt(num) / frobenius(s.psfs[i]);
  }
  b.training_residual = resid / n;

  if (file) {
    std::filesystem::create_directories(file->parent_path());
    const auto tmp = file->string() + ".tmp";
    write_psf_basis(tmp, b);
    std::filesystem::rename(tmp, *file);
  }
  return b;
}

Eigen::VectorXd p2s_transform(std::span<const double> coeffs, const PsfBasis& basis) {
  if (static_cast<int>(coeffs.size()) != basis.dim())
    throw ParameterError("p2s_transform: expected " + std::to_string(basis.dim()) + " coefficients, got " +
                         std::to_string(coeffs.size()));
  if (basis.components() == 0) return Eigen::VectorXd();
  return basis.projection * Eigen::Map<const Eigen::VectorXd>(coeffs.data(), basis.dim()) + basis.intercept;
}

Kernel reconstruct_psf(const PsfBasis& basis, const Eigen::VectorXd& weights) {
  if (weights.size() != basis.components()) throw ParameterError("reconstruct_psf: weight count mismatch");
  Kernel out = basis.mean_psf;
  for (int k = 0; k < basis.components(); ++k)
    for (std::size_t i = 0; i < out.weights.size(); ++i) out.weights[i] += weights(k) * basis.kernels[k].weights[i];
  return out;
}

Eigen::VectorXd project_psf(const PsfBasis& basis, const Kernel& psf) {
  if (psf.radius != basis.mean_psf.radius) throw ParameterError("project_psf: support mismatch");
  Eigen::VectorXd w(basis.components());
  for (int k = 0; k < basis.components(); ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < psf.weights.size(); ++i)
      acc += (psf.weights[i] - basis.mean_psf.weights[i]) * basis.kernels[k].weights[i];
    w(k) = acc;
  }
  return w;
}

void write_psf_basis(const std::filesystem::path& path, const PsfBasis& b) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write PSF basis " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, b.components());
  put<std::uint32_t>(out, b.support);
  put<std::uint32_t>(out, b.num_modes);
  put<std::uint64_t>(out, b.params_hash);
  put<std::uint32_t>(out, b.samples);
  put<std::uint32_t>(out, b.pupil_grid);
  put<std::uint32_t>(out, b.pad_factor);
  auto doubles = [&](const double* p, std::size_t n) { out.write(reinterpret_cast<const char*>(p), n * sizeof(double)); };
  doubles(b.mean_psf.weights.data(), b.mean_psf.weights.size());
  for (const Kernel& k : b.kernels) doubles(k.weights.data(), k.weights.size());
  for (int r = 0; r < b.projection.rows(); ++r)
    for (int c = 0; c < b.projection.cols(); ++c) put<double>(out, b.projection(r, c));
  doubles(b.intercept.data(), b.intercept.size());
  doubles(b.explained_variance.data(), b.explained_variance.size());
  put<double>(out, b.training_residual);
  if (!out) throw IoError("failed writing PSF basis " + path.string());
}

PsfBasis read_psf_basis(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PSF basis " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw IoError("not a PSF basis file: " + path.string());
  if (get<std::uint32_t>(in, path) != kVersion) throw IoError("unsupported PSF basis version in " + path.string());
  PsfBasis b;
  const int K = static_cast<int>(get<std::uint32_t>(in, path));
  b.support = static_cast<int>(get<std::uint32_t>(in, path));
  b.num_modes = static_cast<int>(get<std::uint32_t>(in, path));
  b.params_hash = get<std::uint64_t>(in, path);
  b.samples = static_cast<int>(get<std::uint32_t>(in, path));
  b.pupil_grid = static_cast<int>(get<std::uint32_t>(in, path));
  b.pad_factor = static_cast<int>(get<std::uint32_t>(in, path));
  if (b.support < 1 || b.support % 2 == 0 || b.support > 1024 || b.num_modes < 2 || b.num_modes > 1000 || K < 0 ||
      K > b.support * b.support)
    throw IoError("corrupt PSF basis header in " + path.string());
  auto kernel = [&] {
    Kernel k = Kernel::zeros(b.support / 2);
    for (double& w : k.weights) w = get<double>(in, path);
    return k;
  };
  b.mean_psf = kernel();
  for (int k = 0; k < K; ++k) b.kernels.push_back(kernel());
  b.projection.resize(K, b.num_modes - 1);
  for (int r = 0; r < K; ++r)
    for (int c = 0; c < b.num_modes - 1; ++c) b.projection(r, c) = get<double>(in, path);
  b.intercept.resize(K);
  for (int k = 0; k < K; ++k) b.intercept(k) = get<double>(in, path);
  for (int k = 0; k < K; ++k) b.explained_variance.push_back(get<double>(in, path));
  b.training_residual = get<double>(in, path);
  return b;
}

std::vector<Image> p2s_weight_fields(const ZernikeCoeffField& field, const PsfBasis& basis, int height, int width) {
  if (field.dim() != basis.dim()) throw ParameterError("p2s_weight_fields: coefficient dimension mismatch");
  const int K = basis.components();
  std::vector<Image> nodes(K, Image(field.cols, field.rows));
  for (int r = 0; r < field.rows; ++r)
    for (int c = 0; c < field.cols; ++c) {
      const Eigen::VectorXd w = p2s_transform(field.node(r, c), basis);
      for (int k = 0; k < K; ++k) nodes[k].at(c, r) = w(k);
    }
  const double inv = 1.0 / field.spacing();
  std::vector<Image> out(K, Image(width, height));
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int k = 0; k < K; ++k) out[k].at(x, y) = bilinear_sample(nodes[k], x * inv, y * inv);
  return out;
}

Image p2s_blur(const Image& image, const PsfBasis& basis, const std::vector<Image>& weights) {
  if (image.empty()) throw ParameterError("p2s_blur: empty image");
  const int K = basis.components();
  if (static_cast<int>(weights.size()) != K) throw ParameterError("p2s_blur: weight field count mismatch");
  for (const Image& w : weights)
    if (!w.same_shape(image)) throw ParameterError("p2s_blur: weight field shape mismatch");

  // Invariant convolutions, one per kernel; index 0 is the mean PSF.
  const int radius = basis.mean_psf.radius;
  const bool use_fft = 2 * radius + 1 <= std::min(image.width(), image.height());
  std::optional<FftConvolver> fft;
  if (use_fft) fft.emplace(image, radius);
  std::vector<Image> conv(K + 1);
  std::vector<double> sums(K + 1, 0.0);
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k <= K; ++k) {
    const Kernel& kern = k == 0 ? basis.mean_psf : basis.kernels[k - 1];
    conv[k] = use_fft ? fft->apply(kern) : convolve(image, kern);
    double s = 0.0;
    for (double w : kern.weights) s += w;
    sums[k] = s;
  }

  Image out(image.width(), image.height());
  bool degenerate = false;
#pragma omp parallel for schedule(static) reduction(|| : degenerate)
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      double num = conv[0].at(x, y);
      double den = sums[0];
      for (int k = 0; k < K; ++k) {
        const double w = weights[k].at(x, y);
        num += w * conv[k + 1].at(x, y);
        den += w * sums[k + 1];
      }
      if (!(den > 1e-6)) degenerate = true;
      out.at(x, y) = num / den;
    }
  if (degenerate) throw NumericalError("p2s_blur: effective kernel sum collapsed to <= 1e-6");
  return out;
}

P2sSimResult simulate_p2s_detailed(const Image& image, const OpticalParams& params, const PsfBasis& basis,
                                   const SpatialCorrelationModel& corr, const P2sSimOptions& options, Seed seed) {
  if (image.empty()) throw ParameterError("simulate_p2s: empty image");
  if (psf_params_hash(params, config_of(basis)) != basis.params_hash)
    throw ConfigError("simulate_p2s: PSF basis was built for different optical parameters (hash mismatch)");
  const int w = image.width(), h = image.height();
  P2sSimResult r;
  r.coeffs = sample_coeff_field(h, w, 2 * options.grid_spacing, params, corr, basis.num_modes, seed, options.cache_dir);
  r.field = tilt_distortion_field(r.coeffs, params, h, w);
  const Image warped = warp(image, r.field);
  r.image = p2s_blur(warped, basis, p2s_weight_fields(r.coeffs, basis, h, w));
  return r;
}

Image simulate_p2s(const Image& image, const OpticalParams& params, const PsfBasis& basis,
                   const SpatialCorrelationModel& corr, Seed seed) {
  P2sSimOptions options;
  options.cache_dir = cache_dir_from_env();
  return simulate_p2s_detailed(image, params, basis, corr, options, seed).image;
}

}  // namespace turbsim
