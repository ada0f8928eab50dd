#include "turbsim/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>

#include "turbsim/kernels.hpp"

namespace turbsim {

namespace {

// FFTW's planner is not re-entrant; execution with new-array functions is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

template <typename T>
struct FftwDeleter {
  void operator()(T* p) const { fftw_free(p); }
};

template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwDeleter<T>>;

template <typename T>
FftwBuffer<T> fftw_buffer(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * (n == 0 ? 1 : n)));
  if (p == nullptr) throw std::bad_alloc();
  return FftwBuffer<T>(p);
}

}  // namespace

void fft2d_forward(std::vector<std::complex<double>>& data, int rows, int cols) {
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  auto buf = fftw_buffer<fftw_complex>(n);
  std::memcpy(buf.get(), data.data(), n * sizeof(fftw_complex));
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_2d(rows, cols, buf.get(), buf.get(), FFTW_FORWARD, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  std::memcpy(static_cast<void*>(data.data()), buf.get(), n * sizeof(fftw_complex));
}

struct FftConvolver::Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
  ~Plans() {
    std::lock_guard lock(planner_mutex());
    if (forward) fftw_destroy_plan(forward);
    if (inverse) fftw_destroy_plan(inverse);
  }
};

FftConvolver::FftConvolver(const Image& image, int radius)
    : width_(image.width()), height_(image.height()), radius_(radius) {
  if (image.empty()) throw ParameterError("fft_convolve: empty image");
  if (radius < 0) throw ParameterError("fft_convolve: negative kernel radius");
  const int side = 2 * radius + 1;
  if (side > width_ || side > height_)
    throw ParameterError("fft_convolve: kernel (" + std::to_string(side) + " px) larger than image");

  padded_w_ = width_ + 2 * radius;
  padded_h_ = height_ + 2 * radius;
  const std::size_t real_n = static_cast<std::size_t>(padded_w_) * padded_h_;
  const std::size_t spec_n = static_cast<std::size_t>(padded_h_) * (padded_w_ / 2 + 1);

  auto real = fftw_buffer<double>(real_n);
  auto spec = fftw_buffer<fftw_complex>(spec_n);

  plans_ = std::make_unique<Plans>();
  {
    std::lock_guard lock(planner_mutex());
    plans_->forward = fftw_plan_dft_r2c_2d(padded_h_, padded_w_, real.get(), spec.get(), FFTW_ESTIMATE);
    plans_->inverse = fftw_plan_dft_c2r_2d(padded_h_, padded_w_, spec.get(), real.get(), FFTW_ESTIMATE);
  }

  for (int i = 0; i < padded_h_; ++i) {
    const double* src = image.row(reflect_index(i - radius, height_));
    double* dst = real.get() + static_cast<std::size_t>(i) * padded_w_;
    for (int j = 0; j < padded_w_; ++j) dst[j] = src[reflect_index(j - radius, width_)];
  }
  fftw_execute_dft_r2c(plans_->forward, real.get(), spec.get());
  image_spectrum_.resize(spec_n);
  std::memcpy(static_cast<void*>(image_spectrum_.data()), spec.get(), spec_n * sizeof(fftw_complex));
}

FftConvolver::~FftConvolver() = default;

Image FftConvolver::apply(const Kernel& kernel) const {
  if (kernel.radius != radius_) throw ParameterError("FftConvolver: kernel radius mismatch");
  const std::size_t real_n = static_cast<std::size_t>(padded_w_) * padded_h_;
  const std::size_t spec_n = image_spectrum_.size();
  auto real = fftw_buffer<double>(real_n);
  auto spec = fftw_buffer<fftw_complex>(spec_n);

  std::fill(real.get(), real.get() + real_n, 0.0);
  for (int dy = -radius_; dy <= radius_; ++dy) {
    const int i = (dy + padded_h_) % padded_h_;
    for (int dx = -radius_; dx <= radius_; ++dx) {
      const int j = (dx + padded_w_) % padded_w_;
      real[static_cast<std::size_t>(i) * padded_w_ + j] = kernel.at(dx, dy);
    }
  }
  fftw_execute_dft_r2c(plans_->forward, real.get(), spec.get());

  for (std::size_t k = 0; k < spec_n; ++k) {
    const std::complex<double> a(spec[k][0], spec[k][1]);
    const std::complex<double> prod = a * image_spectrum_[k];
    spec[k][0] = prod.real();
    spec[k][1] = prod.imag();
  }
  fftw_execute_dft_c2r(plans_->inverse, spec.get(), real.get());

  const double scale = 1.0 / static_cast<double>(real_n);
  Image out(width_, height_);
  for (int y = 0; y < height_; ++y) {
    const double* src = real.get() + static_cast<std::size_t>(y + radius_) * padded_w_ + radius_;
    double* dst = out.row(y);
    for (int x = 0; x < width_; ++x) dst[x] = src[x] * scale;
  }
  return out;
}

namespace {

struct SizedPlans {
  fftw_plan forward;
  fftw_plan inverse;
};

// Plans for small, repeated sizes are kept for the life of the process.
SizedPlans plans_for(int rows, int cols) {
  static std::map<std::pair<int, int>, SizedPlans> cache;
  std::lock_guard lock(planner_mutex());
  auto it = cache.find({rows, cols});
  if (it != cache.end()) return it->second;
  const std::size_t real_n = static_cast<std::size_t>(rows) * cols;
  auto real = fftw_buffer<double>(real_n);
  auto spec = fftw_buffer<fftw_complex>(static_cast<std::size_t>(rows) * (cols / 2 + 1));
  SizedPlans p{fftw_plan_dft_r2c_2d(rows, cols, real.get(), spec.get(), FFTW_ESTIMATE),
               fftw_plan_dft_c2r_2d(rows, cols, spec.get(), real.get(), FFTW_ESTIMATE)};
  cache.emplace(std::make_pair(rows, cols), p);
  return p;
}

}  // namespace

Image fft_convolve_valid(const Image& patch, const Kernel& kernel) {
  const int r = kernel.radius;
  const int w = patch.width(), h = patch.height();
  if (w <= 2 * r || h <= 2 * r) throw ParameterError("fft_convolve_valid: patch smaller than kernel apron");
  const SizedPlans plans = plans_for(h, w);
  const std::size_t real_n = static_cast<std::size_t>(w) * h;
  const std::size_t spec_n = static_cast<std::size_t>(h) * (w / 2 + 1);
  auto a = fftw_buffer<double>(real_n);
  auto b = fftw_buffer<double>(real_n);
  auto sa = fftw_buffer<fftw_complex>(spec_n);
  auto sb = fftw_buffer<fftw_complex>(spec_n);
  std::memcpy(a.get(), patch.pixels().data(), real_n * sizeof(double));
  std::fill(b.get(), b.get() + real_n, 0.0);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      b[static_cast<std::size_t>((dy + h) % h) * w + (dx + w) % w] = kernel.at(dx, dy);
  fftw_execute_dft_r2c(plans.forward, a.get(), sa.get());
  fftw_execute_dft_r2c(plans.forward, b.get(), sb.get());
  for (std::size_t k = 0; k < spec_n; ++k) {
    const double re = sa[k][0] * sb[k][0] - sa[k][1] * sb[k][1];
    const double im = sa[k][0] * sb[k][1] + sa[k][1] * sb[k][0];
    sa[k][0] = re;
    sa[k][1] = im;
  }
  fftw_execute_dft_c2r(plans.inverse, sa.get(), a.get());
  // Circular wrap-around only touches the outer r pixels.
  const double scale = 1.0 / static_cast<double>(real_n);
  Image out(w - 2 * r, h - 2 * r);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) out.at(x, y) = a[static_cast<std::size_t>(y + r) * w + x + r] * scale;
  return out;
}

Image fft_convolve(const Image& image, const Kernel& kernel) {
  return FftConvolver(image, kernel.radius).apply(kernel);
}

}  // namespace turbsim
