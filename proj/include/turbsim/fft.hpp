#pragma once

#include <complex>
#include <memory>
#include <vector>

#include "turbsim/image.hpp"

namespace turbsim {

/// In-place forward 2-D DFT (FFTW sign convention, exp(-i...)) of a
/// row-major rows x cols complex array.
void fft2d_forward(std::vector<std::complex<double>>& data, int rows, int cols);

/// Convolves one image with many kernels of a fixed radius. The reflect-padded
/// image spectrum is computed once; each call to apply() costs one forward and
/// one inverse real transform.
/// Valid-region convolution: the result is (w - 2r) x (h - 2r) and every output
/// pixel only reads pixels of `patch`. Used for tiles that were cut from a
/// larger image together with an r-pixel apron.
Image fft_convolve_valid(const Image& patch, const Kernel& kernel);

class FftConvolver {
public:
  FftConvolver(const Image& image, int radius);
  ~FftConvolver();
  FftConvolver(const FftConvolver&) = delete;
  FftConvolver& operator=(const FftConvolver&) = delete;

  /// Result equals convolve(image, kernel) up to transform rounding.
  Image apply(const Kernel& kernel) const;

  int radius() const { return radius_; }

private:
  struct Plans;
  int width_;
  int height_;
  int radius_;
  int padded_w_;
  int padded_h_;
  std::vector<std::complex<double>> image_spectrum_;
  std::unique_ptr<Plans> plans_;
};

}  // namespace turbsim
