#include "turbsim/reference.hpp"

#include "turbsim/kernels.hpp"
#include "turbsim/random.hpp"

namespace turbsim::reference {

Image convolve(const Image& image, const Kernel& kernel) {
  const int w = image.width();
  const int h = image.height();
  const int r = kernel.radius;
  Image out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          acc += kernel.at(dx, dy) * image.at(reflect_index(x - dx, w), reflect_index(y - dy, h));
      out.at(x, y) = acc;
    }
  return out;
}

Image warp(const Image& image, const DistortionField& field) {
  Image out(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      out.at(x, y) = bilinear_sample(image, x + field.du.at(x, y), y + field.dv.at(x, y));
  return out;
}

Image white_noise_field(int height, int width, Seed seed) {
  Image out(width, height);
  auto px = out.pixels();
  for (std::size_t k = 0; k < px.size(); k += 2) {
    const auto pair = normal_pair(seed, k / 2);
    px[k] = pair[0];
    if (k + 1 < px.size()) px[k + 1] = pair[1];
  }
  return out;
}

}  // namespace turbsim::reference
