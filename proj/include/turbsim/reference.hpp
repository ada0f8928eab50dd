#pragma once

#include "turbsim/image.hpp"

// Straightforward single-threaded implementations kept as test references
// and benchmark baselines. Not used on any production path.

namespace turbsim::reference {

Image convolve(const Image& image, const Kernel& kernel);
Image warp(const Image& image, const DistortionField& field);
Image white_noise_field(int height, int width, Seed seed);

}  // namespace turbsim::reference
