#pragma once

#include <filesystem>

#include "turbsim/image.hpp"

namespace turbsim {

enum class BitDepth { k8 = 8, k16 = 16 };

/// Reads an 8- or 16-bit grayscale PNG or binary PGM (P5). Samples are divided
/// by 255 or 65535. Colour PNGs are converted to luminance on load.
Image read_image(const std::filesystem::path& path);

/// Writes PNG or PGM depending on the extension (.png, .pgm). Values are
/// clamped to [0,1] and rounded to the nearest code.
void write_image(const std::filesystem::path& path, const Image& image, BitDepth depth = BitDepth::k8);

}  // namespace turbsim
