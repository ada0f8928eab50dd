#include "turbsim/random.hpp"

#include <cmath>
#include <numbers>

namespace turbsim {

namespace {

// 53 significant bits mapped to the open interval (0,1).
double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

void fill_normals(std::span<double> out, Seed seed) {
  const Philox4x32 gen(seed.value);
  const std::int64_t pairs = static_cast<std::int64_t>((out.size() + 1) / 2);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < pairs; ++p) {
    const auto block = gen(static_cast<std::uint64_t>(p));
    const double u1 = to_unit_open(block[0], block[1]);
    const double u2 = to_unit_open(block[2], block[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    const std::size_t k = static_cast<std::size_t>(p) * 2;
    out[k] = r * std::cos(phi);
    if (k + 1 < out.size()) out[k + 1] = r * std::sin(phi);
  }
}

}  // namespace

std::array<double, 2> normal_pair(Seed seed, std::uint64_t index) {
  const auto block = Philox4x32(seed.value)(index);
  const double u1 = to_unit_open(block[0], block[1]);
  const double u2 = to_unit_open(block[2], block[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(phi), r * std::sin(phi)};
}

Image white_noise_field(int height, int width, Seed seed) {
  if (height < 1 || width < 1) throw ParameterError("white_noise_field: dimensions must be >= 1");
  Image field(width, height);
  fill_normals(field.pixels(), seed);
  return field;
}

std::vector<double> normal_vector(std::size_t n, Seed seed) {
  std::vector<double> v(n);
  fill_normals(v, seed);
  return v;
}

}  // namespace turbsim
