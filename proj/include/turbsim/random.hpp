#pragma once

#include <array>
#include <cstdint>

#include "turbsim/image.hpp"

namespace turbsim {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Output is a
// pure function of (key, counter), so any element of a random field can be
// produced independently of thread scheduling. The algorithm and its
// constants are pinned; changing them invalidates golden images.
class Philox4x32 {
public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t key)
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

  Block operator()(std::uint64_t counter_lo, std::uint64_t counter_hi = 0) const {
    Block ctr{static_cast<std::uint32_t>(counter_lo), static_cast<std::uint32_t>(counter_lo >> 32),
              static_cast<std::uint32_t>(counter_hi), static_cast<std::uint32_t>(counter_hi >> 32)};
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      ctr = single_round(ctr, key);
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }

private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static Block single_round(const Block& c, const std::array<std::uint32_t, 2>& k) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
    return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
            static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
  }

  std::array<std::uint32_t, 2> key_;
};

/// SplitMix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Stable derivation of a child seed from a parent and a stream tag.
constexpr Seed derive_seed(Seed parent, std::uint64_t tag) {
  return Seed{mix64(mix64(parent.value) ^ mix64(tag + 0x632BE59BD9B4E019ull))};
}

constexpr Seed derive_seed(Seed parent, std::uint64_t tag_a, std::uint64_t tag_b) {
  return derive_seed(derive_seed(parent, tag_a), tag_b);
}

/// Pair of independent standard normals for counter `index` under `seed`
/// (Box-Muller on two 53-bit uniforms in (0,1)).
std::array<double, 2> normal_pair(Seed seed, std::uint64_t index);

/// i.i.d. N(0,1) field, deterministic in `seed`. Element k is taken from
/// normal_pair(seed, k/2)[k%2].
Image white_noise_field(int height, int width, Seed seed);

/// Vector of n i.i.d. N(0,1) samples with the same element layout.
std::vector<double> normal_vector(std::size_t n, Seed seed);

}  // namespace turbsim
