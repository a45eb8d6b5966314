#include "lrne/rng.hpp"

#include <cmath>

namespace lrne {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += kGolden;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

NoiseStream::NoiseStream(std::uint64_t seed) : origin_{seed} {
  std::uint64_t s = seed;
  for (auto& word : state_) word = splitmix64_next(s);
}

std::uint64_t NoiseStream::next_u64() {
  auto& s = state_;
  const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
  const std::uint64_t t = s[1] << 17;
  s[2] ^= s[0];
  s[3] ^= s[1];
  s[1] ^= s[2];
  s[0] ^= s[3];
  s[2] ^= t;
  s[3] = rotl(s[3], 45);
  return result;
}

double NoiseStream::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double NoiseStream::standard_normal() {
  double u1 = next_unit();
  const double u2 = next_unit();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

std::uint64_t derive_seed(Seed root, std::span<const std::uint64_t> labels) {
  std::uint64_t h = root.value;
  for (const std::uint64_t label : labels) {
    // Fold the label in, then scramble with one SplitMix64 step. The odd
    // multiplier spreads small consecutive labels across the word.
    std::uint64_t s = h ^ (label * 0xD1342543DE82EF95ULL + kGolden);
    h = splitmix64_next(s);
  }
  return h;
}

NoiseStream derive_substream(Seed root, std::span<const std::uint64_t> labels) {
  return NoiseStream(derive_seed(root, labels));
}

}  // namespace lrne
