#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>

namespace lrne {

/// A 64-bit seed value. Any value is valid, including zero.
struct Seed {
  std::uint64_t value = 0;
};

/// One SplitMix64 step: advances `state` and returns the next output.
/// Reference algorithm by Sebastiano Vigna; used both for seeding and for
/// label mixing so that every derived quantity is defined in terms of a
/// single, trivially portable primitive.
std::uint64_t splitmix64_next(std::uint64_t& state);

/// Deterministic, platform-independent random stream (xoshiro256**,
/// seeded via SplitMix64). A stream is single-owner: two threads must not
/// draw from the same instance, but independent streams never interfere.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) using the top 53 bits of one draw.
  double next_unit();

  /// Standard normal via the Box-Muller transform. Consumes exactly two
  /// u64 draws per call and returns the cosine branch, so the value at any
  /// stream position is a pure function of the seed. A zero uniform is
  /// clamped to 2^-53 to keep the logarithm finite.
  double standard_normal();

  Seed origin() const { return origin_; }

 private:
  std::array<std::uint64_t, 4> state_;
  Seed origin_;
};

// Substream labeling. The (purpose, index, layer, tensor) label order is a
// wire-level contract: changing it changes every phenotype. Labels used by
// the engine:
//   {kLabelInit,   0,       layer, tensor}  tensor initialization, rooted at
//                                           the genome's init seed
//   {kLabelMutate, record,  layer, tensor}  mutation noise, rooted at the
//                                           record's own seed
//   {kLabelPopulation, i}                   init seed of generation-0 member i
//   {kLabelEnv, generation, stage, episode} environment seeds
//   {kLabelReproduce, generation}           parent choice + child seeds
//   {kLabelTrack}                           track layout inside an episode
inline constexpr std::uint64_t kLabelInit = 1;
inline constexpr std::uint64_t kLabelMutate = 2;
inline constexpr std::uint64_t kLabelPopulation = 3;
inline constexpr std::uint64_t kLabelEnv = 4;
inline constexpr std::uint64_t kLabelReproduce = 5;
inline constexpr std::uint64_t kLabelTrack = 6;

/// Derives a stream from a root seed and a label path. Each label is folded
/// into the running 64-bit value with one SplitMix64 step; an empty label
/// list yields the stream seeded directly by the root. Distinct label paths
/// give statistically independent streams.
NoiseStream derive_substream(Seed root, std::span<const std::uint64_t> labels);

/// Convenience: collapse a label path to the 64-bit value that would seed
/// the derived stream. Used where a Seed (not a stream) is needed.
std::uint64_t derive_seed(Seed root, std::span<const std::uint64_t> labels);

inline NoiseStream derive_substream(Seed root, std::initializer_list<std::uint64_t> labels) {
  return derive_substream(root, std::span<const std::uint64_t>(labels.begin(), labels.size()));
}

inline std::uint64_t derive_seed(Seed root, std::initializer_list<std::uint64_t> labels) {
  return derive_seed(root, std::span<const std::uint64_t>(labels.begin(), labels.size()));
}

}  // namespace lrne
