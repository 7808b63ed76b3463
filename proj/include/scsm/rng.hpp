#pragma once

#include <cstdint>
#include <random>

namespace scsm {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; decorrelates nearby (seed, stream) pairs.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent generator for stream `stream` of the run seeded with `seed`.
// Streams are addressed by index, so results do not depend on the order in
// which workers consume them.
inline Rng substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t salt = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(mix64(seed)), static_cast<std::uint32_t>(mix64(seed) >> 32),
                    static_cast<std::uint32_t>(mix64(stream ^ 0x5851f42d4c957f2dULL)),
                    static_cast<std::uint32_t>(mix64(stream) >> 32), static_cast<std::uint32_t>(mix64(salt))};
  return Rng(seq);
}

// Seed drawn from the system entropy source, for runs without --seed.
inline std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

}  // namespace scsm
