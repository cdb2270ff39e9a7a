#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace probsheet {

using Rng = std::mt19937_64;

// SplitMix64 finaliser; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream from a root seed and a path of stream ids,
// e.g. derive_stream(seed, {island}) or derive_stream(seed, {iteration, sample}).
// The result depends only on its inputs, so callers can hand streams to
// workers without sharing generator state.
inline Rng derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t id : path) h = mix64(h ^ mix64(id + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(mix64(h)),
                    static_cast<std::uint32_t>(mix64(h) >> 32)};
  return Rng(seq);
}

}  // namespace probsheet
