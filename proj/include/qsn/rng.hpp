#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qsn {

using RandomEngine = std::mt19937_64;

/// SplitMix64 finalizer; good avalanche for turning structured keys into seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a, 64 bit. Stable across platforms, unlike std::hash.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derive the seed of a named, indexed stream from a root seed.
///
/// Every consumer of randomness (data generation, weight init, minibatch
/// sampling, per-head resampling) gets its own stream so that adding draws
/// to one never shifts another.
constexpr std::uint64_t stream_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0) noexcept {
  return mix64(mix64(root ^ fnv1a64(name)) + mix64(index + 0x632be59bd9b4e019ULL));
}

inline RandomEngine make_stream(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
  return RandomEngine(stream_seed(root, name, index));
}

} // namespace qsn
