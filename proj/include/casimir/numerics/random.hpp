#pragma once

#include <cstdint>
#include <random>

namespace casimir::numerics {

/// SplitMix64 finalizer; used to derive independent, counter-keyed streams.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Generator for task `index` of stream `stream` under `seed`. The same triple
/// always yields the same sequence, independent of evaluation order.
inline std::mt19937_64 keyed_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return std::mt19937_64(mix64(mix64(seed ^ mix64(stream)) + index));
}

}  // namespace casimir::numerics
