#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ipath {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stable seed derivation: depends only on the values, never on call order,
/// so any derived stream (one trace, one epoch shuffle) is reproducible alone.
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t p : parts) h = mix64(h ^ mix64(p));
  return h;
}

inline Rng make_rng(std::initializer_list<std::uint64_t> parts) { return Rng(derive_seed(parts)); }

}  // namespace ipath
