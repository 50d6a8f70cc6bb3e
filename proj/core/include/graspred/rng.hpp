#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace graspred {

/// splitmix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic seed derivation: derive_seed(seed, a, b, ...) gives an
/// independent stream per (a, b, ...) tuple. Parallel code derives one
/// stream per work item so results never depend on thread count.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = mix64(seed);
  for (std::uint64_t p : parts) s = mix64(s ^ mix64(p));
  return s;
}

template <class... Ts>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Ts... parts) {
  return derive_seed(seed, {static_cast<std::uint64_t>(parts)...});
}

/// FNV-1a 64-bit over the bytes of a string; stable across platforms, used to
/// derive per-label streams (e.g. posture variation per object name).
constexpr std::uint64_t hash_str(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace graspred
