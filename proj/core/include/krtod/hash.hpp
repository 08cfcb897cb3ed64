#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace krtod {

// splitmix64 finalizer; a stable, platform-independent mixer used for feature
// hashing and seed derivation.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  return mix64(seed ^ mix64(value));
}

constexpr std::uint64_t hash_values(std::uint64_t seed, std::initializer_list<std::uint64_t> values) {
  std::uint64_t h = seed;
  for (auto v : values) h = hash_combine(h, v);
  return h;
}

// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Seed for an independent RNG stream identified by (base seed, label, ids...).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label,
                                 std::initializer_list<std::uint64_t> ids = {}) {
  return hash_values(hash_combine(base, fnv1a(label)), ids);
}

}  // namespace krtod
