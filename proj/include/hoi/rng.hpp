#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hoi {

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for a named stream under a root seed, optionally
/// keyed further by an index (scene id, step, ...).
inline std::mt19937_64 substream(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
  const std::uint64_t s = splitmix64(splitmix64(root ^ fnv1a(name)) + splitmix64(index + 0x51ed27ULL));
  return std::mt19937_64(s);
}

}  // namespace hoi
