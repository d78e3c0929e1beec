#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace tsp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent stream seed from a root seed and a purpose tag, so
// that adding a new consumer of randomness never perturbs existing streams.
inline std::uint64_t derive_seed(std::uint64_t root, const std::string& tag) {
  return splitmix64(root ^ fnv1a(tag));
}

inline std::mt19937_64 make_rng(std::uint64_t root, const std::string& tag) {
  return std::mt19937_64(derive_seed(root, tag));
}

}  // namespace tsp
