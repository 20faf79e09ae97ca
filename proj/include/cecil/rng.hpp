#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace cecil {

// Deterministic seed mixing so that sub-streams (per class, per epoch, ...)
// derived from one user seed do not collide. splitmix64 finalizer.
inline std::uint32_t mix_seed(std::uint32_t seed, std::uint32_t salt) {
  std::uint64_t z = (std::uint64_t(seed) << 32) | salt;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  z = z ^ (z >> 31);
  return static_cast<std::uint32_t>(z & 0xffffffffu);
}

// permutation_v1: the project's pinned shuffle. Fisher-Yates driven by
// std::mt19937 (whose output sequence the C++ standard fully specifies)
// with plain modulo index mapping, so the permutation for a given seed is
// identical on every platform. std::shuffle / uniform_int_distribution are
// implementation-defined and must not be used for anything persisted.
inline std::vector<int> permutation_v1(int n, std::uint32_t seed) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::mt19937 gen(seed);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(gen() % static_cast<std::uint32_t>(i + 1));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

/// Applies permutation_v1 in-place to an arbitrary vector.
template <typename T>
inline void shuffle_v1(std::vector<T>& items, std::uint32_t seed) {
  std::vector<int> p = permutation_v1(static_cast<int>(items.size()), seed);
  std::vector<T> out;
  out.reserve(items.size());
  for (int i : p) out.push_back(std::move(items[static_cast<std::size_t>(i)]));
  items = std::move(out);
}

}  // namespace cecil
