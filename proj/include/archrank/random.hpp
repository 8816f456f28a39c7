#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace archrank {

using Rng = std::mt19937_64;

// splitmix64 finalizer; mixes a base seed with a stream tag so that
// components seeded from one run seed draw independent streams.
constexpr std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix_seed(std::uint64_t base, std::string_view tag) {
  return mix_seed(base, hash_string(tag));
}

// k distinct indices drawn uniformly from [0, n) by a partial Fisher-Yates
// shuffle; order of the result is the draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k && i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k < n ? k : n);
  return pool;
}

}  // namespace archrank
