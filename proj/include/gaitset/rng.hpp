#ifndef GAITSET_RNG_HPP_
#define GAITSET_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "gaitset/errors.hpp"

namespace gaitset {

// splitmix64, used to derive independent sub-seeds from one experiment seed.
inline uint64_t mix_seed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t hash_tag(std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t index = 0) {
  return mix_seed(seed ^ mix_seed(hash_tag(tag) + 0x9e3779b97f4a7c15ull * (index + 1)));
}

// Deterministic RNG. mt19937_64 output is pinned by the standard; the
// value-to-range transforms below are hand-rolled because std::*_distribution
// results are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform integer in [lo, hi], inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) throw ConfigError("Rng::uniform_int: empty range");
    uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
    // Fixed-point multiply keeps the mapping platform-independent.
    auto wide = static_cast<unsigned __int128>(next_u64()) * range;
    return lo + static_cast<int64_t>(wide >> 64);
  }

  // Uniform real in [0, 1).
  double uniform_real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n), order randomized. Requires k <= n.
  std::vector<int64_t> sample_distinct(int64_t n, int64_t k) {
    if (k > n) throw ConfigError("Rng::sample_distinct: k > n");
    std::vector<int64_t> pool(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    std::vector<int64_t> out;
    out.reserve(static_cast<size_t>(k));
    for (int64_t i = 0; i < k; ++i) {
      int64_t j = uniform_int(i, n - 1);
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
      out.push_back(pool[static_cast<size_t>(i)]);
    }
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gaitset

#endif  // GAITSET_RNG_HPP_
