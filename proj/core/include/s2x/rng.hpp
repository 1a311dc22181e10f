#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "s2x/errors.hpp"

namespace s2x {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable seed derivation for independent sub-streams (per purpose, epoch, step).
inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

// Stream purposes used across the pipeline; keeps derived streams disjoint.
namespace seed_tag {
constexpr uint64_t init = 0x11;
constexpr uint64_t mask = 0x22;
constexpr uint64_t noise = 0x33;
constexpr uint64_t shuffle = 0x44;
constexpr uint64_t fewshot = 0x55;
constexpr uint64_t synth = 0x66;
constexpr uint64_t timestep = 0x77;
constexpr uint64_t head = 0x88;
constexpr uint64_t step = 0x99;
}  // namespace seed_tag

// Deterministic random stream. The mt19937_64 engine is fully specified by the
// standard; the value mappings below are hand-rolled because std::*_distribution
// output is implementation-defined and would break bit-reproducibility.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(splitmix64(seed)) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1) with 53-bit resolution
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; two uniforms per draw, no cached spare
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.28318530717958647692528676655900577 * u2);
  }

  // inclusive on both ends, unbiased via rejection
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (lo > hi) throw ParamError("uniform_int: empty range");
    uint64_t n = static_cast<uint64_t>(hi - lo) + 1;
    if (n == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return lo + static_cast<int64_t>(r % n);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from {0, ..., n-1}, ascending
  std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k);

 private:
  std::mt19937_64 eng_;
};

inline std::vector<int64_t> Rng::sample_without_replacement(int64_t n, int64_t k) {
  if (k < 0 || k > n) throw ParamError("sample_without_replacement: k out of range");
  std::vector<int64_t> pool(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
  // partial Fisher-Yates: the first k slots end up uniform without replacement
  for (int64_t i = 0; i < k; ++i) {
    int64_t j = uniform_int(i, n - 1);
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }
  pool.resize(static_cast<size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace s2x
