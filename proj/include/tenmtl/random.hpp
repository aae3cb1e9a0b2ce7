#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace tenmtl {

/// Seeded stream with a fixed, documented mapping from engine output to
/// variates so other implementations can reproduce it:
///   uniform = (next >> 11) * 2^-53                      in [0, 1)
///   normal  = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)          two uniforms per draw
///   index n = floor(uniform * n)
/// The engine is std::mt19937_64 seeded with the 64-bit seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  std::size_t index(std::size_t n) {
    const auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

  /// First `k` entries of a partial Fisher-Yates shuffle of 0..n-1.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k && i < n; ++i) std::swap(idx[i], idx[i + index(n - i)]);
    idx.resize(std::min(k, n));
    return idx;
  }

  /// Full Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) { return sample_without_replacement(n, n); }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finaliser; used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(master) ^ a) ^ b);
}

}  // namespace tenmtl
