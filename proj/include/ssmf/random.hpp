#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "ssmf/dense.hpp"

namespace ssmf {

/// Seedable uniform random source. The generator is pinned to mt19937_64
/// with a 53-bit double mapping so that a given seed yields the same stream
/// on every platform; experiment tables depend on that.
class RandomSource {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64/u53";

  explicit RandomSource(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) built from the top 53 bits.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound) by rejection; exact, no modulo bias.
  std::uint64_t next_index(std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  /// Child source for an independent stream; used to give each trial of a
  /// batch experiment its own generator regardless of execution order.
  RandomSource split(std::uint64_t stream) const {
    return RandomSource(splitmix64(seed_ + 0x9E3779B97F4A7C15ULL * (stream + 1)));
  }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

inline DenseMatrix rand_uniform_matrix(RandomSource& src, std::size_t rows,
                                       std::size_t cols) {
  DenseMatrix a(rows, cols);
  for (double& v : a.data()) v = src.next_double();
  return a;
}

}  // namespace ssmf
