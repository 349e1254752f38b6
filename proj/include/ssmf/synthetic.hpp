#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "ssmf/dense.hpp"
#include "ssmf/error.hpp"
#include "ssmf/random.hpp"

namespace ssmf {

/// Planted-instance recipe: V = W_true * H_true with row-stochastic factors
/// and exactly ts-sparse H rows.
struct SyntheticSpec {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t r = 0;
  std::size_t ts = 0;
  std::uint64_t seed = 0;
};

struct SyntheticInstance {
  DenseMatrix V;
  DenseMatrix W_true;
  DenseMatrix H_true;
};

namespace detail {

/// Uniform random subset of size k from [0, n), returned sorted. Partial
/// Fisher-Yates over an index pool; integer draws are rejection-sampled so
/// the selection is identical on every platform.
inline std::vector<std::size_t> sample_support(RandomSource& src,
                                               std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(src.next_index(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace detail

namespace detail {

/// Scale a nonnegative row to unit sum. Unlike a Euclidean simplex
/// projection this keeps every positive entry positive: projecting uniform
/// draws would clip all but the largest ~sqrt(2 k) of k entries, collapsing
/// the planted sparsity the recovery experiments sweep over.
inline void normalize_row(double* row, std::size_t n) {
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) sum += row[j];
  if (sum <= 0.0)
    fail(ErrorCode::InvalidSpec, "gen_synthetic: degenerate zero row");
  for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
}

}  // namespace detail

/// Builds V = W_true * H_true: W_true rows are uniform draws scaled to unit
/// sum; each H_true row gets a uniformly chosen support of size ts filled
/// with uniform values and scaled to unit sum, so the row is stochastic with
/// exactly the drawn support.
inline SyntheticInstance gen_synthetic(const SyntheticSpec& spec) {
  if (spec.m == 0 || spec.n == 0 || spec.r == 0 ||
      spec.r >= std::min(spec.m, spec.n))
    fail(ErrorCode::InvalidSpec, "gen_synthetic: need 1 <= r < min(m, n)");
  if (spec.ts < 1 || spec.ts > spec.n)
    fail(ErrorCode::InvalidSpec, "gen_synthetic: ts out of [1, n]");

  RandomSource src(spec.seed);
  DenseMatrix w = rand_uniform_matrix(src, spec.m, spec.r);
  for (std::size_t i = 0; i < spec.m; ++i)
    detail::normalize_row(w.row_ptr(i), spec.r);

  DenseMatrix h(spec.r, spec.n, 0.0);
  for (std::size_t t = 0; t < spec.r; ++t) {
    const auto support = detail::sample_support(src, spec.n, spec.ts);
    double* row = h.row_ptr(t);
    for (std::size_t idx : support) row[idx] = src.next_double();
    detail::normalize_row(row, spec.n);
  }

  SyntheticInstance out;
  out.V = matmul(w, h);
  out.W_true = std::move(w);
  out.H_true = std::move(h);
  for (std::size_t i = 0; i < spec.m; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < spec.n; ++j) sum += out.V(i, j);
    if (std::abs(sum - 1.0) > 1e-12)
      fail(ErrorCode::InvalidSpec, "gen_synthetic: product row drifted off the simplex");
  }
  return out;
}

}  // namespace ssmf
