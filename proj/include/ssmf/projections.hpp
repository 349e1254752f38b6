#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ssmf/error.hpp"

namespace ssmf {

/// Number of nonzeros allowed per vector (the l0 budget).
struct SparsityLevel {
  std::size_t s = 0;
};

/// Strictly increasing coordinate indices; the fixed support of a masked
/// simplex.
struct SupportSet {
  std::vector<std::size_t> indices;
};

namespace detail {

inline void require_finite(std::span<const double> y) {
  for (double v : y)
    if (!std::isfinite(v))
      fail(ErrorCode::InvalidInput, "projection input has a non-finite entry");
}

/// Sorting permutation: by value descending, ties by original index
/// ascending. The tie rule pins which support the sparse projection selects;
/// any choice attains the same distance but yields a different vector.
inline std::vector<std::size_t> sort_desc(std::span<const double> y) {
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (y[a] != y[b]) return y[a] > y[b];
    return a < b;
  });
  return order;
}

/// Threshold for the top-s entries of the sorted vector: the largest
/// j on [1, s] with y_(j) - (prefix_j - 1)/j > 0 gives rho, and
/// beta = (prefix_rho - 1)/rho.
inline double simplex_threshold(std::span<const double> y,
                                std::span<const std::size_t> order,
                                std::size_t s) {
  double prefix = 0.0;
  double beta = 0.0;
  for (std::size_t j = 0; j < s; ++j) {
    prefix += y[order[j]];
    const double candidate = (prefix - 1.0) / static_cast<double>(j + 1);
    if (y[order[j]] - candidate > 0.0) beta = candidate;
  }
  return beta;
}

/// Clamped thresholding leaves the sum at 1 only up to cancellation in
/// y_j - beta, which for large-magnitude inputs can exceed the 1e-12 row-sum
/// budget; one exact rescale restores it without moving the support.
inline void renormalize(std::vector<double>& z) {
  double sum = 0.0;
  for (double v : z) sum += v;
  if (sum > 0.0 && sum != 1.0)
    for (double& v : z) v /= sum;
}

}  // namespace detail

/// Euclidean projection onto the probability simplex {z >= 0, sum z = 1}.
inline std::vector<double> project_simplex(std::span<const double> y) {
  if (y.empty())
    fail(ErrorCode::InvalidDimensions, "project_simplex: empty vector");
  detail::require_finite(y);
  const auto order = detail::sort_desc(y);
  const double beta = detail::simplex_threshold(y, order, y.size());
  std::vector<double> z(y.size());
  for (std::size_t j = 0; j < y.size(); ++j)
    z[j] = std::max(y[j] - beta, 0.0);
  detail::renormalize(z);
  return z;
}

/// Euclidean projection onto the intersection of the simplex with the l0
/// ball of radius s: keep the s largest entries (ties broken toward lower
/// indices), project them onto the simplex, zero the rest. Off-support
/// coordinates are written as exact zeros so l0 counts stay exact.
inline std::vector<double> project_sparse_simplex(std::span<const double> y,
                                                  SparsityLevel level) {
  const std::size_t n = y.size();
  const std::size_t s = level.s;
  if (n == 0)
    fail(ErrorCode::InvalidDimensions, "project_sparse_simplex: empty vector");
  if (s < 1 || s > n)
    fail(ErrorCode::InvalidSparsity,
         "sparsity level " + std::to_string(s) + " out of range [1, " +
             std::to_string(n) + "]");
  detail::require_finite(y);
  const auto order = detail::sort_desc(y);
  const double beta = detail::simplex_threshold(y, order, s);
  std::vector<double> z(n, 0.0);
  for (std::size_t j = 0; j < s; ++j)
    z[order[j]] = std::max(y[order[j]] - beta, 0.0);
  detail::renormalize(z);
  return z;
}

/// Projection onto the masked simplex: zero off the given support, the
/// on-support part projected onto the simplex of that dimension.
inline std::vector<double> project_masked_simplex(std::span<const double> y,
                                                  const SupportSet& support) {
  const std::size_t n = y.size();
  if (support.indices.empty() || support.indices.size() > n)
    fail(ErrorCode::InvalidSupport, "support size out of range");
  for (std::size_t k = 0; k < support.indices.size(); ++k) {
    if (support.indices[k] >= n)
      fail(ErrorCode::InvalidSupport, "support index out of range");
    if (k > 0 && support.indices[k] <= support.indices[k - 1])
      fail(ErrorCode::InvalidSupport, "support indices not strictly increasing");
  }
  detail::require_finite(y);
  std::vector<double> sub(support.indices.size());
  for (std::size_t k = 0; k < sub.size(); ++k) sub[k] = y[support.indices[k]];
  const auto proj = project_simplex(sub);
  std::vector<double> z(n, 0.0);
  for (std::size_t k = 0; k < proj.size(); ++k) z[support.indices[k]] = proj[k];
  return z;
}

/// Test oracle: the sparse projection by definition. Enumerates every
/// s-subset, projects onto its masked simplex, and returns the closest
/// result; ties go to the lexicographically smallest support. Exponential,
/// guarded to n <= 20.
inline std::vector<double> brute_force_sparse_projection(
    std::span<const double> y, SparsityLevel level) {
  const std::size_t n = y.size();
  const std::size_t s = level.s;
  if (n > 20)
    fail(ErrorCode::OracleTooLarge,
         "brute_force_sparse_projection: n > 20 not supported");
  if (n == 0)
    fail(ErrorCode::InvalidDimensions, "brute_force_sparse_projection: empty");
  if (s < 1 || s > n)
    fail(ErrorCode::InvalidSparsity, "sparsity level out of range");
  detail::require_finite(y);

  std::vector<std::size_t> support(s);
  std::iota(support.begin(), support.end(), 0);
  std::vector<double> best;
  double best_dist = 0.0;

  const auto consider = [&](const std::vector<std::size_t>& sup) {
    auto z = project_masked_simplex(y, SupportSet{sup});
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += (z[j] - y[j]) * (z[j] - y[j]);
    if (best.empty() || d < best_dist) {
      best = std::move(z);
      best_dist = d;
    }
  };

  // Lexicographic enumeration of all s-subsets of [0, n).
  while (true) {
    consider(support);
    std::size_t k = s;
    while (k > 0 && support[k - 1] == n - s + (k - 1)) --k;
    if (k == 0) break;
    ++support[k - 1];
    for (std::size_t j = k; j < s; ++j) support[j] = support[j - 1] + 1;
  }
  return best;
}

}  // namespace ssmf
