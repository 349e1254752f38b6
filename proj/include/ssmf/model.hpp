#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssmf/dense.hpp"
#include "ssmf/error.hpp"
#include "ssmf/projections.hpp"
#include "ssmf/random.hpp"

namespace ssmf {

/// Immutable problem instance: a row-stochastic data matrix V to be factored
/// as W*H with row-stochastic W (m x r), row-stochastic H (r x n), and at
/// most s nonzeros per H row. delta1/delta2 gate the per-row sufficient
/// decrease tests; c caps the spectral trial step for W rows.
struct SsmfProblem {
  DenseMatrix V;
  std::size_t r = 0;
  SparsityLevel s;
  double delta1 = 1e-5;
  double delta2 = 1e-6;
  double c = 10.0;

  std::size_t m() const noexcept { return V.rows(); }
  std::size_t n() const noexcept { return V.cols(); }
};

/// Validates and normalizes a data matrix into a problem instance. Rows must
/// be nonnegative and sum to 1 within 1e-6; rows within that tolerance are
/// renormalized exactly (real data carries rounding), anything worse is
/// rejected.
inline SsmfProblem make_problem(DenseMatrix v, std::size_t r, SparsityLevel s,
                                double delta1 = 1e-5, double delta2 = 1e-6,
                                double c = 10.0) {
  const std::size_t m = v.rows();
  const std::size_t n = v.cols();
  if (m == 0 || n == 0) fail(ErrorCode::InvalidDimensions, "V is empty");
  if (!v.all_finite()) fail(ErrorCode::InvalidInput, "V has a non-finite entry");
  if (r < 1 || r >= std::min(m, n))
    fail(ErrorCode::InvalidDimensions,
         "rank r = " + std::to_string(r) + " must satisfy 1 <= r < min(m, n) = " +
             std::to_string(std::min(m, n)));
  if (s.s < 1 || s.s > n)
    fail(ErrorCode::InvalidSparsity, "sparsity s out of range [1, n]");
  if (delta1 <= 0 || delta2 <= 0 || c <= 0)
    fail(ErrorCode::InvalidInput, "delta1, delta2, c must be positive");
  for (std::size_t i = 0; i < m; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (v(i, j) < 0.0)
        fail(ErrorCode::InvalidInput,
             "V row " + std::to_string(i + 1) + " has a negative entry");
      sum += v(i, j);
    }
    if (std::abs(sum - 1.0) > 1e-6)
      fail(ErrorCode::InvalidInput,
           "V row " + std::to_string(i + 1) + " sums to " + std::to_string(sum) +
               ", not 1 (tolerance 1e-6)");
    if (sum != 1.0)
      for (std::size_t j = 0; j < n; ++j) v(i, j) /= sum;
  }
  return SsmfProblem{std::move(v), r, s, delta1, delta2, c};
}

/// Current iterate (W, H) together with the cached residual R = V - W*H.
/// R is the single source of truth for the objective, both partial
/// gradients, and the per-row least-squares targets; row updates maintain it
/// incrementally.
struct FactorPair {
  DenseMatrix W;  // m x r
  DenseMatrix H;  // r x n
  DenseMatrix R;  // m x n
  SparsityLevel s;
};

struct FeasibilityReport {
  double max_row_sum_err = 0.0;
  double min_entry = 0.0;
  std::size_t max_l0 = 0;
};

namespace detail {

inline std::size_t count_nonzeros(std::span<const double> v) {
  std::size_t c = 0;
  for (double x : v)
    if (x != 0.0) ++c;
  return c;
}

inline void require_simplex_row(std::span<const double> v, const char* what) {
  double sum = 0.0;
  for (double x : v) {
    if (!(x >= 0.0))
      fail(ErrorCode::InvalidInput, std::string(what) + ": negative entry");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    fail(ErrorCode::InvalidInput, std::string(what) + ": row sum off simplex");
}

/// Shared kernel for W-row replacement: given ht_delta = H^T (new_w - w_old),
/// the residual row moves by -ht_delta.
inline void apply_w_row_with_delta(FactorPair& x, std::size_t i,
                                   std::span<const double> new_w,
                                   std::span<const double> ht_delta) {
  double* w_row = x.W.row_ptr(i);
  for (std::size_t t = 0; t < x.W.cols(); ++t) w_row[t] = new_w[t];
  double* r_row = x.R.row_ptr(i);
  for (std::size_t j = 0; j < x.R.cols(); ++j) r_row[j] -= ht_delta[j];
}

/// Shared kernel for H-row replacement. delta = h_old - new_h is sparse
/// (at most 2s nonzeros), so the rank-one residual correction touches only
/// those columns.
inline void apply_h_row_with_delta(
    FactorPair& x, std::size_t t, std::span<const double> new_h,
    const std::vector<std::pair<std::size_t, double>>& delta_nz) {
  const std::size_t m = x.R.rows();
  for (std::size_t i = 0; i < m; ++i) {
    const double wit = x.W(i, t);
    if (wit == 0.0) continue;
    double* r_row = x.R.row_ptr(i);
    for (const auto& [j, d] : delta_nz) r_row[j] += wit * d;
  }
  double* h_row = x.H.row_ptr(t);
  for (std::size_t j = 0; j < x.H.cols(); ++j) h_row[j] = new_h[j];
}

}  // namespace detail

/// Rebuilds the residual cache from scratch with one full multiply.
inline void rebuild_residual(const SsmfProblem& p, FactorPair& x) {
  x.R = p.V;
  const std::size_t m = p.m(), n = p.n(), r = p.r;
  for (std::size_t i = 0; i < m; ++i) {
    double* r_row = x.R.row_ptr(i);
    const double* w_row = x.W.row_ptr(i);
    for (std::size_t t = 0; t < r; ++t) {
      const double wit = w_row[t];
      if (wit == 0.0) continue;
      const double* h_row = x.H.row_ptr(t);
      for (std::size_t j = 0; j < n; ++j) r_row[j] -= wit * h_row[j];
    }
  }
}

inline FactorPair make_factor_pair(const SsmfProblem& p, DenseMatrix w,
                                   DenseMatrix h) {
  if (w.rows() != p.m() || w.cols() != p.r || h.rows() != p.r ||
      h.cols() != p.n())
    fail(ErrorCode::InvalidDimensions, "factor dimensions do not match problem");
  FactorPair x{std::move(w), std::move(h), DenseMatrix(), p.s};
  rebuild_residual(p, x);
  return x;
}

/// f(W, H) = 0.5 * ||V - W H||_F^2, read off the cached residual.
inline double objective_f(const SsmfProblem& p, const FactorPair& x) {
  if (x.W.rows() != p.m() || x.H.cols() != p.n())
    fail(ErrorCode::InvalidDimensions, "factor pair does not match problem");
  double sum = 0.0;
  for (double v : x.R.data()) sum += v * v;
  return 0.5 * sum;
}

inline FeasibilityReport check_feasibility(const SsmfProblem& p,
                                           const FactorPair& x) {
  FeasibilityReport rep;
  rep.min_entry = std::numeric_limits<double>::infinity();
  const auto scan_rows = [&rep](const DenseMatrix& a) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < a.cols(); ++j) {
        const double v = a(i, j);
        sum += v;
        rep.min_entry = std::min(rep.min_entry, v);
      }
      rep.max_row_sum_err = std::max(rep.max_row_sum_err, std::abs(sum - 1.0));
    }
  };
  scan_rows(x.W);
  scan_rows(x.H);
  for (std::size_t t = 0; t < x.H.rows(); ++t)
    rep.max_l0 = std::max(rep.max_l0, detail::count_nonzeros(x.H.row(t)));
  (void)p;
  return rep;
}

/// F(W, H) = f + indicator terms. Returns the objective when the pair is
/// feasible (simplex rows within 1e-12, nonnegative entries, exact l0
/// within s) and nothing when any indicator is infinite.
inline std::optional<double> extended_objective_F(const SsmfProblem& p,
                                                  const FactorPair& x) {
  const FeasibilityReport rep = check_feasibility(p, x);
  if (rep.max_row_sum_err > 1e-12 || rep.min_entry < 0.0 ||
      rep.max_l0 > p.s.s)
    return std::nullopt;
  return objective_f(p, x);
}

/// Partial gradient in the i-th W row: H (H^T w_i - v_i) = -H R(i,:)^T.
inline std::vector<double> grad_w_row(const SsmfProblem& p,
                                      const FactorPair& x, std::size_t i) {
  if (i >= p.m()) fail(ErrorCode::InvalidIndex, "grad_w_row: row out of range");
  const std::size_t r = p.r, n = p.n();
  std::vector<double> g(r, 0.0);
  const double* r_row = x.R.row_ptr(i);
  for (std::size_t t = 0; t < r; ++t) {
    const double* h_row = x.H.row_ptr(t);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += h_row[j] * r_row[j];
    g[t] = -sum;
  }
  return g;
}

/// Partial gradient in the t-th H row at the current mixed iterate:
/// -(U_t^T - h_t W(:,t)^T) W(:,t), which collapses to -R^T W(:,t) through
/// U_t = R + W(:,t) h_t^T.
inline std::vector<double> grad_h_row(const SsmfProblem& p,
                                      const FactorPair& x, std::size_t t) {
  if (t >= p.r) fail(ErrorCode::InvalidIndex, "grad_h_row: row out of range");
  const std::size_t m = p.m(), n = p.n();
  std::vector<double> g(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double wit = x.W(i, t);
    if (wit == 0.0) continue;
    const double* r_row = x.R.row_ptr(i);
    for (std::size_t j = 0; j < n; ++j) g[j] -= wit * r_row[j];
  }
  return g;
}

/// Replaces W(i,:) and patches the cached residual incrementally.
inline void apply_w_row_update(FactorPair& x, std::size_t i,
                               std::span<const double> new_w) {
  if (i >= x.W.rows()) fail(ErrorCode::InvalidIndex, "W row out of range");
  if (new_w.size() != x.W.cols())
    fail(ErrorCode::InvalidDimensions, "new W row has wrong length");
  detail::require_simplex_row(new_w, "apply_w_row_update");
  const std::size_t r = x.W.cols(), n = x.H.cols();
  std::vector<double> ht_delta(n, 0.0);
  const double* w_old = x.W.row_ptr(i);
  for (std::size_t t = 0; t < r; ++t) {
    const double d = new_w[t] - w_old[t];
    if (d == 0.0) continue;
    const double* h_row = x.H.row_ptr(t);
    for (std::size_t j = 0; j < n; ++j) ht_delta[j] += d * h_row[j];
  }
  detail::apply_w_row_with_delta(x, i, new_w, ht_delta);
}

/// Replaces H(t,:) and patches the cached residual incrementally; the
/// correction is sparse because old and new rows have at most s nonzeros
/// each.
inline void apply_h_row_update(FactorPair& x, std::size_t t,
                               std::span<const double> new_h) {
  if (t >= x.H.rows()) fail(ErrorCode::InvalidIndex, "H row out of range");
  if (new_h.size() != x.H.cols())
    fail(ErrorCode::InvalidDimensions, "new H row has wrong length");
  detail::require_simplex_row(new_h, "apply_h_row_update");
  if (detail::count_nonzeros(new_h) > x.s.s)
    fail(ErrorCode::InvalidInput, "apply_h_row_update: l0 budget exceeded");
  const double* h_old = x.H.row_ptr(t);
  std::vector<std::pair<std::size_t, double>> delta_nz;
  delta_nz.reserve(2 * x.s.s);
  for (std::size_t j = 0; j < x.H.cols(); ++j) {
    const double d = h_old[j] - new_h[j];
    if (d != 0.0) delta_nz.emplace_back(j, d);
  }
  detail::apply_h_row_with_delta(x, t, new_h, delta_nz);
}

/// Random feasible start: W rows are simplex projections of uniform draws,
/// H rows sparse-simplex projections at level s.
inline FactorPair init_random_feasible(const SsmfProblem& p,
                                       RandomSource& src) {
  DenseMatrix w = rand_uniform_matrix(src, p.m(), p.r);
  for (std::size_t i = 0; i < p.m(); ++i) {
    const auto proj = project_simplex(w.row(i));
    std::copy(proj.begin(), proj.end(), w.row_ptr(i));
  }
  DenseMatrix h = rand_uniform_matrix(src, p.r, p.n());
  for (std::size_t t = 0; t < p.r; ++t) {
    const auto proj = project_sparse_simplex(h.row(t), p.s);
    std::copy(proj.begin(), proj.end(), h.row_ptr(t));
  }
  return make_factor_pair(p, std::move(w), std::move(h));
}

}  // namespace ssmf
