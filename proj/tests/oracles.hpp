// Test-only reference implementations. Everything here recomputes results
// from first principles (dense formulas, enumeration, finite differences)
// and stays independent of the library's optimized paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ssmf/dense.hpp"
#include "ssmf/model.hpp"
#include "ssmf/projections.hpp"
#include "ssmf/random.hpp"

namespace oracles {

inline ssmf::DenseMatrix naive_matmul(const ssmf::DenseMatrix& a,
                                      const ssmf::DenseMatrix& b) {
  ssmf::DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) sum += a(i, k) * b(k, j);
      out(i, j) = sum;
    }
  return out;
}

/// Cyclic Jacobi eigensolver for small symmetric matrices; eigenvalues
/// returned descending.
inline std::vector<double> jacobi_eigenvalues(ssmf::DenseMatrix a,
                                              int max_sweeps = 100) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = 0.5 * (a(q, q) - a(p, p)) / a(p, q);
        const double t =
            (theta >= 0 ? 1.0 : -1.0) /
            (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end(), std::greater<>());
  return eig;
}

/// One-sided Jacobi SVD: orthogonalizes column pairs of the matrix itself,
/// so small singular values come out at machine-precision absolute accuracy
/// (a Gram-matrix route would square the condition number).
inline std::vector<double> singular_values(const ssmf::DenseMatrix& a_in,
                                           int max_sweeps = 60) {
  ssmf::DenseMatrix a = a_in.rows() >= a_in.cols() ? a_in : ssmf::transpose(a_in);
  const std::size_t m = a.rows(), n = a.cols();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          app += a(i, p) * a(i, p);
          aqq += a(i, q) * a(i, q);
          apq += a(i, p) * a(i, q);
        }
        if (std::abs(apq) <= 1e-15 * std::sqrt(app * aqq) || apq == 0.0)
          continue;
        rotated = true;
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = cs * aip - sn * aiq;
          a(i, q) = sn * aip + cs * aiq;
        }
      }
    if (!rotated) break;
  }
  std::vector<double> sv(n);
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += a(i, j) * a(i, j);
    sv[j] = std::sqrt(sum);
  }
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

/// Projection onto the 2-simplex worked out by hand: z = (t, 1 - t) with
/// t clamped from the unconstrained stationary point.
inline std::vector<double> project_simplex_2d(double y0, double y1) {
  const double t = std::clamp((y0 - y1 + 1.0) / 2.0, 0.0, 1.0);
  return {t, 1.0 - t};
}

inline double objective_direct(const ssmf::DenseMatrix& v,
                               const ssmf::DenseMatrix& w,
                               const ssmf::DenseMatrix& h) {
  const auto wh = naive_matmul(w, h);
  double sum = 0.0;
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) {
      const double d = v(i, j) - wh(i, j);
      sum += d * d;
    }
  return 0.5 * sum;
}

/// Central finite differences of f in one W row.
inline std::vector<double> fd_grad_w_row(const ssmf::DenseMatrix& v,
                                         ssmf::DenseMatrix w,
                                         const ssmf::DenseMatrix& h,
                                         std::size_t i, double step = 1e-6) {
  std::vector<double> g(w.cols());
  for (std::size_t t = 0; t < w.cols(); ++t) {
    const double saved = w(i, t);
    w(i, t) = saved + step;
    const double fp = objective_direct(v, w, h);
    w(i, t) = saved - step;
    const double fm = objective_direct(v, w, h);
    w(i, t) = saved;
    g[t] = (fp - fm) / (2.0 * step);
  }
  return g;
}

/// Central finite differences of f in one H row.
inline std::vector<double> fd_grad_h_row(const ssmf::DenseMatrix& v,
                                         const ssmf::DenseMatrix& w,
                                         ssmf::DenseMatrix h, std::size_t t,
                                         double step = 1e-6) {
  std::vector<double> g(h.cols());
  for (std::size_t j = 0; j < h.cols(); ++j) {
    const double saved = h(t, j);
    h(t, j) = saved + step;
    const double fp = objective_direct(v, w, h);
    h(t, j) = saved - step;
    const double fm = objective_direct(v, w, h);
    h(t, j) = saved;
    g[j] = (fp - fm) / (2.0 * step);
  }
  return g;
}

/// psi_k evaluated from its definition: 0.5 || U^T - h w^T ||_F^2 for the
/// dense residual-without-row-t matrix U and column w.
inline double psi_direct(const ssmf::DenseMatrix& u, const std::vector<double>& w_col,
                         const std::vector<double>& h) {
  double sum = 0.0;
  for (std::size_t j = 0; j < u.cols(); ++j)
    for (std::size_t i = 0; i < u.rows(); ++i) {
      const double d = u(i, j) - w_col[i] * h[j];
      sum += d * d;
    }
  return 0.5 * sum;
}

/// Brute-force minimizer of psi over the sparse simplex: enumerate supports,
/// minimize the restricted strictly convex quadratic on each masked simplex,
/// compare by direct psi evaluation.
inline std::vector<double> brute_force_psi_min(const ssmf::DenseMatrix& u,
                                               const std::vector<double>& w_col,
                                               std::size_t s) {
  const std::size_t n = u.cols();
  double w_sq = 0.0;
  for (double v : w_col) w_sq += v * v;
  std::vector<double> target(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < u.rows(); ++i) target[j] += u(i, j) * w_col[i];
    target[j] /= w_sq;
  }
  std::vector<std::size_t> support(s);
  std::iota(support.begin(), support.end(), 0);
  std::vector<double> best;
  double best_val = 0.0;
  while (true) {
    auto cand = ssmf::project_masked_simplex(target, ssmf::SupportSet{support});
    const double val = psi_direct(u, w_col, cand);
    if (best.empty() || val < best_val) {
      best = std::move(cand);
      best_val = val;
    }
    std::size_t k = s;
    while (k > 0 && support[k - 1] == n - s + (k - 1)) --k;
    if (k == 0) break;
    ++support[k - 1];
    for (std::size_t j = k; j < s; ++j) support[j] = support[j - 1] + 1;
  }
  return best;
}

inline std::vector<double> random_vector(ssmf::RandomSource& src, std::size_t n,
                                         double lo = -1.0, double hi = 1.0) {
  std::vector<double> y(n);
  for (double& v : y) v = lo + (hi - lo) * src.next_double();
  return y;
}

inline ssmf::DenseMatrix random_stochastic(ssmf::RandomSource& src,
                                           std::size_t rows, std::size_t cols) {
  ssmf::DenseMatrix a = ssmf::rand_uniform_matrix(src, rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto proj = ssmf::project_simplex(a.row(i));
    std::copy(proj.begin(), proj.end(), a.row_ptr(i));
  }
  return a;
}

inline ssmf::DenseMatrix random_sparse_stochastic(ssmf::RandomSource& src,
                                                  std::size_t rows,
                                                  std::size_t cols,
                                                  std::size_t s) {
  ssmf::DenseMatrix a = ssmf::rand_uniform_matrix(src, rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto proj = ssmf::project_sparse_simplex(a.row(i), ssmf::SparsityLevel{s});
    std::copy(proj.begin(), proj.end(), a.row_ptr(i));
  }
  return a;
}

}  // namespace oracles
