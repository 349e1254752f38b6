#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "ssmf/error.hpp"

namespace ssmf {

/// Row-major dense matrix of doubles. The one numeric container used
/// throughout the library; values are plain and copyable.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  static DenseMatrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t m = rows.size();
    const std::size_t n = m == 0 ? 0 : rows.begin()->size();
    DenseMatrix a(m, n);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != n)
        fail(ErrorCode::InvalidDimensions, "ragged row in matrix literal");
      std::copy(row.begin(), row.end(), a.row_ptr(i));
      ++i;
    }
    return a;
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
    return a;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  double* row_ptr(std::size_t i) { return data_.data() + i * cols_; }
  const double* row_ptr(std::size_t i) const {
    return data_.data() + i * cols_;
  }
  std::span<double> row(std::size_t i) { return {row_ptr(i), cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {row_ptr(i), cols_};
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool operator==(const DenseMatrix& other) const = default;

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows())
    fail(ErrorCode::InvalidDimensions,
         "matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
             std::to_string(b.rows()));
  DenseMatrix out(a.rows(), b.cols(), 0.0);
  // ikj order keeps b and out accesses contiguous.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out_row = out.row_ptr(i);
    const double* a_row = a.row_ptr(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a_row[k];
      if (aik == 0.0) continue;
      const double* b_row = b.row_ptr(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline double frobenius_norm_sq(const DenseMatrix& a) {
  double sum = 0.0;
  for (double v : a.data()) sum += v * v;
  return sum;
}

inline double frobenius_norm(const DenseMatrix& a) {
  return std::sqrt(frobenius_norm_sq(a));
}

inline double dot(std::span<const double> x, std::span<const double> y) {
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += x[i] * y[i];
  return sum;
}

inline double norm_sq(std::span<const double> x) { return dot(x, x); }

/// Largest column absolute sum (the induced 1-norm).
inline double one_norm(const DenseMatrix& a) {
  std::vector<double> col_sums(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* row = a.row_ptr(i);
    for (std::size_t j = 0; j < a.cols(); ++j) col_sums[j] += std::abs(row[j]);
  }
  double best = 0.0;
  for (double s : col_sums) best = std::max(best, s);
  return best;
}

struct SpectralEstimate {
  double value = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Power iteration for the largest eigenvalue of a symmetric PSD matrix.
/// Starts from the normalized all-ones vector; once the residual certifies
/// convergence the first coordinate is nudged by 1e-3 and iteration resumes,
/// which breaks out of stalls where the start vector is orthogonal to the
/// dominant eigenvector. Returns the best estimate with a converged flag.
inline SpectralEstimate spectral_norm_sym(const DenseMatrix& a,
                                          double tol = 1e-8,
                                          std::size_t max_iter = 500) {
  if (a.rows() != a.cols())
    fail(ErrorCode::InvalidDimensions, "spectral_norm_sym: matrix not square");
  const std::size_t n = a.rows();
  if (n == 0) return {0.0, true, 0};

  std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n)));
  std::vector<double> ax(n);
  SpectralEstimate est;
  bool perturbed = false;
  double best_rho = 0.0;

  for (std::size_t it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i)
      ax[i] = dot(a.row(i), std::span<const double>(x));
    const double rho = dot(std::span<const double>(ax),
                           std::span<const double>(x));
    double res_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = ax[i] - rho * x[i];
      res_sq += r * r;
    }
    best_rho = std::max(best_rho, rho);
    est.value = best_rho;
    est.iterations = it + 1;
    if (std::sqrt(res_sq) <= tol * std::max(1.0, rho)) {
      if (!perturbed) {
        perturbed = true;
        x[0] += 1e-3;
      } else {
        est.value = std::max(rho, best_rho);
        est.converged = true;
        return est;
      }
    } else {
      x = ax;
    }
    const double nrm = std::sqrt(norm_sq(std::span<const double>(x)));
    if (nrm == 0.0) {
      // x landed in the null space; the matrix acts as zero on it.
      est.value = std::max(est.value, 0.0);
      est.converged = true;
      return est;
    }
    for (double& v : x) v /= nrm;
  }
  return est;
}

}  // namespace ssmf
