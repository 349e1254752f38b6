#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ssmf/dense.hpp"
#include "ssmf/error.hpp"
#include "ssmf/model.hpp"
#include "ssmf/projections.hpp"

namespace ssmf {

enum class Algorithm { RowWise, Palm };
enum class StopReason { Tolerance, MaxIter };

enum class StepKindW : unsigned char { BBStep, LipschitzStep };
enum class StepKindH : unsigned char { ExactAM, ProxGrad, SkippedZeroColumn };

struct DiagnosticFlags {
  bool sufficient_decrease = false;
  bool subgradient_bound = false;
  bool gap_sum = false;
};

struct SolverConfig {
  Algorithm algorithm = Algorithm::RowWise;
  double tol = 1e-5;
  std::size_t max_iter = 4000;
  double delta1 = 1e-5;
  double delta2 = 1e-6;
  double c = 10.0;
  DiagnosticFlags diagnostics;
  std::uint64_t seed = 0;
};

/// One row of the iteration trace. rel_change is the stopping statistic
/// ||W^k H^k - W^{k-1} H^{k-1}||_F / ||W^{k-1} H^{k-1}||_F; the k = 0 record
/// carries NaN there. gap_*_sq hold the squared Frobenius moves of each
/// factor block in this iteration.
struct IterRecord {
  std::size_t k = 0;
  double F_value = 0.0;
  double rel_change = std::numeric_limits<double>::quiet_NaN();
  double rel_residual = 0.0;
  std::vector<StepKindW> step_kind_w;
  std::vector<StepKindH> step_kind_h;
  double gap_w_sq = 0.0;
  double gap_h_sq = 0.0;
  FeasibilityReport feas;
  std::optional<double> decrease_slack;
  std::optional<double> subgrad_ratio;
  double wall_time = 0.0;
};

struct SolveResult {
  FactorPair final;
  std::vector<IterRecord> trace;
  StopReason stop_reason = StopReason::MaxIter;
  std::size_t iterations = 0;
};

/// Thrown when the objective turns non-finite; carries whatever trace was
/// accumulated up to that point.
class NumericalBreakdown : public Error {
 public:
  NumericalBreakdown(const std::string& what, SolveResult partial)
      : Error(ErrorCode::NumericalBreakdown, what),
        partial_(std::make_shared<SolveResult>(std::move(partial))) {}

  const SolveResult& partial() const { return *partial_; }

 private:
  std::shared_ptr<SolveResult> partial_;
};

/// Per-row step metadata of one row-wise iteration, needed to reconstruct
/// the subgradient element behind the iterate-gap bound: mu_w[i] is the step
/// that produced W row i, alpha_h[t] the proximal weight for H row t.
struct StepMeta {
  std::vector<double> mu_w;
  std::vector<double> alpha_h;
};

namespace detail {

struct WRowWork {
  std::vector<double> g, htg, trial, new_w, ht_delta;
  StepKindW kind = StepKindW::BBStep;
  double mu = 0.0;
  double decrease = 0.0;
  double move_sq = 0.0;
  bool changed = false;
};

/// W-row update of the row-wise algorithm: spectral trial step
/// mu = min{c, ||g||^2 / ||H^T g||^2} followed by the sufficient-decrease
/// test Phi(w) - Phi(w_bar) >= (delta1/2) ||w - w_bar||^2, with the
/// 1/(L_H + delta1) proximal step as fallback. The Phi difference is
/// evaluated as 0.5 (||H^T w - v||^2 - ||H^T w_bar - v||^2) through the
/// cached residual row.
inline void update_w_row_into(const SsmfProblem& p, const FactorPair& x,
                              std::size_t i, const SolverConfig& cfg,
                              double l_h, WRowWork& work) {
  const std::size_t r = p.r, n = p.n();
  work.g.assign(r, 0.0);
  work.new_w.assign(x.W.row(i).begin(), x.W.row(i).end());
  work.ht_delta.assign(n, 0.0);
  work.kind = StepKindW::BBStep;
  work.mu = cfg.c;
  work.decrease = 0.0;
  work.move_sq = 0.0;
  work.changed = false;

  const double* r_row = x.R.row_ptr(i);
  double g_norm_sq = 0.0;
  for (std::size_t t = 0; t < r; ++t) {
    const double* h_row = x.H.row_ptr(t);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += h_row[j] * r_row[j];
    work.g[t] = -sum;
    g_norm_sq += sum * sum;
  }
  if (g_norm_sq == 0.0) return;  // stationary row, 0/0 step ratio: keep it

  work.htg.assign(n, 0.0);
  for (std::size_t t = 0; t < r; ++t) {
    const double gt = work.g[t];
    if (gt == 0.0) continue;
    const double* h_row = x.H.row_ptr(t);
    for (std::size_t j = 0; j < n; ++j) work.htg[j] += gt * h_row[j];
  }
  const double denom = norm_sq(std::span<const double>(work.htg));
  const double mu_bb = denom > 0.0 ? std::min(cfg.c, g_norm_sq / denom) : cfg.c;

  const double* w_row = x.W.row_ptr(i);
  work.trial.resize(r);
  for (std::size_t t = 0; t < r; ++t)
    work.trial[t] = w_row[t] - mu_bb * work.g[t];
  auto w_bar = project_simplex(work.trial);

  const auto eval_step = [&](const std::vector<double>& cand, double& move_sq,
                             double& decrease) {
    move_sq = 0.0;
    for (std::size_t t = 0; t < r; ++t) {
      const double d = cand[t] - w_row[t];
      move_sq += d * d;
    }
    work.ht_delta.assign(n, 0.0);
    for (std::size_t t = 0; t < r; ++t) {
      const double d = cand[t] - w_row[t];
      if (d == 0.0) continue;
      const double* h_row = x.H.row_ptr(t);
      for (std::size_t j = 0; j < n; ++j) work.ht_delta[j] += d * h_row[j];
    }
    double old_sq = 0.0, new_sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      old_sq += r_row[j] * r_row[j];
      const double e = r_row[j] - work.ht_delta[j];
      new_sq += e * e;
    }
    decrease = 0.5 * (old_sq - new_sq);
    return 1e-12 * (1.0 + 0.5 * old_sq);  // slack absorbing the cancellation
  };

  double move_sq = 0.0, decrease = 0.0;
  const double slack = eval_step(w_bar, move_sq, decrease);
  if (decrease >= 0.5 * cfg.delta1 * move_sq - slack) {
    work.kind = StepKindW::BBStep;
    work.mu = mu_bb;
  } else {
    const double mu_lip = 1.0 / (l_h + cfg.delta1);
    for (std::size_t t = 0; t < r; ++t)
      work.trial[t] = w_row[t] - mu_lip * work.g[t];
    w_bar = project_simplex(work.trial);
    eval_step(w_bar, move_sq, decrease);
    work.kind = StepKindW::LipschitzStep;
    work.mu = mu_lip;
  }
  work.new_w = std::move(w_bar);
  work.decrease = decrease;
  work.move_sq = move_sq;
  work.changed = move_sq > 0.0;
}

struct HRowWork {
  std::vector<double> rw, y, new_h;
  StepKindH kind = StepKindH::ExactAM;
  double alpha = 1.0;
  double decrease = 0.0;
  double move_sq = 0.0;
  bool changed = false;
};

/// H-row update: skip rows whose W column is exactly zero, otherwise take
/// the closed-form row minimizer (a sparse-simplex projection of
/// U_t^T W(:,t) / ||W(:,t)||^2), falling back to the proximal gradient step
/// with nu = 1/(||W(:,t)||^2 + delta2) when the minimizer misses the
/// sufficient decrease.
inline void update_h_row_into(const SsmfProblem& p, const FactorPair& x,
                              std::size_t t, const SolverConfig& cfg,
                              HRowWork& work) {
  const std::size_t m = p.m(), n = p.n();
  const double* h_old = x.H.row_ptr(t);
  work.new_h.assign(h_old, h_old + n);
  work.kind = StepKindH::SkippedZeroColumn;
  work.alpha = 1.0;
  work.decrease = 0.0;
  work.move_sq = 0.0;
  work.changed = false;

  double w_norm_sq = 0.0;
  for (std::size_t i = 0; i < m; ++i) w_norm_sq += x.W(i, t) * x.W(i, t);
  if (w_norm_sq == 0.0) return;  // simplex projections emit exact zeros

  // rw = R^T W(:,t); the least-squares target is b = rw + ||w||^2 h_old.
  work.rw.assign(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double wit = x.W(i, t);
    if (wit == 0.0) continue;
    const double* r_row = x.R.row_ptr(i);
    for (std::size_t j = 0; j < n; ++j) work.rw[j] += wit * r_row[j];
  }

  const auto psi_drop = [&](const std::vector<double>& cand, double& move_sq) {
    // Psi(h_old) - Psi(cand) = <b, cand - h_old> + 0.5||w||^2 (||h_old||^2 -
    // ||cand||^2), with b = rw + ||w||^2 h_old.
    double inner = 0.0, old_sq = 0.0, cand_sq = 0.0;
    move_sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double b = work.rw[j] + w_norm_sq * h_old[j];
      const double d = cand[j] - h_old[j];
      inner += b * d;
      old_sq += h_old[j] * h_old[j];
      cand_sq += cand[j] * cand[j];
      move_sq += d * d;
    }
    return inner + 0.5 * w_norm_sq * (old_sq - cand_sq);
  };

  work.y.resize(n);
  for (std::size_t j = 0; j < n; ++j)
    work.y[j] = (work.rw[j] + w_norm_sq * h_old[j]) / w_norm_sq;
  auto h_bar = project_sparse_simplex(work.y, p.s);

  double move_sq = 0.0;
  double decrease = psi_drop(h_bar, move_sq);
  const double slack =
      1e-12 * (1.0 + 0.5 * w_norm_sq * norm_sq(std::span<const double>(h_old, n)));
  if (decrease >= 0.5 * cfg.delta2 * move_sq - slack) {
    work.kind = StepKindH::ExactAM;
    work.alpha = 1.0 / w_norm_sq;
  } else {
    const double nu = 1.0 / (w_norm_sq + cfg.delta2);
    // grad psi(h_old) = -rw, so the proximal point is h_old + nu rw.
    for (std::size_t j = 0; j < n; ++j)
      work.y[j] = h_old[j] + nu * work.rw[j];
    h_bar = project_sparse_simplex(work.y, p.s);
    decrease = psi_drop(h_bar, move_sq);
    work.kind = StepKindH::ProxGrad;
    work.alpha = nu;
  }
  work.new_h = std::move(h_bar);
  work.decrease = decrease;
  work.move_sq = move_sq;
  work.changed = move_sq > 0.0;
}

inline DenseMatrix gram_of_rows(const DenseMatrix& a) {
  const std::size_t r = a.rows();
  DenseMatrix g(r, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = i; j < r; ++j) {
      const double v = dot(a.row(i), a.row(j));
      g(i, j) = v;
      g(j, i) = v;
    }
  return g;
}

}  // namespace detail

struct WRowUpdate {
  std::vector<double> new_w;
  StepKindW kind = StepKindW::BBStep;
  double mu = 0.0;
  double decrease = 0.0;
  double move_sq = 0.0;
};

inline WRowUpdate update_w_row(const SsmfProblem& p, const FactorPair& x,
                               std::size_t i, const SolverConfig& cfg,
                               double l_h) {
  if (i >= p.m()) fail(ErrorCode::InvalidIndex, "update_w_row: row out of range");
  detail::WRowWork work;
  detail::update_w_row_into(p, x, i, cfg, l_h, work);
  return {std::move(work.new_w), work.kind, work.mu, work.decrease,
          work.move_sq};
}

struct HRowUpdate {
  std::vector<double> new_h;
  StepKindH kind = StepKindH::SkippedZeroColumn;
  double alpha = 1.0;
  double decrease = 0.0;
  double move_sq = 0.0;
};

/// The closed-form row minimizer of psi over the sparse simplex,
/// project(U_t^T W(:,t) / ||W(:,t)||^2), computed through the residual
/// cache. Returns the current row unchanged when the column is zero. This is
/// the candidate the row-wise H step proposes before its decrease test.
inline std::vector<double> exact_h_row_minimizer(const SsmfProblem& p,
                                                 const FactorPair& x,
                                                 std::size_t t) {
  if (t >= p.r) fail(ErrorCode::InvalidIndex, "row out of range");
  const std::size_t m = p.m(), n = p.n();
  double w_norm_sq = 0.0;
  for (std::size_t i = 0; i < m; ++i) w_norm_sq += x.W(i, t) * x.W(i, t);
  if (w_norm_sq == 0.0)
    return {x.H.row(t).begin(), x.H.row(t).end()};
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double wit = x.W(i, t);
    if (wit == 0.0) continue;
    const double* r_row = x.R.row_ptr(i);
    for (std::size_t j = 0; j < n; ++j) y[j] += wit * r_row[j];
  }
  for (std::size_t j = 0; j < n; ++j)
    y[j] = y[j] / w_norm_sq + x.H(t, j);
  return project_sparse_simplex(y, p.s);
}

inline HRowUpdate update_h_row(const SsmfProblem& p, const FactorPair& x,
                               std::size_t t, const SolverConfig& cfg) {
  if (t >= p.r) fail(ErrorCode::InvalidIndex, "update_h_row: row out of range");
  detail::HRowWork work;
  detail::update_h_row_into(p, x, t, cfg, work);
  return {std::move(work.new_h), work.kind, work.alpha, work.decrease,
          work.move_sq};
}

/// Spectral norm of a general matrix via the Gram matrix of its smaller side.
inline double spectral_norm(const DenseMatrix& a) {
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  const DenseMatrix g = a.rows() <= a.cols()
                            ? detail::gram_of_rows(a)
                            : detail::gram_of_rows(transpose(a));
  const auto est = spectral_norm_sym(g, 1e-10, 2000);
  return std::sqrt(std::max(est.value, 0.0));
}

/// The constant of the subgradient bound: delta4 = max{2 (delta1 + 2r)^2,
/// 2 (||V||_2 + 2 sqrt(mr))^2 + (2m + delta2)^2 r (r+1) / 2}.
inline double delta4_constant(std::size_t m, std::size_t r, double delta1,
                              double delta2, double v_spectral) {
  const double rr = static_cast<double>(r);
  const double mm = static_cast<double>(m);
  const double a = 2.0 * (delta1 + 2.0 * rr) * (delta1 + 2.0 * rr);
  const double root = v_spectral + 2.0 * std::sqrt(mm * rr);
  const double b =
      2.0 * root * root + (2.0 * mm + delta2) * (2.0 * mm + delta2) * rr * (rr + 1.0) / 2.0;
  return std::max(a, b);
}

struct SubgradCheck {
  bool applicable = false;
  double ratio = 0.0;
  double ab_norm = 0.0;
  double gap_norm = 0.0;
  double delta4 = 0.0;
};

/// Evaluates the subgradient lower bound between two consecutive row-wise
/// iterates: builds the subdifferential element (A, B) from the recorded
/// per-row steps and reports ||(A, B)||_F / (sqrt(delta4) ||next - prev||_F),
/// which the update rules keep at or below 1. Gaps below 1e-14 are reported
/// as not applicable.
inline SubgradCheck diagnostic_subgradient_bound(
    const SsmfProblem& p, const FactorPair& x_prev, const FactorPair& x_next,
    const StepMeta& meta, const SolverConfig& cfg, double v_spectral) {
  const std::size_t m = p.m(), n = p.n(), r = p.r;
  SubgradCheck out;
  double gap_sq = 0.0;
  for (std::size_t i = 0; i < m * r; ++i) {
    const double d = x_next.W.data()[i] - x_prev.W.data()[i];
    gap_sq += d * d;
  }
  for (std::size_t i = 0; i < r * n; ++i) {
    const double d = x_next.H.data()[i] - x_prev.H.data()[i];
    gap_sq += d * d;
  }
  out.gap_norm = std::sqrt(gap_sq);
  out.delta4 = delta4_constant(m, r, cfg.delta1, cfg.delta2, v_spectral);
  if (out.gap_norm <= 1e-14) return out;  // stationary: (A, B) vanishes too

  double ab_sq = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto g_next = grad_w_row(p, x_next, i);
    const auto g_prev = grad_w_row(p, x_prev, i);
    for (std::size_t t = 0; t < r; ++t) {
      const double a = g_next[t] - g_prev[t] -
                       (x_next.W(i, t) - x_prev.W(i, t)) / meta.mu_w[i];
      ab_sq += a * a;
    }
  }

  // Mixed residual for grad psi_k at h_t^k: rows < t already replaced by the
  // next iterate, rows >= t still the previous one, W at the next iterate.
  DenseMatrix r_mix = p.V;
  for (std::size_t i = 0; i < m; ++i) {
    double* row = r_mix.row_ptr(i);
    for (std::size_t t = 0; t < r; ++t) {
      const double wit = x_next.W(i, t);
      if (wit == 0.0) continue;
      const double* h_row = x_prev.H.row_ptr(t);
      for (std::size_t j = 0; j < n; ++j) row[j] -= wit * h_row[j];
    }
  }
  std::vector<double> grad_psi(n);
  for (std::size_t t = 0; t < r; ++t) {
    std::fill(grad_psi.begin(), grad_psi.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double wit = x_next.W(i, t);
      if (wit == 0.0) continue;
      const double* row = r_mix.row_ptr(i);
      for (std::size_t j = 0; j < n; ++j) grad_psi[j] -= wit * row[j];
    }
    const auto g_next = grad_h_row(p, x_next, t);
    for (std::size_t j = 0; j < n; ++j) {
      const double b = g_next[j] - grad_psi[j] -
                       (x_next.H(t, j) - x_prev.H(t, j)) / meta.alpha_h[t];
      ab_sq += b * b;
    }
    // Advance the mixed residual past row t.
    for (std::size_t i = 0; i < m; ++i) {
      const double wit = x_next.W(i, t);
      if (wit == 0.0) continue;
      double* row = r_mix.row_ptr(i);
      for (std::size_t j = 0; j < n; ++j)
        row[j] += wit * (x_prev.H(t, j) - x_next.H(t, j));
    }
  }

  out.ab_norm = std::sqrt(ab_sq);
  out.ratio = out.ab_norm / (std::sqrt(out.delta4) * out.gap_norm);
  out.applicable = true;
  return out;
}

struct GapSumCheck {
  double lhs = 0.0;
  double rhs = 0.0;
};

/// Square-summability of the iterate gaps: sum_k ||x^{k+1} - x^k||_F^2 is
/// bounded by (2 / min{delta1, delta2}) F(x^0).
inline GapSumCheck diagnostic_gap_sum(const std::vector<IterRecord>& trace,
                                      double f0, double delta1,
                                      double delta2) {
  GapSumCheck out;
  for (const auto& rec : trace)
    if (rec.k > 0) out.lhs += rec.gap_w_sq + rec.gap_h_sq;
  out.rhs = 2.0 / std::min(delta1, delta2) * f0;
  return out;
}

namespace detail {

class IterTimer {
 public:
  IterTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline IterRecord make_initial_record(const SsmfProblem& p,
                                      const FactorPair& x, double v_norm) {
  IterRecord rec;
  rec.k = 0;
  rec.F_value = objective_f(p, x);
  rec.rel_residual = std::sqrt(2.0 * rec.F_value) / v_norm;
  rec.feas = check_feasibility(p, x);
  rec.wall_time = 0.0;
  return rec;
}

/// ||V - R||_F, the norm of the current product W H.
inline double product_norm(const DenseMatrix& v, const DenseMatrix& r) {
  double sum = 0.0;
  const double* pv = v.data().data();
  const double* pr = r.data().data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = pv[i] - pr[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

inline double diff_norm(const DenseMatrix& a, const DenseMatrix& b) {
  double sum = 0.0;
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = pa[i] - pb[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace detail

inline SolveResult solve_rowwise(const SsmfProblem& p, const FactorPair& init,
                                 const SolverConfig& cfg) {
  const std::size_t m = p.m(), n = p.n(), r = p.r;
  const double v_norm = frobenius_norm(p.V);
  const bool want_subgrad = cfg.diagnostics.subgradient_bound;

  FactorPair x = init;
  SolveResult out;
  detail::IterTimer timer;
  out.trace.push_back(detail::make_initial_record(p, x, v_norm));

  double prev_prod_norm = detail::product_norm(p.V, x.R);
  DenseMatrix r_prev = x.R;
  FactorPair x_prev;
  double v_spectral = -1.0;
  if (want_subgrad) v_spectral = spectral_norm(p.V);

  std::vector<StepKindW> kinds_w(m);
  std::vector<StepKindH> kinds_h(r);
  std::vector<double> row_move_w(m);
  StepMeta meta;
  meta.mu_w.resize(m);
  meta.alpha_h.resize(r);

  for (std::size_t k = 1; k <= cfg.max_iter; ++k) {
    if (want_subgrad) x_prev = x;

    // Step 1: W rows. F is separable in the W rows at fixed H, so the rows
    // update independently and touch disjoint rows of W and R.
    const DenseMatrix hht = detail::gram_of_rows(x.H);
    const auto est = spectral_norm_sym(hht, 1e-8, 500);
    const double l_h = est.converged ? est.value : one_norm(x.H);

#pragma omp parallel
    {
      detail::WRowWork work;
#pragma omp for schedule(static)
      for (std::size_t i = 0; i < m; ++i) {
        detail::update_w_row_into(p, x, i, cfg, l_h, work);
        if (work.changed)
          detail::apply_w_row_with_delta(x, i, work.new_w, work.ht_delta);
        kinds_w[i] = work.kind;
        meta.mu_w[i] = work.mu;
        row_move_w[i] = work.move_sq;
      }
    }
    double gap_w_sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) gap_w_sq += row_move_w[i];

    // Step 2: H rows, strictly in order; each row sees the fresh values of
    // the rows before it (Gauss-Seidel through the shared residual).
    double gap_h_sq = 0.0;
    {
      detail::HRowWork work;
      for (std::size_t t = 0; t < r; ++t) {
        detail::update_h_row_into(p, x, t, cfg, work);
        if (work.changed) apply_h_row_update(x, t, work.new_h);
        kinds_h[t] = work.kind;
        meta.alpha_h[t] = work.alpha;
        gap_h_sq += work.move_sq;
      }
    }

    IterRecord rec;
    rec.k = k;
    rec.F_value = objective_f(p, x);
    if (!std::isfinite(rec.F_value)) {
      out.iterations = k;
      out.final = std::move(x);
      throw NumericalBreakdown("objective became non-finite at iteration " +
                                   std::to_string(k),
                               std::move(out));
    }
    const double prod_norm = detail::product_norm(p.V, x.R);
    const double change = detail::diff_norm(r_prev, x.R);
    rec.rel_change = prev_prod_norm > 0.0
                         ? change / prev_prod_norm
                         : (change > 0.0 ? std::numeric_limits<double>::infinity()
                                         : 0.0);
    rec.rel_residual = std::sqrt(2.0 * rec.F_value) / v_norm;
    rec.step_kind_w = kinds_w;
    rec.step_kind_h = kinds_h;
    rec.gap_w_sq = gap_w_sq;
    rec.gap_h_sq = gap_h_sq;
    rec.feas = check_feasibility(p, x);
    if (cfg.diagnostics.sufficient_decrease) {
      const double f_prev = out.trace.back().F_value;
      rec.decrease_slack = (f_prev - rec.F_value) -
                           0.5 * cfg.delta1 * gap_w_sq -
                           0.5 * cfg.delta2 * gap_h_sq;
    }
    if (want_subgrad) {
      const auto check =
          diagnostic_subgradient_bound(p, x_prev, x, meta, cfg, v_spectral);
      if (check.applicable) rec.subgrad_ratio = check.ratio;
    }
    rec.wall_time = timer.seconds();
    const double rel_change = rec.rel_change;
    out.trace.push_back(std::move(rec));
    out.iterations = k;

    if (rel_change <= cfg.tol) {
      out.stop_reason = StopReason::Tolerance;
      break;
    }
    if (k % 512 == 0) rebuild_residual(p, x);  // cap incremental drift
    r_prev = x.R;
    prev_prod_norm = prod_norm;
  }

  rebuild_residual(p, x);
  out.final = std::move(x);
  return out;
}

inline SolveResult solve_palm(const SsmfProblem& p, const FactorPair& init,
                              const SolverConfig& cfg) {
  const std::size_t m = p.m(), n = p.n(), r = p.r;
  const double v_norm = frobenius_norm(p.V);

  FactorPair x = init;
  SolveResult out;
  detail::IterTimer timer;
  out.trace.push_back(detail::make_initial_record(p, x, v_norm));

  double prev_prod_norm = detail::product_norm(p.V, x.R);
  DenseMatrix r_prev = x.R;
  DenseMatrix grad_h(r, n);
  std::vector<double> row_move_w(m);

  for (std::size_t k = 1; k <= cfg.max_iter; ++k) {
    // W block: one proximal gradient step with mu = 1/(||H||_F^2 + delta1),
    // the projection splitting into independent per-row simplex projections.
    const double mu = 1.0 / (frobenius_norm_sq(x.H) + cfg.delta1);
#pragma omp parallel
    {
      std::vector<double> g(r), trial(r), ht_delta(n);
#pragma omp for schedule(static)
      for (std::size_t i = 0; i < m; ++i) {
        const double* r_row = x.R.row_ptr(i);
        for (std::size_t t = 0; t < r; ++t) {
          const double* h_row = x.H.row_ptr(t);
          double sum = 0.0;
          for (std::size_t j = 0; j < n; ++j) sum += h_row[j] * r_row[j];
          g[t] = -sum;
        }
        const double* w_row = x.W.row_ptr(i);
        for (std::size_t t = 0; t < r; ++t) trial[t] = w_row[t] - mu * g[t];
        const auto new_w = project_simplex(trial);
        double move_sq = 0.0;
        std::fill(ht_delta.begin(), ht_delta.end(), 0.0);
        for (std::size_t t = 0; t < r; ++t) {
          const double d = new_w[t] - w_row[t];
          move_sq += d * d;
          if (d == 0.0) continue;
          const double* h_row = x.H.row_ptr(t);
          for (std::size_t j = 0; j < n; ++j) ht_delta[j] += d * h_row[j];
        }
        detail::apply_w_row_with_delta(x, i, new_w, ht_delta);
        row_move_w[i] = move_sq;
      }
    }
    double gap_w_sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) gap_w_sq += row_move_w[i];

    // H block: gradient at (W^{k+1}, H^k) for every row before any row
    // moves, then independent per-row sparse-simplex projections.
    const double nu = 1.0 / (frobenius_norm_sq(x.W) + cfg.delta2);
#pragma omp parallel for schedule(static)
    for (std::size_t t = 0; t < r; ++t) {
      double* out_row = grad_h.row_ptr(t);
      std::fill(out_row, out_row + n, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        const double wit = x.W(i, t);
        if (wit == 0.0) continue;
        const double* r_row = x.R.row_ptr(i);
        for (std::size_t j = 0; j < n; ++j) out_row[j] -= wit * r_row[j];
      }
    }
    double gap_h_sq = 0.0;
    {
      std::vector<double> trial(n);
      for (std::size_t t = 0; t < r; ++t) {
        const double* h_row = x.H.row_ptr(t);
        const double* g_row = grad_h.row_ptr(t);
        for (std::size_t j = 0; j < n; ++j)
          trial[j] = h_row[j] - nu * g_row[j];
        const auto new_h = project_sparse_simplex(trial, p.s);
        double move_sq = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double d = new_h[j] - h_row[j];
          move_sq += d * d;
        }
        apply_h_row_update(x, t, new_h);
        gap_h_sq += move_sq;
      }
    }

    IterRecord rec;
    rec.k = k;
    rec.F_value = objective_f(p, x);
    if (!std::isfinite(rec.F_value)) {
      out.iterations = k;
      out.final = std::move(x);
      throw NumericalBreakdown("objective became non-finite at iteration " +
                                   std::to_string(k),
                               std::move(out));
    }
    const double prod_norm = detail::product_norm(p.V, x.R);
    const double change = detail::diff_norm(r_prev, x.R);
    rec.rel_change = prev_prod_norm > 0.0
                         ? change / prev_prod_norm
                         : (change > 0.0 ? std::numeric_limits<double>::infinity()
                                         : 0.0);
    rec.rel_residual = std::sqrt(2.0 * rec.F_value) / v_norm;
    rec.step_kind_w.assign(m, StepKindW::LipschitzStep);
    rec.step_kind_h.assign(r, StepKindH::ProxGrad);
    rec.gap_w_sq = gap_w_sq;
    rec.gap_h_sq = gap_h_sq;
    rec.feas = check_feasibility(p, x);
    if (cfg.diagnostics.sufficient_decrease) {
      const double f_prev = out.trace.back().F_value;
      rec.decrease_slack = (f_prev - rec.F_value) -
                           0.5 * cfg.delta1 * gap_w_sq -
                           0.5 * cfg.delta2 * gap_h_sq;
    }
    rec.wall_time = timer.seconds();
    const double rel_change = rec.rel_change;
    out.trace.push_back(std::move(rec));
    out.iterations = k;

    if (rel_change <= cfg.tol) {
      out.stop_reason = StopReason::Tolerance;
      break;
    }
    if (k % 512 == 0) rebuild_residual(p, x);
    r_prev = x.R;
    prev_prod_norm = prod_norm;
  }

  rebuild_residual(p, x);
  out.final = std::move(x);
  return out;
}

inline SolveResult solve(const SsmfProblem& p, const FactorPair& init,
                         const SolverConfig& cfg) {
  return cfg.algorithm == Algorithm::RowWise ? solve_rowwise(p, init, cfg)
                                             : solve_palm(p, init, cfg);
}

/// Trace export: one CSV per run with columns k, F, rel_change,
/// rel_residual, wall_time and, when recorded, the diagnostic columns.
inline void write_trace_csv(const std::string& path,
                            const std::vector<IterRecord>& trace) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot open for writing: " + path);
  bool any_slack = false, any_ratio = false;
  for (const auto& rec : trace) {
    any_slack |= rec.decrease_slack.has_value();
    any_ratio |= rec.subgrad_ratio.has_value();
  }
  out << "k,F,rel_change,rel_residual,wall_time";
  if (any_slack) out << ",decrease_slack";
  if (any_ratio) out << ",subgrad_ratio";
  out << "\n";
  const auto put = [&out](double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, res.ptr - buf);
  };
  for (const auto& rec : trace) {
    out << rec.k << ',';
    put(rec.F_value);
    out << ',';
    put(rec.rel_change);
    out << ',';
    put(rec.rel_residual);
    out << ',';
    put(rec.wall_time);
    if (any_slack) {
      out << ',';
      if (rec.decrease_slack) put(*rec.decrease_slack);
    }
    if (any_ratio) {
      out << ',';
      if (rec.subgrad_ratio) put(*rec.subgrad_ratio);
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "write failed: " + path);
}

}  // namespace ssmf
