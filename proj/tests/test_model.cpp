#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "ssmf/model.hpp"

using ssmf::DenseMatrix;
using ssmf::FactorPair;
using ssmf::RandomSource;
using ssmf::SparsityLevel;
using ssmf::SsmfProblem;

namespace {

SsmfProblem small_problem(std::uint64_t seed, std::size_t m = 8,
                          std::size_t n = 6, std::size_t r = 3,
                          std::size_t s = 2) {
  RandomSource src(seed);
  const auto w = oracles::random_stochastic(src, m, r);
  const auto h = oracles::random_sparse_stochastic(src, r, n, s);
  return ssmf::make_problem(oracles::naive_matmul(w, h), r, SparsityLevel{s});
}

double residual_error(const SsmfProblem& p, const FactorPair& x) {
  const auto direct = oracles::naive_matmul(x.W, x.H);
  double err = 0.0;
  for (std::size_t i = 0; i < p.m(); ++i)
    for (std::size_t j = 0; j < p.n(); ++j)
      err = std::max(err, std::abs(x.R(i, j) - (p.V(i, j) - direct(i, j))));
  return err;
}

}  // namespace

TEST_CASE("problem validation") {
  RandomSource src(1);
  auto v = oracles::random_stochastic(src, 6, 5);

  SECTION("accepts and renormalizes near-stochastic rows") {
    v(0, 0) += 5e-7;  // within the 1e-6 repair band
    const auto p = ssmf::make_problem(v, 2, SparsityLevel{2});
    double sum = 0.0;
    for (std::size_t j = 0; j < p.n(); ++j) sum += p.V(0, j);
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
  SECTION("rejects rows too far from the simplex") {
    v(0, 0) += 1e-3;
    CHECK_THROWS_AS(ssmf::make_problem(v, 2, SparsityLevel{2}), ssmf::Error);
  }
  SECTION("rejects negative entries") {
    v(1, 0) -= v(1, 0) + 0.1;
    CHECK_THROWS_AS(ssmf::make_problem(v, 2, SparsityLevel{2}), ssmf::Error);
  }
  SECTION("rejects out-of-range rank and sparsity") {
    CHECK_THROWS_AS(ssmf::make_problem(v, 5, SparsityLevel{2}), ssmf::Error);
    CHECK_THROWS_AS(ssmf::make_problem(v, 2, SparsityLevel{9}), ssmf::Error);
  }
}

TEST_CASE("objective from the cached residual") {
  SECTION("zero at an exact factorization") {
    RandomSource src(3);
    const auto w = oracles::random_stochastic(src, 8, 3);
    const auto h = oracles::random_sparse_stochastic(src, 3, 6, 2);
    const auto v = oracles::naive_matmul(w, h);
    const auto p = ssmf::make_problem(v, 3, SparsityLevel{2});
    const auto x = ssmf::make_factor_pair(p, w, h);
    CHECK(ssmf::objective_f(p, x) <= 1e-20);
  }
  SECTION("hand case") {
    // Degenerate 1x2 shape, built directly: the residual is (1, -1).
    const SsmfProblem p{DenseMatrix::from_rows({{1.0, 0.0}}), 1,
                        SparsityLevel{1}};
    const auto x = ssmf::make_factor_pair(p, DenseMatrix::from_rows({{1.0}}),
                                          DenseMatrix::from_rows({{0.0, 1.0}}));
    CHECK(ssmf::objective_f(p, x) == Catch::Approx(1.0).epsilon(1e-15));
  }
  SECTION("random instance matches direct recompute") {
    const auto p = small_problem(4, 10, 8, 3, 3);
    RandomSource src(5);
    auto init = src.split(9);
    const auto x = ssmf::init_random_feasible(p, init);
    CHECK(std::abs(ssmf::objective_f(p, x) -
                   oracles::objective_direct(p.V, x.W, x.H)) <= 1e-10);
  }
}

TEST_CASE("extended objective marks infeasibility") {
  const auto p = small_problem(6);
  RandomSource src(7);
  auto x = ssmf::init_random_feasible(p, src);
  REQUIRE(ssmf::extended_objective_F(p, x).has_value());
  CHECK(*ssmf::extended_objective_F(p, x) ==
        Catch::Approx(ssmf::objective_f(p, x)));

  SECTION("negative entry") {
    auto bad = x;
    bad.W(0, 0) -= 1e-3;
    CHECK(!ssmf::extended_objective_F(p, bad).has_value());
  }
  SECTION("l0 budget exceeded") {
    auto bad = x;
    // Force s+1 nonzeros in one H row, keeping the sum at 1.
    for (std::size_t j = 0; j < p.n(); ++j) bad.H(0, j) = 0.0;
    for (std::size_t j = 0; j <= p.s.s; ++j)
      bad.H(0, j) = 1.0 / static_cast<double>(p.s.s + 1);
    CHECK(!ssmf::extended_objective_F(p, bad).has_value());
  }
}

TEST_CASE("W-row gradient") {
  SECTION("zero at a stationary row") {
    // V = W H exactly makes every residual row zero.
    RandomSource src(8);
    const auto w = oracles::random_stochastic(src, 6, 2);
    const auto h = oracles::random_sparse_stochastic(src, 2, 5, 2);
    const auto p = ssmf::make_problem(oracles::naive_matmul(w, h), 2,
                                      SparsityLevel{2});
    const auto x = ssmf::make_factor_pair(p, w, h);
    for (double g : ssmf::grad_w_row(p, x, 0)) CHECK(std::abs(g) <= 1e-12);
  }
  SECTION("identity-padded hand case") {
    // H = [I_2 | 0], w = e1, v = e2 gives H (e1 - e2) = (1, -1).
    const auto h = DenseMatrix::from_rows({{1, 0, 0, 0}, {0, 1, 0, 0}});
    DenseMatrix v(3, 4, 0.0);
    v(0, 1) = 1.0;  // row 0 of V is e2
    v(1, 0) = 1.0;
    v(2, 0) = 1.0;
    const auto p = ssmf::make_problem(v, 2, SparsityLevel{1});
    DenseMatrix w(3, 2, 0.0);
    w(0, 0) = 1.0;
    w(1, 0) = 1.0;
    w(2, 0) = 1.0;
    const auto x = ssmf::make_factor_pair(p, w, h);
    const auto g = ssmf::grad_w_row(p, x, 0);
    CHECK(g[0] == Catch::Approx(1.0).margin(1e-14));
    CHECK(g[1] == Catch::Approx(-1.0).margin(1e-14));
  }
  SECTION("matches central finite differences") {
    RandomSource src(9);
    for (int rep = 0; rep < 20; ++rep) {
      const auto p = small_problem(100 + rep, 7, 6, 3, 3);
      auto init = src.split(rep);
      const auto x = ssmf::init_random_feasible(p, init);
      const std::size_t i = src.next_index(p.m());
      const auto g = ssmf::grad_w_row(p, x, i);
      const auto fd = oracles::fd_grad_w_row(p.V, x.W, x.H, i);
      double num = 0.0, den = 0.0;
      for (std::size_t t = 0; t < p.r; ++t) {
        num += (g[t] - fd[t]) * (g[t] - fd[t]);
        den += fd[t] * fd[t];
      }
      CHECK(std::sqrt(num) <= 1e-6 * std::max(1.0, std::sqrt(den)));
    }
  }
  SECTION("index out of range") {
    const auto p = small_problem(10);
    RandomSource src(11);
    const auto x = ssmf::init_random_feasible(p, src);
    CHECK_THROWS_AS(ssmf::grad_w_row(p, x, p.m()), ssmf::Error);
  }
}

TEST_CASE("H-row gradient") {
  SECTION("matches the direct formula") {
    RandomSource src(12);
    for (int rep = 0; rep < 20; ++rep) {
      const auto p = small_problem(200 + rep, 9, 7, 3, 3);
      auto init = src.split(rep);
      const auto x = ssmf::init_random_feasible(p, init);
      const std::size_t t = src.next_index(p.r);
      // U_t from the definition: V minus the contributions of all other rows.
      DenseMatrix u = p.V;
      for (std::size_t i = 0; i < p.m(); ++i)
        for (std::size_t jj = 0; jj < p.r; ++jj) {
          if (jj == t) continue;
          for (std::size_t j = 0; j < p.n(); ++j)
            u(i, j) -= x.W(i, jj) * x.H(jj, j);
        }
      std::vector<double> w_col(p.m());
      for (std::size_t i = 0; i < p.m(); ++i) w_col[i] = x.W(i, t);
      double w_sq = 0.0;
      for (double v : w_col) w_sq += v * v;
      std::vector<double> direct(p.n());
      for (std::size_t j = 0; j < p.n(); ++j) {
        double utw = 0.0;
        for (std::size_t i = 0; i < p.m(); ++i) utw += u(i, j) * w_col[i];
        direct[j] = -(utw - x.H(t, j) * w_sq);
      }
      const auto g = ssmf::grad_h_row(p, x, t);
      for (std::size_t j = 0; j < p.n(); ++j)
        CHECK(std::abs(g[j] - direct[j]) <= 1e-10);
    }
  }
  SECTION("matches central finite differences") {
    RandomSource src(13);
    for (int rep = 0; rep < 20; ++rep) {
      const auto p = small_problem(300 + rep, 7, 6, 3, 3);
      auto init = src.split(rep);
      const auto x = ssmf::init_random_feasible(p, init);
      const std::size_t t = src.next_index(p.r);
      const auto g = ssmf::grad_h_row(p, x, t);
      const auto fd = oracles::fd_grad_h_row(p.V, x.W, x.H, t);
      double num = 0.0, den = 0.0;
      for (std::size_t j = 0; j < p.n(); ++j) {
        num += (g[j] - fd[j]) * (g[j] - fd[j]);
        den += fd[j] * fd[j];
      }
      CHECK(std::sqrt(num) <= 1e-6 * std::max(1.0, std::sqrt(den)));
    }
  }
  SECTION("zero column gives a zero gradient") {
    RandomSource src(14);
    const auto p = small_problem(15, 6, 5, 2, 2);
    auto x = ssmf::init_random_feasible(p, src);
    for (std::size_t i = 0; i < p.m(); ++i) {
      x.W(i, 1) = 0.0;
      x.W(i, 0) = 1.0;
    }
    ssmf::rebuild_residual(p, x);
    for (double g : ssmf::grad_h_row(p, x, 1)) CHECK(g == 0.0);
  }
}

TEST_CASE("incremental row updates keep the residual coherent") {
  const auto p = small_problem(16, 10, 8, 3, 3);
  RandomSource src(17);
  auto x = ssmf::init_random_feasible(p, src);

  SECTION("no-op updates leave R unchanged") {
    const auto r_before = x.R;
    std::vector<double> w_row(x.W.row(2).begin(), x.W.row(2).end());
    ssmf::apply_w_row_update(x, 2, w_row);
    CHECK(x.R == r_before);
    std::vector<double> h_row(x.H.row(1).begin(), x.H.row(1).end());
    ssmf::apply_h_row_update(x, 1, h_row);
    CHECK(x.R == r_before);
  }

  SECTION("after updates R equals a full recompute") {
    for (int rep = 0; rep < 20; ++rep) {
      const std::size_t i = src.next_index(p.m());
      const auto w_new = ssmf::project_simplex(
          oracles::random_vector(src, p.r, 0.0, 1.0));
      ssmf::apply_w_row_update(x, i, w_new);
      const std::size_t t = src.next_index(p.r);
      const auto h_new = ssmf::project_sparse_simplex(
          oracles::random_vector(src, p.n(), 0.0, 1.0), p.s);
      ssmf::apply_h_row_update(x, t, h_new);
    }
    CHECK(residual_error(p, x) <= 1e-10);
  }

  SECTION("a sweep of m row updates equals whole-matrix replacement") {
    auto y = x;
    DenseMatrix w_new(p.m(), p.r);
    for (std::size_t i = 0; i < p.m(); ++i) {
      const auto row = ssmf::project_simplex(
          oracles::random_vector(src, p.r, 0.0, 1.0));
      std::copy(row.begin(), row.end(), w_new.row_ptr(i));
      ssmf::apply_w_row_update(x, i, row);
    }
    const auto z = ssmf::make_factor_pair(p, w_new, y.H);
    CHECK(residual_error(p, x) <= 1e-10);
    for (std::size_t i = 0; i < p.m(); ++i)
      for (std::size_t j = 0; j < p.n(); ++j)
        CHECK(std::abs(x.R(i, j) - z.R(i, j)) <= 1e-12);
  }

  SECTION("drift after ten thousand updates stays tiny") {
    const double scale = 1.0 + ssmf::frobenius_norm(p.V);
    for (int rep = 0; rep < 10'000; ++rep) {
      if (rep % 2 == 0) {
        const std::size_t i = src.next_index(p.m());
        ssmf::apply_w_row_update(
            x, i,
            ssmf::project_simplex(oracles::random_vector(src, p.r, 0.0, 1.0)));
      } else {
        const std::size_t t = src.next_index(p.r);
        ssmf::apply_h_row_update(
            x, t,
            ssmf::project_sparse_simplex(
                oracles::random_vector(src, p.n(), 0.0, 1.0), p.s));
      }
      if (rep % 2500 == 0) CHECK(residual_error(p, x) <= 1e-8 * scale);
    }
    CHECK(residual_error(p, x) <= 1e-8 * scale);
  }

  SECTION("infeasible rows are rejected") {
    CHECK_THROWS_AS(
        ssmf::apply_w_row_update(x, 0, std::vector<double>(p.r, 0.4)),
        ssmf::Error);
    std::vector<double> too_dense(p.n(), 1.0 / static_cast<double>(p.n()));
    CHECK_THROWS_AS(ssmf::apply_h_row_update(x, 0, too_dense), ssmf::Error);
  }
}

TEST_CASE("feasibility report") {
  const auto p = small_problem(18);
  RandomSource src(19);
  auto x = ssmf::init_random_feasible(p, src);

  const auto clean = ssmf::check_feasibility(p, x);
  CHECK(clean.max_row_sum_err <= 1e-12);
  CHECK(clean.min_entry >= 0.0);
  CHECK(clean.max_l0 <= p.s.s);

  SECTION("doubled H row") {
    for (std::size_t j = 0; j < p.n(); ++j) x.H(0, j) *= 2.0;
    CHECK(ssmf::check_feasibility(p, x).max_row_sum_err ==
          Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("negative W entry") {
    x.W(0, 0) = -0.1;
    CHECK(ssmf::check_feasibility(p, x).min_entry ==
          Catch::Approx(-0.1).margin(1e-15));
  }
}

TEST_CASE("random feasible init") {
  const auto p = small_problem(20, 12, 9, 4, 3);

  RandomSource a(77), b(77), c(78);
  const auto x1 = ssmf::init_random_feasible(p, a);
  const auto x2 = ssmf::init_random_feasible(p, b);
  CHECK(x1.W == x2.W);
  CHECK(x1.H == x2.H);

  const auto x3 = ssmf::init_random_feasible(p, c);
  double max_gap = 0.0;
  for (std::size_t i = 0; i < x1.W.size(); ++i)
    max_gap = std::max(max_gap, std::abs(x1.W.data()[i] - x3.W.data()[i]));
  CHECK(max_gap > 1e-6);

  const auto rep = ssmf::check_feasibility(p, x1);
  CHECK(rep.max_row_sum_err <= 1e-12);
  CHECK(rep.min_entry >= 0.0);
  CHECK(rep.max_l0 <= p.s.s);
}

TEST_CASE("F is separable in the W rows") {
  const auto p = small_problem(21, 8, 6, 3, 2);
  RandomSource src(22);
  auto x = ssmf::init_random_feasible(p, src);
  const auto g_before = ssmf::grad_w_row(p, x, 3);
  ssmf::apply_w_row_update(
      x, 0, ssmf::project_simplex(oracles::random_vector(src, p.r, 0.0, 1.0)));
  const auto g_after = ssmf::grad_w_row(p, x, 3);
  CHECK(g_before == g_after);
}

TEST_CASE("feasible factors obey the induced 1-norm bounds") {
  const auto p = small_problem(23, 15, 10, 4, 3);
  RandomSource src(24);
  const auto x = ssmf::init_random_feasible(p, src);
  CHECK(ssmf::one_norm(x.H) <= static_cast<double>(p.r) + 1e-12);
  CHECK(ssmf::one_norm(x.W) <= static_cast<double>(p.m()) + 1e-12);
}
