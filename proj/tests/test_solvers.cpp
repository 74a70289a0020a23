#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "fpdfp/solvers.hpp"
#include "oracles.hpp"

using namespace fpdfp;
using Catch::Matchers::WithinAbs;

namespace {

CsrMatrix dense_rows(std::size_t cols, const std::vector<Vec>& rows) {
  SparseMatrix m;
  m.rows = rows.size();
  m.cols = cols;
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (rows[r][c] != 0.0) m.entries.push_back({r, c, rows[r][c]});
  return compile_csr(m);
}

// Single-client problem minimizing 0.5 ||A x - b||^2 + reg(Bx).
ProblemSpec quadratic_problem(const std::vector<Vec>& a_rows, const Vec& b,
                              const std::vector<Vec>& b_rows, RegularizerSpec reg,
                              double lambda) {
  ProblemSpec p;
  LossShard shard;
  shard.kind = LossKind::least_squares;
  shard.unnormalized = true;
  shard.samples = dense_rows(a_rows[0].size(), a_rows);
  shard.targets = b;
  p.shards.push_back(shard);
  p.reg = reg;
  SparseMatrix bm;
  bm.rows = b_rows.size();
  bm.cols = a_rows[0].size();
  for (std::size_t r = 0; r < b_rows.size(); ++r)
    for (std::size_t c = 0; c < bm.cols; ++c)
      if (b_rows[r][c] != 0.0) bm.entries.push_back({r, c, b_rows[r][c]});
  p.B = std::make_shared<SparseMatrixOp>(bm);
  p.lambda = lambda;
  return p;
}

Eigen::MatrixXd to_dense(const std::vector<Vec>& rows) {
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

}  // namespace

TEST_CASE("weight-zero regularizer reduces a step to gradient descent") {
  ProblemSpec p;
  LossShard shard;
  shard.kind = LossKind::least_squares;
  shard.unnormalized = true;
  shard.samples = dense_rows(2, {{1.0, 0.0}, {0.0, 1.0}});
  shard.targets = {3.0, -2.0};  // f(x) = 0.5 ||x - c||^2
  p.shards.push_back(shard);
  p.reg = l1_reg(0.0);
  p.B = std::make_shared<IdentityOp>(2);
  p.lambda = 1.0;

  const PdState s0{Vec{1.0, 1.0}, Vec{0.0, 0.0}};
  const double gamma = 0.25;
  const PdState s1 = pdfp_step(s0, p, gamma, 1.0);
  // grad = x - c = (-2, 3)
  REQUIRE(s1.x == Vec{1.5, 0.25});
  REQUIRE(s1.v == Vec{0.0, 0.0});
}

TEST_CASE("identity coupling reproduces the proximal gradient step") {
  ProblemSpec p;
  LossShard shard;
  shard.kind = LossKind::least_squares;
  shard.unnormalized = true;
  shard.samples = dense_rows(2, {{1.0, 0.3}, {0.0, 0.9}});
  shard.targets = {1.0, -0.4};
  p.shards.push_back(shard);
  p.reg = l1_reg(0.35);
  p.B = std::make_shared<IdentityOp>(2);
  p.lambda = 1.0;

  PdState s{Vec{0.6, -0.2}, Vec{0.1, -0.05}};
  const double gamma = 0.5;
  for (int k = 0; k < 5; ++k) {
    const Vec grad = full_gradient(p, s.x);
    Vec x_half(2);
    for (std::size_t i = 0; i < 2; ++i) x_half[i] = s.x[i] - gamma * grad[i];
    const Vec expected = prox_g(p.reg, x_half, gamma);
    s = pdfp_step(s, p, gamma, 1.0);
    REQUIRE(max_abs_diff(s.x, expected) <= 1e-12);
  }
}

TEST_CASE("first iterate from zero is the soft threshold of the gradient step") {
  const Vec c{3.0, -0.08, 0.5};
  ProblemSpec p;
  LossShard shard;
  shard.kind = LossKind::least_squares;
  shard.unnormalized = true;
  shard.samples = dense_rows(3, {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}});
  shard.targets = c;
  p.shards.push_back(shard);
  const double w = 1.0;
  p.reg = l1_reg(w);
  p.B = std::make_shared<IdentityOp>(3);
  p.lambda = 1.0;

  const double gamma = 0.3;
  const PdState s1 = pdfp_step(make_initial_state(3, 3), p, gamma, 1.0);
  for (std::size_t i = 0; i < 3; ++i) {
    const double y = gamma * c[i];
    const double st = std::fabs(y) <= gamma * w ? 0.0 : y - (y > 0 ? gamma * w : -gamma * w);
    REQUIRE_THAT(s1.x[i], WithinAbs(st, 1e-12));
  }
}

TEST_CASE("a one-round solve equals one manual step") {
  auto p = quadratic_problem({{1.0, 0.2}, {0.1, 0.8}}, {1.0, -0.5}, {{1.0, -1.0}},
                             l1_reg(0.3), 0.5);
  const SolveResult r = pdfp_solve(p, StepSchedule::constant(1.0), 0.5, 1);
  const PdState manual = pdfp_step(make_initial_state(2, 1), p, 1.0, 0.5);
  REQUIRE(r.state.x == manual.x);
  REQUIRE(r.state.v == manual.v);
}

TEST_CASE("fused pair penalty converges to the enumerated minimizer") {
  const std::vector<Vec> a_rows{{1.0, 0.2}, {0.1, 0.8}};
  const Vec b{1.0, -0.5};
  const std::vector<Vec> b_rows{{1.0, -1.0}};
  const double mu = 0.3;
  auto p = quadratic_problem(a_rows, b, b_rows, l1_reg(mu), 0.5);

  const auto xs = oracle::l1_composite_minimizer(to_dense(a_rows), oracle::to_eigen(b),
                                                 to_dense(b_rows), mu);
  REQUIRE(xs.has_value());

  const SolveResult r = pdfp_solve(p, StepSchedule::constant(1.0), 0.5, 10000);
  const Vec xstar = oracle::from_eigen(*xs);
  REQUIRE(std::sqrt(dist_sq(r.state.x, xstar)) <= 1e-6);

  const KktResidual at_solver = kkt_residual(p, r.state.x, r.state.v, 1.0, 0.5);
  REQUIRE(at_solver.rv <= 1e-8);
  REQUIRE(at_solver.rx <= 1e-8);

  // the fixed-point residual also certifies the oracle point with the
  // solver's converged dual
  const KktResidual at_oracle = kkt_residual(p, xstar, r.state.v, 1.0, 0.5);
  REQUIRE(at_oracle.rv <= 1e-8);
  REQUIRE(at_oracle.rx <= 1e-8);
}

TEST_CASE("random small problems converge to the enumerated minimizer") {
  Rng rng(31);
  int solved = 0;
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t d = 2 + rng.below(2);  // 2 or 3
    const std::size_t m = 1 + rng.below(2);  // 1 or 2
    std::vector<Vec> a_rows(d, Vec(d));
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c)
        a_rows[r][c] = (r == c ? 1.5 : 0.0) + 0.3 * rng.uniform(-1.0, 1.0);
    Vec b(d);
    for (double& v : b) v = rng.uniform(-1.0, 1.0);
    std::vector<Vec> b_rows(m, Vec(d));
    for (auto& row : b_rows) {
      for (double& v : row) v = rng.uniform(-1.0, 1.0);
      if (nrm2(row) < 0.3) row[0] += 1.0;
    }
    const double mu = rng.uniform(0.05, 0.4);

    SparseMatrix bm;
    bm.rows = m;
    bm.cols = d;
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < d; ++c)
        if (b_rows[r][c] != 0.0) bm.entries.push_back({r, c, b_rows[r][c]});
    const auto bop = std::make_shared<SparseMatrixOp>(bm);
    const double lambda = default_coupling(*bop);

    auto p = quadratic_problem(a_rows, b, b_rows, l1_reg(mu), lambda);
    const auto xs = oracle::l1_composite_minimizer(to_dense(a_rows), oracle::to_eigen(b),
                                                   to_dense(b_rows), mu);
    REQUIRE(xs.has_value());

    const Eigen::MatrixXd q = to_dense(a_rows).transpose() * to_dense(a_rows);
    const double gamma = 1.0 / q.eigenvalues().real().maxCoeff();
    const SolveResult r = pdfp_solve(p, StepSchedule::constant(gamma), lambda, 20000);
    REQUIRE(std::sqrt(dist_sq(r.state.x, oracle::from_eigen(*xs))) <= 1e-6);
    ++solved;
  }
  REQUIRE(solved == 6);
}

TEST_CASE("objective decreases monotonically after the transient") {
  auto p = quadratic_problem({{1.0, 0.2}, {0.1, 0.8}}, {1.0, -0.5}, {{1.0, -1.0}},
                             l1_reg(0.3), 0.5);
  const SolveResult r = pdfp_solve(p, StepSchedule::constant(0.8), 0.5, 200, true);
  REQUIRE(r.objective.size() == 200);
  for (std::size_t k = 10; k + 1 < r.objective.size(); ++k)
    REQUIRE(r.objective[k + 1] <= r.objective[k] + 1e-12);
}

TEST_CASE("residuals vanish exactly at a trivial fixed point") {
  auto p = quadratic_problem({{1.0, 0.0}, {0.0, 1.0}}, {0.0, 0.0}, {{1.0, 0.0}, {0.0, 1.0}},
                             l1_reg(0.0), 1.0);
  const KktResidual at_origin = kkt_residual(p, Vec{0.0, 0.0}, Vec{0.0, 0.0}, 0.5, 1.0);
  REQUIRE(at_origin.rv == 0.0);
  REQUIRE(at_origin.rx == 0.0);

  const KktResidual off = kkt_residual(p, Vec{1.0, -2.0}, Vec{0.0, 0.0}, 0.5, 1.0);
  REQUIRE(off.rx > 0.0);
}

TEST_CASE("dual iterates stay feasible for the conjugate domain") {
  auto p = quadratic_problem({{1.0, 0.2}, {0.1, 0.8}}, {1.0, -0.5}, {{1.0, -1.0}},
                             l1_reg(0.3), 0.5);
  std::size_t calls = 0;
  const SolveResult r =
      pdfp_solve(p, StepSchedule::constant(1.0), 0.5, 50, false,
                 [&](std::size_t, const PdState& s) {
                   ++calls;
                   for (double v : s.v) REQUIRE(std::fabs(v) <= 0.3 + 1e-15);
                 });
  REQUIRE(calls == 50);
  REQUIRE(std::fabs(r.state.v[0]) <= 0.3 + 1e-15);
}

TEST_CASE("step schedules") {
  const StepSchedule dec = StepSchedule::decreasing(1.0);
  REQUIRE(step_size(dec, 0) == 2.0);
  REQUIRE(step_size(dec, 1) == 1.0);
  REQUIRE_THAT(step_size(dec, 3), WithinAbs(0.5, 1e-15));

  const StepSchedule con = StepSchedule::constant(0.05);
  REQUIRE(step_size(con, 0) == 0.05);
  REQUIRE(step_size(con, 999) == 0.05);

  REQUIRE_THROWS_AS(step_size(StepSchedule::constant(0.0), 0), std::invalid_argument);
  REQUIRE_THROWS_AS(step_size(StepSchedule::decreasing(0.0), 0), std::invalid_argument);
}

TEST_CASE("solver rejects invalid parameters") {
  auto p = quadratic_problem({{1.0, 0.0}, {0.0, 1.0}}, {1.0, 1.0}, {{1.0, -1.0}},
                             l1_reg(0.1), 0.5);
  REQUIRE_THROWS_AS(pdfp_solve(p, StepSchedule::constant(1.0), 0.0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(pdfp_step(make_initial_state(2, 1), p, -1.0, 0.5), std::invalid_argument);
}
