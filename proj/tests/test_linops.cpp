#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <memory>

#include "fpdfp/linops.hpp"
#include "fpdfp/rng.hpp"
#include "oracles.hpp"

using namespace fpdfp;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SparseMatrix random_sparse(std::size_t rows, std::size_t cols, double density, Rng& rng) {
  SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (rng.uniform() < density) m.entries.push_back({r, c, rng.uniform(-2.0, 2.0)});
  return m;
}

Vec random_vec(std::size_t n, Rng& rng) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("coo validation reports coordinates") {
  SparseMatrix m;
  m.rows = 2;
  m.cols = 2;
  m.entries = {{0, 0, 1.0}, {2, 0, 1.0}};
  REQUIRE_THROWS_WITH(validate_coo(m), ContainsSubstring("(2,0)"));

  m.entries = {{0, 0, 1.0}, {0, 0, 2.0}};
  REQUIRE_THROWS_WITH(validate_coo(m), ContainsSubstring("duplicate"));

  m.entries = {{1, 1, std::nan("")}};
  REQUIRE_THROWS_WITH(validate_coo(m), ContainsSubstring("non-finite"));
}

TEST_CASE("csr compilation sorts and applies correctly") {
  SparseMatrix m;
  m.rows = 2;
  m.cols = 3;
  m.entries = {{1, 2, 5.0}, {0, 1, 2.0}, {1, 0, -1.0}};
  const CsrMatrix csr = compile_csr(m);
  REQUIRE(csr.nnz() == 3);
  const Vec x{1.0, 10.0, 100.0};
  REQUIRE(csr.row_dot(0, x) == 20.0);
  REQUIRE(csr.row_dot(1, x) == 499.0);
}

TEST_CASE("identity returns its input both ways") {
  IdentityOp id(3);
  const Vec x{1.0, 2.0, 3.0};
  REQUIRE(matvec(id, x) == x);
  REQUIRE(matvec_adjoint(id, x) == x);
}

TEST_CASE("apply rejects wrong shapes naming both") {
  IdentityOp id(3);
  REQUIRE_THROWS_WITH(matvec(id, Vec(4, 0.0)), ContainsSubstring("3x3"));
  REQUIRE_THROWS_WITH(matvec_adjoint(id, Vec(2, 0.0)), ContainsSubstring("size 2"));
}

TEST_CASE("single-row matrix adjoint by hand") {
  SparseMatrix m;
  m.rows = 1;
  m.cols = 2;
  m.entries = {{0, 0, 1.0}, {0, 1, -1.0}};
  SparseMatrixOp op(m);
  const Vec y{2.0};
  const Vec xt = matvec_adjoint(op, y);
  REQUIRE(xt == Vec{2.0, -2.0});
}

TEST_CASE("sparse apply and adjoint match the dense oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 10; ++trial) {
    const SparseMatrix m = random_sparse(5, 4, 0.5, rng);
    SparseMatrixOp op(m);
    const Eigen::MatrixXd dm = oracle::dense(m);

    const Vec x = random_vec(4, rng), y = random_vec(5, rng);
    const Eigen::VectorXd bx = dm * oracle::to_eigen(x);
    const Eigen::VectorXd bty = dm.transpose() * oracle::to_eigen(y);
    REQUIRE((oracle::to_eigen(matvec(op, x)) - bx).norm() < 1e-12);
    REQUIRE((oracle::to_eigen(matvec_adjoint(op, y)) - bty).norm() < 1e-12);

    // <Bx, y> == <x, B^T y> within 1e-10 relative error
    const double lhs = dot(matvec(op, x), y), rhs = dot(x, matvec_adjoint(op, y));
    REQUIRE_THAT(lhs, WithinAbs(rhs, 1e-10 * (1.0 + std::fabs(rhs))));
  }
}

TEST_CASE("1-D forward differences with a zero far edge") {
  DiscreteGradientOp g({3});
  const Vec x{1.0, 3.0, 6.0};
  REQUIRE(matvec(g, x) == Vec{2.0, 3.0, 0.0});
}

TEST_CASE("2x2 gradient stencil by hand, axes interleaved per pixel") {
  DiscreteGradientOp g({2, 2});
  REQUIRE(g.rows() == 8);
  const Vec x{1.0, 2.0, 4.0, 8.0};  // row-major: (0,0)=1 (0,1)=2 (1,0)=4 (1,1)=8
  // per pixel: [axis0 = down, axis1 = right]
  REQUIRE(matvec(g, x) == Vec{3.0, 1.0, 6.0, 0.0, 0.0, 4.0, 0.0, 0.0});
}

TEST_CASE("gradient of a constant image is zero") {
  DiscreteGradientOp g({4, 5});
  const Vec x(20, 3.25);
  const Vec y = matvec(g, x);
  REQUIRE(max_abs(y) == 0.0);
}

TEST_CASE("gradient adjoint matches the dense oracle") {
  Rng rng(55);
  DiscreteGradientOp g({3, 4});
  const Eigen::MatrixXd dm = oracle::dense(g);
  const Vec x = random_vec(12, rng), y = random_vec(24, rng);
  REQUIRE((oracle::to_eigen(matvec_adjoint(g, y)) - dm.transpose() * oracle::to_eigen(y)).norm() <
          1e-12);
  const double lhs = dot(matvec(g, x), y), rhs = dot(x, matvec_adjoint(g, y));
  REQUIRE_THAT(lhs, WithinAbs(rhs, 1e-10 * (1.0 + std::fabs(rhs))));
}

TEST_CASE("vertical stack [G; I] by hand") {
  SparseMatrix gm;
  gm.rows = 1;
  gm.cols = 2;
  gm.entries = {{0, 0, 1.0}, {0, 1, -1.0}};
  std::vector<OpPtr> blocks{std::make_shared<SparseMatrixOp>(gm), std::make_shared<IdentityOp>(2)};
  VStackOp stack(std::move(blocks));
  const Vec x{4.0, 1.0};
  REQUIRE(matvec(stack, x) == Vec{3.0, 4.0, 1.0});

  const Vec y{1.0, 10.0, 100.0};
  // adjoint: G^T y_head + y_tail
  REQUIRE(matvec_adjoint(stack, y) == Vec{11.0, 99.0});
}

TEST_CASE("vertical stack rejects column mismatch") {
  std::vector<OpPtr> blocks{std::make_shared<IdentityOp>(2), std::make_shared<IdentityOp>(3)};
  REQUIRE_THROWS_WITH(VStackOp(std::move(blocks)), ContainsSubstring("column mismatch"));
}

TEST_CASE("spectral norm of identity is one") {
  IdentityOp id(4);
  const SpectralEstimate est = spectral_norm_sq(id);
  REQUIRE(est.converged);
  REQUIRE_THAT(est.value, WithinAbs(1.0, 1e-8));
}

TEST_CASE("spectral norm of diag(1,4) is sixteen") {
  SparseMatrix m;
  m.rows = m.cols = 2;
  m.entries = {{0, 0, 1.0}, {1, 1, 4.0}};
  SparseMatrixOp op(m);
  const SpectralEstimate est = spectral_norm_sq(op);
  REQUIRE(est.converged);
  REQUIRE_THAT(est.value, WithinRel(16.0, 1e-6));
}

TEST_CASE("spectral norm of the n=2 forward difference is two") {
  DiscreteGradientOp g({2});
  const SpectralEstimate est = spectral_norm_sq(g);
  REQUIRE(est.converged);
  REQUIRE_THAT(est.value, WithinRel(2.0, 1e-6));
}

TEST_CASE("spectral norm matches the eigensolve oracle on random operators") {
  Rng rng(77);
  for (int trial = 0; trial < 8; ++trial) {
    const SparseMatrix m = random_sparse(6, 4, 0.6, rng);
    SparseMatrixOp op(m);
    const Eigen::MatrixXd dm = oracle::dense(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dm * dm.transpose());
    const double truth = es.eigenvalues().maxCoeff();
    if (truth < 1e-12) continue;
    const SpectralEstimate est = spectral_norm_sq(op, 1e-10, 20000);
    REQUIRE_THAT(est.value, WithinRel(truth, 1e-5));
  }
}

TEST_CASE("estimate dominates the Rayleigh quotient of random unit vectors") {
  Rng rng(78);
  DiscreteGradientOp g({5, 5});
  const SpectralEstimate est = spectral_norm_sq(g);
  for (int trial = 0; trial < 20; ++trial) {
    Vec u = random_vec(g.rows(), rng);
    scale(u, 1.0 / nrm2(u));
    const Vec w = matvec(g, matvec_adjoint(g, u));
    REQUIRE(est.value >= dot(u, w) - 1e-6);
  }
}

TEST_CASE("default coupling inverts the spectral estimate") {
  IdentityOp id(3);
  REQUIRE_THAT(default_coupling(id), WithinAbs(1.0, 1e-8));

  SparseMatrix zero;
  zero.rows = zero.cols = 2;
  SparseMatrixOp zop(zero);
  REQUIRE_THROWS_WITH(default_coupling(zop), ContainsSubstring("zero"));
}
