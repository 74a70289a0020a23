#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fpdfp/rng.hpp"
#include "fpdfp/vec.hpp"

namespace fpdfp {

/* Structured linear operators for the composite penalty g(Bx).
 *
 * Everything the solvers need from B is apply, apply_adjoint and an estimate
 * of ||B||^2 = rho_max(B B^T); no dense algebra. Concrete shapes: sparse
 * matrix (coordinate list at rest, compressed rows for application), identity,
 * N-dimensional forward-difference gradient, and vertical stacks like [G; I].
 */

struct Triplet {
  std::size_t r = 0, c = 0;
  double v = 0.0;
};

// Coordinate-list sparse matrix: the at-rest/interchange form.
struct SparseMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<Triplet> entries;
};

// Compressed-row form for repeated application; also the dataset row container.
struct CsrMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> row_ptr;  // size rows + 1
  std::vector<std::size_t> col;
  std::vector<double> val;

  double row_dot(std::size_t r, const Vec& x) const {
    double s = 0.0;
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += val[k] * x[col[k]];
    return s;
  }

  // out += alpha * row_r
  void add_scaled_row(std::size_t r, double alpha, Vec& out) const {
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) out[col[k]] += alpha * val[k];
  }

  std::size_t nnz() const { return col.size(); }
};

inline void validate_coo(const SparseMatrix& m) {
  for (const auto& t : m.entries) {
    if (t.r >= m.rows || t.c >= m.cols)
      throw std::invalid_argument("sparse matrix: entry (" + std::to_string(t.r) + "," +
                                  std::to_string(t.c) + ") outside " + std::to_string(m.rows) +
                                  "x" + std::to_string(m.cols));
    if (!std::isfinite(t.v))
      throw std::invalid_argument("sparse matrix: non-finite value at (" + std::to_string(t.r) +
                                  "," + std::to_string(t.c) + ")");
  }
  std::vector<std::pair<std::size_t, std::size_t>> idx;
  idx.reserve(m.entries.size());
  for (const auto& t : m.entries) idx.emplace_back(t.r, t.c);
  std::sort(idx.begin(), idx.end());
  auto dup = std::adjacent_find(idx.begin(), idx.end());
  if (dup != idx.end())
    throw std::invalid_argument("sparse matrix: duplicate entry at (" + std::to_string(dup->first) +
                                "," + std::to_string(dup->second) + ")");
}

inline CsrMatrix compile_csr(const SparseMatrix& m) {
  validate_coo(m);
  CsrMatrix csr;
  csr.rows = m.rows;
  csr.cols = m.cols;
  csr.row_ptr.assign(m.rows + 1, 0);
  std::vector<Triplet> sorted = m.entries;
  std::sort(sorted.begin(), sorted.end(), [](const Triplet& a, const Triplet& b) {
    return a.r != b.r ? a.r < b.r : a.c < b.c;
  });
  for (const auto& t : sorted) ++csr.row_ptr[t.r + 1];
  for (std::size_t i = 0; i < m.rows; ++i) csr.row_ptr[i + 1] += csr.row_ptr[i];
  csr.col.reserve(sorted.size());
  csr.val.reserve(sorted.size());
  for (const auto& t : sorted) {
    csr.col.push_back(t.c);
    csr.val.push_back(t.v);
  }
  return csr;
}

class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual std::size_t rows() const = 0;
  virtual std::size_t cols() const = 0;
  virtual void apply(std::span<const double> x, std::span<double> y) const = 0;
  virtual void apply_adjoint(std::span<const double> y, std::span<double> x) const = 0;
};

using OpPtr = std::shared_ptr<const LinearOperator>;

inline void check_apply_shapes(const LinearOperator& op, std::size_t xn, std::size_t yn,
                               const char* what) {
  if (xn != op.cols() || yn != op.rows())
    throw std::invalid_argument(std::string(what) + ": operator is " + std::to_string(op.rows()) +
                                "x" + std::to_string(op.cols()) + ", got input " +
                                std::to_string(xn) + " and output " + std::to_string(yn));
}

// Allocating free-function form. Named apart from the members on purpose:
// a free apply() would make std::apply an ADL candidate for vector
// arguments and win overload resolution for mutable or temporary ones.
inline Vec matvec(const LinearOperator& op, const Vec& x) {
  if (x.size() != op.cols())
    throw std::invalid_argument("matvec: operator is " + std::to_string(op.rows()) + "x" +
                                std::to_string(op.cols()) + ", got vector of size " +
                                std::to_string(x.size()));
  Vec y(op.rows(), 0.0);
  op.apply(x, y);
  return y;
}

inline Vec matvec_adjoint(const LinearOperator& op, const Vec& y) {
  if (y.size() != op.rows())
    throw std::invalid_argument("matvec_adjoint: operator is " + std::to_string(op.rows()) + "x" +
                                std::to_string(op.cols()) + ", got vector of size " +
                                std::to_string(y.size()));
  Vec x(op.cols(), 0.0);
  op.apply_adjoint(y, x);
  return x;
}

class IdentityOp final : public LinearOperator {
 public:
  explicit IdentityOp(std::size_t n) : n_(n) {}
  std::size_t rows() const override { return n_; }
  std::size_t cols() const override { return n_; }
  void apply(std::span<const double> x, std::span<double> y) const override {
    check_apply_shapes(*this, x.size(), y.size(), "identity apply");
    std::copy(x.begin(), x.end(), y.begin());
  }
  void apply_adjoint(std::span<const double> y, std::span<double> x) const override {
    check_apply_shapes(*this, x.size(), y.size(), "identity adjoint");
    std::copy(y.begin(), y.end(), x.begin());
  }

 private:
  std::size_t n_;
};

class SparseMatrixOp final : public LinearOperator {
 public:
  explicit SparseMatrixOp(const SparseMatrix& m) : csr_(compile_csr(m)) {}
  explicit SparseMatrixOp(CsrMatrix csr) : csr_(std::move(csr)) {}
  std::size_t rows() const override { return csr_.rows; }
  std::size_t cols() const override { return csr_.cols; }
  void apply(std::span<const double> x, std::span<double> y) const override {
    check_apply_shapes(*this, x.size(), y.size(), "sparse apply");
    for (std::size_t r = 0; r < csr_.rows; ++r) {
      double s = 0.0;
      for (std::size_t k = csr_.row_ptr[r]; k < csr_.row_ptr[r + 1]; ++k)
        s += csr_.val[k] * x[csr_.col[k]];
      y[r] = s;
    }
  }
  void apply_adjoint(std::span<const double> y, std::span<double> x) const override {
    check_apply_shapes(*this, x.size(), y.size(), "sparse adjoint");
    std::fill(x.begin(), x.end(), 0.0);
    for (std::size_t r = 0; r < csr_.rows; ++r)
      for (std::size_t k = csr_.row_ptr[r]; k < csr_.row_ptr[r + 1]; ++k)
        x[csr_.col[k]] += csr_.val[k] * y[r];
  }
  const CsrMatrix& csr() const { return csr_; }

 private:
  CsrMatrix csr_;
};

/* Forward differences with Neumann boundary: the difference that would cross
 * the far edge of an axis is a structural zero row, so rows() == cols() *
 * axes.size() always. Output interleaves axes per pixel (row = pixel *
 * n_axes + axis_index), which makes the isotropic-TV groups, the tuples of
 * directional differences at one pixel, contiguous.
 */
class DiscreteGradientOp final : public LinearOperator {
 public:
  DiscreteGradientOp(std::vector<std::size_t> dims, std::vector<std::size_t> axes)
      : dims_(std::move(dims)), axes_(std::move(axes)) {
    require(!dims_.empty(), "discrete gradient: dims must be nonempty");
    require(!axes_.empty(), "discrete gradient: axes must be nonempty");
    n_ = 1;
    for (std::size_t d : dims_) {
      require(d >= 1, "discrete gradient: each dim must be >= 1");
      n_ *= d;
    }
    for (std::size_t a : axes_)
      require(a < dims_.size(), "discrete gradient: axis index out of range");
    // Row-major strides, last axis fastest.
    strides_.assign(dims_.size(), 1);
    for (std::size_t i = dims_.size(); i-- > 1;) strides_[i - 1] = strides_[i] * dims_[i];
  }

  explicit DiscreteGradientOp(std::vector<std::size_t> dims)
      : DiscreteGradientOp(dims, all_axes(dims)) {}

  std::size_t rows() const override { return n_ * axes_.size(); }
  std::size_t cols() const override { return n_; }
  std::size_t n_axes() const { return axes_.size(); }

  void apply(std::span<const double> x, std::span<double> y) const override {
    check_apply_shapes(*this, x.size(), y.size(), "gradient apply");
    const std::size_t na = axes_.size();
    for (std::size_t p = 0; p < n_; ++p)
      for (std::size_t ai = 0; ai < na; ++ai) {
        const std::size_t a = axes_[ai];
        y[p * na + ai] = interior(p, a) ? x[p + strides_[a]] - x[p] : 0.0;
      }
  }

  void apply_adjoint(std::span<const double> y, std::span<double> x) const override {
    check_apply_shapes(*this, x.size(), y.size(), "gradient adjoint");
    std::fill(x.begin(), x.end(), 0.0);
    const std::size_t na = axes_.size();
    for (std::size_t p = 0; p < n_; ++p)
      for (std::size_t ai = 0; ai < na; ++ai) {
        const std::size_t a = axes_[ai];
        if (interior(p, a)) {
          const double v = y[p * na + ai];
          x[p + strides_[a]] += v;
          x[p] -= v;
        }
      }
  }

 private:
  static std::vector<std::size_t> all_axes(const std::vector<std::size_t>& dims) {
    std::vector<std::size_t> a(dims.size());
    std::iota(a.begin(), a.end(), std::size_t{0});
    return a;
  }
  bool interior(std::size_t p, std::size_t axis) const {
    return (p / strides_[axis]) % dims_[axis] + 1 < dims_[axis];
  }

  std::vector<std::size_t> dims_, axes_, strides_;
  std::size_t n_ = 0;
};

class VStackOp final : public LinearOperator {
 public:
  explicit VStackOp(std::vector<OpPtr> blocks) : blocks_(std::move(blocks)) {
    require(!blocks_.empty(), "vstack: needs at least one block");
    cols_ = blocks_.front()->cols();
    rows_ = 0;
    for (const auto& b : blocks_) {
      if (b->cols() != cols_)
        throw std::invalid_argument("vstack: column mismatch, " + std::to_string(b->cols()) +
                                    " vs " + std::to_string(cols_));
      rows_ += b->rows();
    }
  }
  std::size_t rows() const override { return rows_; }
  std::size_t cols() const override { return cols_; }
  void apply(std::span<const double> x, std::span<double> y) const override {
    check_apply_shapes(*this, x.size(), y.size(), "vstack apply");
    std::size_t off = 0;
    for (const auto& b : blocks_) {
      b->apply(x, y.subspan(off, b->rows()));
      off += b->rows();
    }
  }
  void apply_adjoint(std::span<const double> y, std::span<double> x) const override {
    check_apply_shapes(*this, x.size(), y.size(), "vstack adjoint");
    std::fill(x.begin(), x.end(), 0.0);
    Vec tmp(cols_, 0.0);
    std::size_t off = 0;
    for (const auto& b : blocks_) {
      b->apply_adjoint(y.subspan(off, b->rows()), tmp);
      for (std::size_t i = 0; i < cols_; ++i) x[i] += tmp[i];
      off += b->rows();
    }
  }

 private:
  std::vector<OpPtr> blocks_;
  std::size_t rows_ = 0, cols_ = 0;
};

struct SpectralEstimate {
  double value = 0.0;  // estimate of rho_max(B B^T) = ||B||^2
  bool converged = false;
  std::size_t iterations = 0;
};

// Power iteration on B B^T from a seeded start; callers should treat
// converged == false as a warning, the value is still the best estimate.
inline SpectralEstimate spectral_norm_sq(const LinearOperator& op, double tol = 1e-8,
                                         std::size_t max_iter = 5000,
                                         std::uint64_t seed = 0x5eedULL) {
  SpectralEstimate est;
  const std::size_t m = op.rows();
  if (m == 0 || op.cols() == 0) {
    est.converged = true;
    return est;
  }
  Rng rng(Rng::key(seed, 0xb0b));
  Vec y(m);
  for (double& v : y) v = rng.uniform(-1.0, 1.0);
  double yn = nrm2(y);
  if (yn == 0.0) y[0] = yn = 1.0;
  scale(y, 1.0 / yn);

  Vec z(op.cols()), w(m);
  double lambda_prev = 0.0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    op.apply_adjoint(y, z);
    op.apply(z, w);
    const double lambda = dot(y, w);  // Rayleigh quotient of B B^T
    const double wn = nrm2(w);
    est.value = lambda;
    est.iterations = it;
    if (wn == 0.0) {  // start vector lies in the kernel of B^T
      est.value = 0.0;
      est.converged = true;
      return est;
    }
    for (std::size_t i = 0; i < m; ++i) y[i] = w[i] / wn;
    if (it > 1 && std::fabs(lambda - lambda_prev) <= tol * std::max(1.0, std::fabs(lambda))) {
      est.converged = true;
      return est;
    }
    lambda_prev = lambda;
  }
  return est;
}

// Default coupling for the primal-dual updates: lambda = 1 / rho_max(B B^T).
inline double default_coupling(const LinearOperator& op, std::uint64_t seed = 0x5eedULL) {
  const SpectralEstimate est = spectral_norm_sq(op, 1e-8, 5000, seed);
  require(est.value > 0.0, "default coupling: operator norm estimate is zero");
  return 1.0 / est.value;
}

}  // namespace fpdfp
