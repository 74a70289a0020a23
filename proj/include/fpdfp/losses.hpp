#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fpdfp/linops.hpp"
#include "fpdfp/prox.hpp"
#include "fpdfp/rng.hpp"
#include "fpdfp/vec.hpp"

namespace fpdfp {

/* Smooth per-client losses.
 *
 * logistic: (1/n_i) sum_j log(1 + exp(-b_j <s_j, x>)) + (mu1/2) ||x||^2,
 *           labels in {-1, +1}, margins evaluated overflow-safe.
 * least_squares: (1/(2 n_i)) ||A x - b||^2, or the unnormalized form
 *           (1/2) ||A x - b||^2 when `unnormalized` is set (the imaging
 *           experiments state the objective without the mean).
 */

enum class LossKind { logistic, least_squares };

struct LossShard {
  LossKind kind = LossKind::least_squares;
  CsrMatrix samples;  // n_i x d
  Vec targets;        // one per row
  double mu1 = 0.0;   // ridge weight, logistic only
  bool unnormalized = false;
};

inline void validate_shard(const LossShard& shard) {
  require(shard.samples.rows == shard.targets.size(),
          "loss shard: row count does not match target count");
  require(shard.samples.rows >= 1, "loss shard: needs at least one sample");
  if (shard.kind == LossKind::logistic)
    for (double b : shard.targets)
      require(b == 1.0 || b == -1.0, "loss shard: logistic labels must be -1 or +1");
}

// log(1 + exp(t)) without overflow.
inline double log1p_exp(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

// Logistic sigmoid, stable for both tails.
inline double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

inline double loss_value(const LossShard& shard, const Vec& x) {
  require(x.size() == shard.samples.cols, "loss_value: dimension mismatch");
  const std::size_t n = shard.samples.rows;
  double s = 0.0;
  if (shard.kind == LossKind::logistic) {
    for (std::size_t j = 0; j < n; ++j)
      s += log1p_exp(-shard.targets[j] * shard.samples.row_dot(j, x));
    return s / static_cast<double>(n) + 0.5 * shard.mu1 * nrm2_sq(x);
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double r = shard.samples.row_dot(j, x) - shard.targets[j];
    s += r * r;
  }
  return shard.unnormalized ? 0.5 * s : 0.5 * s / static_cast<double>(n);
}

// out += coeff * grad of sample j's term, where the per-sample term is scaled
// so that the mean of the n_i per-sample gradients is the shard gradient.
inline void add_sample_gradient(const LossShard& shard, std::size_t j, const Vec& x, double coeff,
                                Vec& out) {
  if (shard.kind == LossKind::logistic) {
    const double z = shard.samples.row_dot(j, x);
    const double c = -shard.targets[j] * sigmoid(-shard.targets[j] * z);
    shard.samples.add_scaled_row(j, coeff * c, out);
    return;
  }
  const double scale = shard.unnormalized ? static_cast<double>(shard.samples.rows) : 1.0;
  const double r = shard.samples.row_dot(j, x) - shard.targets[j];
  shard.samples.add_scaled_row(j, coeff * scale * r, out);
}

inline Vec shard_gradient(const LossShard& shard, const Vec& x) {
  require(x.size() == shard.samples.cols, "shard_gradient: dimension mismatch");
  Vec g(x.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(shard.samples.rows);
  for (std::size_t j = 0; j < shard.samples.rows; ++j) add_sample_gradient(shard, j, x, inv, g);
  if (shard.kind == LossKind::logistic) axpy(shard.mu1, x, g);
  return g;
}

// Mean gradient over a batch of b rows drawn without replacement.
inline Vec minibatch_gradient(const LossShard& shard, const Vec& x, std::size_t b, Rng& rng) {
  require(x.size() == shard.samples.cols, "minibatch_gradient: dimension mismatch");
  require(b >= 1 && b <= shard.samples.rows,
          "minibatch_gradient: batch size must be in [1, n_i]");
  std::vector<std::size_t> idx(shard.samples.rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.prefix_shuffle(idx, b);
  Vec g(x.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(b);
  for (std::size_t t = 0; t < b; ++t) add_sample_gradient(shard, idx[t], x, inv, g);
  if (shard.kind == LossKind::logistic) axpy(shard.mu1, x, g);
  return g;
}

// Fraction of samples with b * <s, x> > 0; a margin of exactly zero counts
// as misclassified.
inline double accuracy(const CsrMatrix& samples, const Vec& labels, const Vec& x) {
  require(samples.rows == labels.size(), "accuracy: row count does not match label count");
  require(x.size() == samples.cols, "accuracy: dimension mismatch");
  require(samples.rows >= 1, "accuracy: needs at least one sample");
  std::size_t hits = 0;
  for (std::size_t j = 0; j < samples.rows; ++j)
    if (labels[j] * samples.row_dot(j, x) > 0.0) ++hits;
  return static_cast<double>(hits) / static_cast<double>(samples.rows);
}

/* The composite problem min_x (1/N) sum_i f_i(x) + g(Bx). */
struct ProblemSpec {
  std::vector<LossShard> shards;
  RegularizerSpec reg;
  OpPtr B;
  double lambda = 0.0;  // dual coupling; solvers require > 0
};

inline void validate_problem(const ProblemSpec& problem) {
  require(!problem.shards.empty(), "problem: needs at least one shard");
  require(problem.B != nullptr, "problem: operator B is required");
  const std::size_t d = problem.B->cols();
  for (const auto& shard : problem.shards) {
    validate_shard(shard);
    require(shard.samples.cols == d, "problem: shard dimension does not match operator");
  }
  validate_reg(problem.reg, problem.B->rows());
}

inline Vec full_gradient(const ProblemSpec& problem, const Vec& x) {
  Vec g(x.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(problem.shards.size());
  for (const auto& shard : problem.shards) axpy(inv, shard_gradient(shard, x), g);
  return g;
}

inline double smooth_objective(const ProblemSpec& problem, const Vec& x) {
  double s = 0.0;
  for (const auto& shard : problem.shards) s += loss_value(shard, x);
  return s / static_cast<double>(problem.shards.size());
}

inline double composite_objective(const ProblemSpec& problem, const Vec& x) {
  return smooth_objective(problem, x) + reg_value(problem.reg, matvec(*problem.B, x));
}

}  // namespace fpdfp
