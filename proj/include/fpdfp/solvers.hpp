#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "fpdfp/linops.hpp"
#include "fpdfp/losses.hpp"
#include "fpdfp/prox.hpp"
#include "fpdfp/vec.hpp"

namespace fpdfp {

/* Serial primal-dual fixed-point iteration for min f(x) + g(Bx):
 *
 *   x_{k+1/2} = x_k - gamma grad_f(x_k)
 *   v_{k+1}   = prox_{(lambda/gamma) g*}( (lambda/gamma) B x_{k+1/2}
 *                                         + (I - lambda B B^T) v_k )
 *   x_{k+1}   = x_{k+1/2} - gamma B^T v_{k+1}
 *
 * Converges for 0 < gamma < 2 beta (beta the inverse Lipschitz constant of
 * grad f) and 0 < lambda <= 1 / rho_max(B B^T). The federated variant reuses
 * exactly this arithmetic for its local client step; when the federation
 * collapses to one full-gradient client the only divergence is the server
 * reconstructing x from the uploaded increment, which stays at rounding
 * error.
 */

struct PdState {
  Vec x;
  Vec v;
};

inline PdState make_initial_state(std::size_t d, std::size_t m) {
  return PdState{Vec(d, 0.0), Vec(m, 0.0)};
}

// Dual prox argument z = (lambda/gamma) B x_half + (I - lambda B B^T) v,
// computed as written so the B = I, lambda = 1 case cancels exactly.
inline Vec dual_prox_argument(const LinearOperator& B, const Vec& x_half, const Vec& v,
                              double gamma, double lambda) {
  const Vec bx = matvec(B, x_half);
  const Vec bbtv = matvec(B, matvec_adjoint(B, v));
  Vec z(v.size());
  const double sig = lambda / gamma;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = sig * bx[i] + (v[i] - lambda * bbtv[i]);
  return z;
}

// One full step given the gradient already evaluated at x.
inline PdState pdfp_step_with_gradient(const PdState& state, const Vec& grad,
                                       const RegularizerSpec& reg, const LinearOperator& B,
                                       double gamma, double lambda) {
  require(gamma > 0.0, "pdfp step: gamma must be > 0");
  require(lambda > 0.0, "pdfp step: lambda must be > 0");
  require_same_size(state.x, grad, "pdfp step");
  Vec x_half(state.x.size());
  for (std::size_t i = 0; i < x_half.size(); ++i) x_half[i] = state.x[i] - gamma * grad[i];
  const Vec z = dual_prox_argument(B, x_half, state.v, gamma, lambda);
  Vec v_next = prox_g_conj(reg, z, lambda / gamma);
  const Vec btv = matvec_adjoint(B, v_next);
  Vec x_next(x_half.size());
  for (std::size_t i = 0; i < x_next.size(); ++i) x_next[i] = x_half[i] - gamma * btv[i];
  return PdState{std::move(x_next), std::move(v_next)};
}

inline PdState pdfp_step(const PdState& state, const ProblemSpec& problem, double gamma,
                         double lambda) {
  return pdfp_step_with_gradient(state, full_gradient(problem, state.x), problem.reg, *problem.B,
                                 gamma, lambda);
}

struct KktResidual {
  double rv = 0.0;  // dual fixed-point deviation ||v - T(x, v)||
  double rx = 0.0;  // primal stationarity ||gamma grad_f(x) + gamma B^T T(x, v)||
};

// Deviation from the fixed-point characterization of optimality: a pair
// (x*, v*) is a saddle point iff both residuals vanish.
inline KktResidual kkt_residual(const ProblemSpec& problem, const Vec& x, const Vec& v,
                                double gamma, double lambda) {
  require(gamma > 0.0, "kkt_residual: gamma must be > 0");
  require(lambda > 0.0, "kkt_residual: lambda must be > 0");
  const Vec grad = full_gradient(problem, x);
  Vec x_half(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x_half[i] = x[i] - gamma * grad[i];
  const Vec z = dual_prox_argument(*problem.B, x_half, v, gamma, lambda);
  const Vec t = prox_g_conj(problem.reg, z, lambda / gamma);
  KktResidual res;
  res.rv = std::sqrt(dist_sq(v, t));
  const Vec btt = matvec_adjoint(*problem.B, t);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = gamma * grad[i] + gamma * btt[i];
    s += r * r;
  }
  res.rx = std::sqrt(s);
  return res;
}

struct StepSchedule {
  enum class Kind { constant, decreasing } kind = Kind::constant;
  double gamma = 1.0;  // constant value
  double d1 = 1.0;     // decreasing: gamma_k = 2 / (d1 k + 1)

  static StepSchedule constant(double gamma) { return {Kind::constant, gamma, 0.0}; }
  static StepSchedule decreasing(double d1) { return {Kind::decreasing, 0.0, d1}; }
};

inline double step_size(const StepSchedule& s, std::size_t k) {
  if (s.kind == StepSchedule::Kind::constant) {
    require(s.gamma > 0.0, "step schedule: constant gamma must be > 0");
    return s.gamma;
  }
  require(s.d1 > 0.0, "step schedule: d1 must be > 0");
  return 2.0 / (s.d1 * static_cast<double>(k) + 1.0);
}

struct SolveResult {
  PdState state;
  std::vector<double> objective;  // per-round composite objective, if recorded
};

// Serial solve with exact full gradients. The callback (if any) sees the
// state after each round; record_objective appends f + g(Bx) per round.
inline SolveResult pdfp_solve(const ProblemSpec& problem, const StepSchedule& schedule,
                              double lambda, std::size_t rounds, bool record_objective = false,
                              const std::function<void(std::size_t, const PdState&)>& callback = {}) {
  validate_problem(problem);
  require(lambda > 0.0, "pdfp_solve: lambda must be > 0");
  SolveResult result;
  result.state = make_initial_state(problem.B->cols(), problem.B->rows());
  for (std::size_t k = 0; k < rounds; ++k) {
    result.state = pdfp_step(result.state, problem, step_size(schedule, k), lambda);
    if (record_objective) result.objective.push_back(composite_objective(problem, result.state.x));
    if (callback) callback(k, result.state);
  }
  return result;
}

}  // namespace fpdfp
