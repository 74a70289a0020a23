#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "fpdfp/vec.hpp"

namespace fpdfp {

/* Nonsmooth penalties g and their proximal maps.
 *
 * Two shapes cover the toolkit: a weighted l1 norm (sparse / fused penalties
 * through g(Bx)) and a sum of per-group l2 norms (isotropic TV when the
 * groups are the per-pixel difference tuples). Both conjugates are indicators
 * of dual balls, so prox of sigma * g_conj is a projection for every sigma > 0;
 * the sigma parameter is kept in the interface because the solver passes
 * lambda/gamma through it.
 */

enum class RegKind { l1, group_l2 };

struct RegularizerSpec {
  RegKind kind = RegKind::l1;
  double weight = 0.0;
  // group_l2 only: elements per group, contiguous; 0 means one group spanning
  // the whole vector. Must divide the vector length.
  std::size_t group_size = 0;
};

inline RegularizerSpec l1_reg(double weight) { return {RegKind::l1, weight, 0}; }
inline RegularizerSpec group_l2_reg(double weight, std::size_t group_size = 0) {
  return {RegKind::group_l2, weight, group_size};
}

inline void validate_reg(const RegularizerSpec& spec, std::size_t n) {
  require(spec.weight >= 0.0, "regularizer: weight must be >= 0");
  if (spec.kind == RegKind::group_l2 && spec.group_size != 0 && n % spec.group_size != 0)
    throw std::invalid_argument("regularizer: group size " + std::to_string(spec.group_size) +
                                " does not partition length " + std::to_string(n));
}

inline double reg_value(const RegularizerSpec& spec, const Vec& z) {
  validate_reg(spec, z.size());
  if (spec.kind == RegKind::l1) {
    double s = 0.0;
    for (double v : z) s += std::fabs(v);
    return spec.weight * s;
  }
  const std::size_t gs = spec.group_size == 0 ? z.size() : spec.group_size;
  double s = 0.0;
  for (std::size_t g = 0; g * gs < z.size(); ++g) {
    double sq = 0.0;
    for (std::size_t i = g * gs; i < (g + 1) * gs; ++i) sq += z[i] * z[i];
    s += std::sqrt(sq);
  }
  return spec.weight * s;
}

// prox of step * g: argmin_u step*g(u) + 0.5 ||u - y||^2
inline Vec prox_g(const RegularizerSpec& spec, const Vec& y, double step) {
  validate_reg(spec, y.size());
  require(step >= 0.0, "prox: step must be >= 0");
  Vec out(y.size());
  const double t = step * spec.weight;
  if (spec.kind == RegKind::l1) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double a = std::fabs(y[i]);
      out[i] = a <= t ? 0.0 : (y[i] > 0 ? y[i] - t : y[i] + t);
    }
    return out;
  }
  const std::size_t gs = spec.group_size == 0 ? y.size() : spec.group_size;
  for (std::size_t g = 0; g * gs < y.size(); ++g) {
    double sq = 0.0;
    for (std::size_t i = g * gs; i < (g + 1) * gs; ++i) sq += y[i] * y[i];
    const double n = std::sqrt(sq);
    const double f = n <= t ? 0.0 : 1.0 - t / n;
    for (std::size_t i = g * gs; i < (g + 1) * gs; ++i) out[i] = f * y[i];
  }
  return out;
}

// prox of sigma * g_conj: projection onto the dual ball of g, independent of
// sigma (g_conj is an indicator). l1 -> box [-w, w]; group_l2 -> per-group l2
// ball of radius w.
inline Vec prox_g_conj(const RegularizerSpec& spec, const Vec& y, double /*sigma*/) {
  validate_reg(spec, y.size());
  Vec out(y.size());
  const double w = spec.weight;
  if (spec.kind == RegKind::l1) {
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = std::clamp(y[i], -w, w);
    return out;
  }
  const std::size_t gs = spec.group_size == 0 ? y.size() : spec.group_size;
  for (std::size_t g = 0; g * gs < y.size(); ++g) {
    double sq = 0.0;
    for (std::size_t i = g * gs; i < (g + 1) * gs; ++i) sq += y[i] * y[i];
    const double n = std::sqrt(sq);
    const double f = n <= w ? 1.0 : w / n;
    for (std::size_t i = g * gs; i < (g + 1) * gs; ++i) out[i] = f * y[i];
  }
  return out;
}

// Decomposition residual || prox_{gamma g}(y) + gamma prox_{g_conj/gamma}(y/gamma) - y ||_2.
// Identically zero in exact arithmetic for every proper closed convex g.
inline double moreau_residual(const RegularizerSpec& spec, const Vec& y, double gamma) {
  require(gamma > 0.0, "moreau_residual: gamma must be > 0");
  const Vec p = prox_g(spec, y, gamma);
  Vec ys(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) ys[i] = y[i] / gamma;
  const Vec q = prox_g_conj(spec, ys, 1.0 / gamma);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = p[i] + gamma * q[i] - y[i];
    s += r * r;
  }
  return std::sqrt(s);
}

}  // namespace fpdfp
