#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fpdfp/prox.hpp"
#include "fpdfp/rng.hpp"

using namespace fpdfp;
using Catch::Matchers::WithinAbs;

namespace {

Vec random_vec(std::size_t n, Rng& rng, double scale = 3.0) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

}  // namespace

TEST_CASE("l1 prox soft-thresholds") {
  const Vec y{2.0, -0.5, 0.1};
  REQUIRE(prox_g(l1_reg(1.0), y, 1.0) == Vec{1.0, 0.0, 0.0});
}

TEST_CASE("zero weight makes prox the identity") {
  Rng rng(5);
  const Vec y = random_vec(7, rng);
  REQUIRE(prox_g(l1_reg(0.0), y, 2.5) == y);
  REQUIRE(prox_g(group_l2_reg(0.0, 0), y, 0.7) == y);
}

TEST_CASE("single-group shrinkage on (3,4)") {
  const Vec y{3.0, 4.0};
  const Vec p = prox_g(group_l2_reg(1.0, 0), y, 1.0);
  REQUIRE_THAT(p[0], WithinAbs(2.4, 1e-15));
  REQUIRE_THAT(p[1], WithinAbs(3.2, 1e-15));

  // threshold at or past the norm zeroes the group
  const Vec z = prox_g(group_l2_reg(1.0, 0), y, 5.0);
  REQUIRE(z == Vec{0.0, 0.0});
}

TEST_CASE("grouped shrinkage acts per group") {
  // groups (3,4) and (0,0): second group stays zero, no division blowup
  const Vec y{3.0, 4.0, 0.0, 0.0};
  const Vec p = prox_g(group_l2_reg(2.5, 2), y, 1.0);
  REQUIRE_THAT(p[0], WithinAbs(1.5, 1e-15));
  REQUIRE_THAT(p[1], WithinAbs(2.0, 1e-15));
  REQUIRE(p[2] == 0.0);
  REQUIRE(p[3] == 0.0);
}

TEST_CASE("group size must partition the vector") {
  REQUIRE_THROWS_AS(prox_g(group_l2_reg(1.0, 3), Vec(4, 1.0), 1.0), std::invalid_argument);
}

TEST_CASE("conjugate prox clips to the linf ball") {
  const Vec y{2.0, -0.5};
  REQUIRE(prox_g_conj(l1_reg(1.0), y, 0.37) == Vec{1.0, -0.5});
}

TEST_CASE("conjugate prox projects groups radially") {
  const Vec y{3.0, 4.0};
  const Vec p = prox_g_conj(group_l2_reg(1.0, 0), y, 1.0);
  REQUIRE_THAT(p[0], WithinAbs(0.6, 1e-15));
  REQUIRE_THAT(p[1], WithinAbs(0.8, 1e-15));
}

TEST_CASE("conjugate prox is idempotent and sigma independent") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const RegularizerSpec spec = trial % 2 == 0 ? l1_reg(rng.uniform(0.0, 2.0))
                                                : group_l2_reg(rng.uniform(0.0, 2.0), 3);
    const Vec y = random_vec(6, rng);
    const Vec p1 = prox_g_conj(spec, y, 0.5);
    const Vec p2 = prox_g_conj(spec, y, 50.0);
    REQUIRE(p1 == p2);
    // Clipping is exactly idempotent; the radial group projection lands on
    // the sphere only up to rounding, so reprojection may move a last ulp.
    if (spec.kind == RegKind::l1) {
      REQUIRE(prox_g_conj(spec, p1, 0.5) == p1);
    } else {
      REQUIRE(max_abs_diff(prox_g_conj(spec, p1, 0.5), p1) <= 1e-15);
    }
  }
}

TEST_CASE("prox is nonexpansive") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const RegularizerSpec spec = trial % 2 == 0 ? l1_reg(rng.uniform(0.0, 3.0))
                                                : group_l2_reg(rng.uniform(0.0, 3.0), 2);
    const double step = rng.uniform(0.01, 4.0);
    const Vec a = random_vec(6, rng), b = random_vec(6, rng);
    const double num = std::sqrt(dist_sq(prox_g(spec, a, step), prox_g(spec, b, step)));
    const double den = std::sqrt(dist_sq(a, b));
    REQUIRE(num <= den + 1e-12);
  }
}

TEST_CASE("reg_value evaluates both norms") {
  REQUIRE_THAT(reg_value(l1_reg(2.0), Vec{1.0, -3.0, 0.5}), WithinAbs(9.0, 1e-15));
  REQUIRE_THAT(reg_value(group_l2_reg(2.0, 2), Vec{3.0, 4.0, 0.0, 1.0}),
               WithinAbs(2.0 * (5.0 + 1.0), 1e-15));
}

TEST_CASE("moreau identity holds on hand cases") {
  REQUIRE_THAT(moreau_residual(l1_reg(1.0), Vec{5.0, -0.2, 0.0}, 2.0), WithinAbs(0.0, 1e-10));
  REQUIRE_THAT(moreau_residual(l1_reg(0.0), Vec{1.0, 1.0}, 1.0), WithinAbs(0.0, 1e-10));
  Rng rng(8);
  const Vec y6 = random_vec(6, rng);
  REQUIRE(moreau_residual(group_l2_reg(0.7, 0), y6, 0.3) <= 1e-10);
}

TEST_CASE("moreau identity holds over 1000 random draws") {
  Rng rng(9);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.below(12));
    RegularizerSpec spec;
    if (trial % 2 == 0) {
      spec = l1_reg(rng.uniform(0.0, 5.0));
    } else {
      std::size_t gs = 1 + static_cast<std::size_t>(rng.below(4));
      while (n % gs != 0) gs = 1 + static_cast<std::size_t>(rng.below(4));
      spec = group_l2_reg(rng.uniform(0.0, 5.0), gs);
    }
    const Vec y = random_vec(n, rng, 10.0);
    const double gamma = rng.uniform(0.01, 10.0);
    worst = std::max(worst, moreau_residual(spec, y, gamma));
  }
  REQUIRE(worst <= 1e-10);
}
