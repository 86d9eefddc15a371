#pragma once

// Small ensembles shared by the unit and acceptance tests.

#include <cmath>

#include "adaptive_lqr/regime.h"

namespace adaptive_lqr {
namespace test {

inline Matrix Scalar(double v) { return Matrix::Constant(1, 1, v); }

inline LinearRegime ScalarRegime(double a, double b, double c, double g) {
  return {Scalar(a), Scalar(b), Scalar(c), Scalar(g)};
}

// F = 1 certifies certainty equivalence: B_j K_j = G_j with K = (1, 3).
inline RegimeEnsemble ExactCeFleet() {
  RegimeEnsemble e;
  e.regimes = {ScalarRegime(0, 1, 1, 1), ScalarRegime(1, 1, std::sqrt(3.0), 3)};
  e.prior = Vector::Constant(2, 0.5);
  e.x0 = {Vector::Ones(1), Vector::Ones(1)};
  return e;
}

// Signals doubled: F = 1/2, a strict contraction.
inline RegimeEnsemble DoubledGFleet() {
  RegimeEnsemble e = ExactCeFleet();
  e.regimes[0].G *= 2.0;
  e.regimes[1].G *= 2.0;
  return e;
}

// Uncontrolled constant signals z = +1 and z = -1.
inline RegimeEnsemble PlusMinusFleet() {
  RegimeEnsemble e;
  e.regimes = {ScalarRegime(0, 0, 1, 1), ScalarRegime(0, 0, 1, 1)};
  e.prior = Vector::Constant(2, 0.5);
  e.x0 = {Vector::Ones(1), -Vector::Ones(1)};
  return e;
}

inline RegimeEnsemble ThreeRegimeFleet() {
  RegimeEnsemble e;
  e.regimes = {ScalarRegime(-1, 1, 1, 1), ScalarRegime(0.5, 2, 1, 0.5),
               ScalarRegime(0, 1, 2, 3)};
  e.prior = Vector(3);
  e.prior << 0.2, 0.3, 0.5;
  e.x0 = {Vector::Constant(1, 1.0), Vector::Constant(1, -0.5),
          Vector::Constant(1, 2.0)};
  return e;
}

inline RegimeEnsemble DoubleIntegratorFleet() {
  Matrix A(2, 2), B(2, 1), C(1, 2), G(1, 2);
  // clang-format off
  A << 0, 1,
       0, 0;
  // clang-format on
  B << 0, 1;
  C << 1, 0;
  G << 1, 0;
  Matrix A2(2, 2);
  // clang-format off
  A2 << 0, 1,
       -1, 0;
  // clang-format on
  Matrix G2(1, 2);
  G2 << 0.5, 1;
  RegimeEnsemble e;
  e.regimes = {{A, B, C, G}, {A2, B, C, G2}};
  e.prior = Vector::Constant(2, 0.5);
  Vector x1(2), x2(2);
  x1 << 1, 0;
  x2 << 0, 1;
  e.x0 = {x1, x2};
  return e;
}

inline RegimeEnsemble MixedDimensionFleet() {
  Matrix A(2, 2), B(2, 1), C(1, 2), G(1, 2);
  // clang-format off
  A << -0.5, 1,
          0, 0.2;
  // clang-format on
  B << 0, 1;
  C << 1, 0;
  G << 1, 1;
  RegimeEnsemble e;
  e.regimes = {{A, B, C, G}, ScalarRegime(0.3, 1, 1, 2)};
  e.prior = Vector(2);
  e.prior << 0.6, 0.4;
  Vector x1(2);
  x1 << 0.5, -0.5;
  e.x0 = {x1, Vector::Constant(1, 1.0)};
  return e;
}

}  // namespace test
}  // namespace adaptive_lqr
