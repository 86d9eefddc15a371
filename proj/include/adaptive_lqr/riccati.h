#pragma once

#include "adaptive_lqr/linalg.h"
#include "adaptive_lqr/regime.h"

namespace adaptive_lqr {

struct Minimality {
  bool controllable = false;
  bool observable = false;

  bool minimal() const { return controllable && observable; }
};

/// [B, AB, ..., A^{n-1}B]
Matrix ControllabilityMatrix(const Matrix& A, const Matrix& B);
/// [C; CA; ...; CA^{n-1}]
Matrix ObservabilityMatrix(const Matrix& A, const Matrix& C);

/// Rank tests on the controllability and observability matrices of (A, B, C).
Minimality IsMinimal(const LinearRegime& r);

/// Right-hand side C'C + A'K + KA - KBB'K of the Riccati equation.
Matrix RiccatiRhs(const LinearRegime& r, const Matrix& K);

/// Operator norm of RiccatiRhs(r, K); zero at the algebraic solution.
double RiccatiResidual(const LinearRegime& r, const Matrix& K);

/// Default RK4 step count for horizon T: max(1000, 100 T |A|).
int DefaultRiccatiSteps(const LinearRegime& r, double horizon);

/// K(T) for K' = C'C + A'K + KA - KBB'K, K(0) = 0, by fixed-step RK4 with
/// symmetrization after every step. K(T) is the Hessian of the optimal
/// finite-horizon cost.
Matrix RiccatiOde(const LinearRegime& r, double horizon, int steps);

/// Solves A'X + XA + Q = 0 through the Kronecker-product linear system.
/// Requires A to be stable for a unique solution.
Matrix SolveLyapunov(const Matrix& A, const Matrix& Q);

struct RiccatiOptions {
  double tolerance = 1e-9;  // bound on the algebraic residual
  int max_iterations = 100;
};

struct RiccatiSolution {
  Matrix K;      // n x n, symmetric positive definite
  Matrix gain;   // i x n, B'K
  Matrix Abar;   // n x n, A - B gain
  double spectral_abscissa = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

/// Stabilizing positive-definite solution of 0 = C'C + A'K + KA - KBB'K.
///
/// Newton-Kleinman iteration started from a stabilizing gain obtained by
/// integrating the Riccati ODE until A - BB'K(t) is stable. Throws
/// ValidationError("minimality required") for non-minimal regimes and
/// NumericalError when the residual does not reach options.tolerance.
RiccatiSolution RiccatiAlgebraic(const LinearRegime& r,
                                 const RiccatiOptions& options = {});

/// Solves every regime of the ensemble.
std::vector<RiccatiSolution> SolveAll(const RegimeEnsemble& e,
                                      const RiccatiOptions& options = {});

/// <Kx, x> / 2, the optimal LQ cost from x.
double LqValue(const RiccatiSolution& sol, const Vector& x);

}  // namespace adaptive_lqr
