#include "adaptive_lqr/riccati.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace adaptive_lqr {

Matrix ControllabilityMatrix(const Matrix& A, const Matrix& B) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  Matrix out(n, n * m);
  Matrix block = B;
  for (Eigen::Index k = 0; k < n; ++k) {
    out.middleCols(k * m, m) = block;
    block = A * block;
  }
  return out;
}

Matrix ObservabilityMatrix(const Matrix& A, const Matrix& C) {
  const Eigen::Index n = A.rows();
  const Eigen::Index q = C.rows();
  Matrix out(n * q, n);
  Matrix block = C;
  for (Eigen::Index k = 0; k < n; ++k) {
    out.middleRows(k * q, q) = block;
    block = block * A;
  }
  return out;
}

Minimality IsMinimal(const LinearRegime& r) {
  const Eigen::Index n = r.A.rows();
  return {NumericalRank(ControllabilityMatrix(r.A, r.B)) == n,
          NumericalRank(ObservabilityMatrix(r.A, r.C)) == n};
}

Matrix RiccatiRhs(const LinearRegime& r, const Matrix& K) {
  const Matrix BtK = r.B.transpose() * K;
  return r.C.transpose() * r.C + r.A.transpose() * K + K * r.A -
         BtK.transpose() * BtK;
}

double RiccatiResidual(const LinearRegime& r, const Matrix& K) {
  return OperatorNorm(RiccatiRhs(r, K));
}

int DefaultRiccatiSteps(const LinearRegime& r, double horizon) {
  const double scaled = 100.0 * horizon * OperatorNorm(r.A);
  return static_cast<int>(std::max(1000.0, std::ceil(scaled)));
}

namespace {

// One RK4 step of the Riccati flow, symmetrized.
Matrix Rk4Step(const LinearRegime& r, const Matrix& K, double h) {
  const Matrix k1 = RiccatiRhs(r, K);
  const Matrix k2 = RiccatiRhs(r, K + 0.5 * h * k1);
  const Matrix k3 = RiccatiRhs(r, K + 0.5 * h * k2);
  const Matrix k4 = RiccatiRhs(r, K + h * k3);
  return Symmetrized(K + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

Matrix ClosedLoop(const LinearRegime& r, const Matrix& K) {
  return r.A - r.B * (r.B.transpose() * K);
}

// Integrates the Riccati ODE until A - BB'K(t) is stable. The step adapts to
// the current stiffness of the quadratic term.
Matrix StabilizingStart(const LinearRegime& r) {
  const Eigen::Index n = r.A.rows();
  Matrix K = Matrix::Zero(n, n);
  const double a = OperatorNorm(r.A);
  const double b2 = std::pow(OperatorNorm(r.B), 2);
  constexpr int kChunk = 20;
  constexpr int kMaxSteps = 2'000'000;
  for (int step = 0; step < kMaxSteps; step += kChunk) {
    if (SpectralAbscissa(ClosedLoop(r, K)) < 0.0) return K;
    const double h = 0.05 / (1.0 + 2.0 * a + 2.0 * b2 * OperatorNorm(K));
    for (int k = 0; k < kChunk; ++k) K = Rk4Step(r, K, h);
    if (!K.allFinite()) {
      throw NumericalError("Riccati flow diverged while seeking a "
                           "stabilizing start at step " +
                           std::to_string(step));
    }
  }
  throw NumericalError("no stabilizing gain found along the Riccati flow");
}

}  // namespace

Matrix RiccatiOde(const LinearRegime& r, double horizon, int steps) {
  if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");
  if (steps <= 0) throw ValidationError("steps must be positive");
  const double h = horizon / steps;
  Matrix K = Matrix::Zero(r.A.rows(), r.A.rows());
  for (int step = 0; step < steps; ++step) {
    K = Rk4Step(r, K, h);
    if (!K.allFinite()) {
      throw NumericalError("Riccati ODE produced non-finite values at step " +
                           std::to_string(step + 1));
    }
  }
  return K;
}

Matrix SolveLyapunov(const Matrix& A, const Matrix& Q) {
  const Eigen::Index n = A.rows();
  const Matrix I = Matrix::Identity(n, n);
  const Matrix At = A.transpose();
  // vec(A'X) = (I kron A') vec X, vec(XA) = (A' kron I) vec X.
  Matrix L(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      L.block(i * n, j * n, n, n) = I(i, j) * At + At(i, j) * I;
    }
  }
  const Vector rhs = -Eigen::Map<const Vector>(Q.data(), n * n);
  Eigen::FullPivLU<Matrix> lu(L);
  if (!lu.isInvertible()) {
    throw NumericalError("Lyapunov operator is singular");
  }
  const Vector x = lu.solve(rhs);
  if (!x.allFinite()) throw NumericalError("Lyapunov solve is not finite");
  return Symmetrized(Eigen::Map<const Matrix>(x.data(), n, n));
}

RiccatiSolution RiccatiAlgebraic(const LinearRegime& r,
                                 const RiccatiOptions& options) {
  if (!IsMinimal(r).minimal()) throw ValidationError("minimality required");

  const Matrix CtC = r.C.transpose() * r.C;
  Matrix K = StabilizingStart(r);
  int iteration = 0;
  for (; iteration < options.max_iterations; ++iteration) {
    const Matrix gain = r.B.transpose() * K;
    const Matrix Abar = r.A - r.B * gain;
    Matrix next = SolveLyapunov(Abar, CtC + gain.transpose() * gain);
    const double change = OperatorNorm(next - K);
    K = std::move(next);
    if (change <= 1e-14 * std::max(1.0, OperatorNorm(K))) break;
  }

  RiccatiSolution sol;
  sol.K = K;
  sol.gain = r.B.transpose() * K;
  sol.Abar = r.A - r.B * sol.gain;
  sol.spectral_abscissa = SpectralAbscissa(sol.Abar);
  sol.residual = RiccatiResidual(r, K);
  sol.iterations = iteration + 1;
  if (!(sol.residual <= options.tolerance)) {
    std::ostringstream os;
    os << "Riccati solver did not converge: residual " << sol.residual;
    throw NumericalError(os.str());
  }
  if (!(sol.spectral_abscissa < 0.0) || !(MinSymmetricEigenvalue(K) > 0.0)) {
    throw NumericalError("Riccati solution is not stabilizing");
  }
  return sol;
}

std::vector<RiccatiSolution> SolveAll(const RegimeEnsemble& e,
                                      const RiccatiOptions& options) {
  std::vector<RiccatiSolution> out;
  out.reserve(e.regimes.size());
  for (std::size_t j = 0; j < e.regimes.size(); ++j) {
    try {
      out.push_back(RiccatiAlgebraic(e.regimes[j], options));
    } catch (const ValidationError& err) {
      throw ValidationError("regime " + std::to_string(j) + ": " + err.what());
    } catch (const NumericalError& err) {
      throw NumericalError("regime " + std::to_string(j) + ": " + err.what());
    }
  }
  return out;
}

double LqValue(const RiccatiSolution& sol, const Vector& x) {
  if (x.size() != sol.K.rows()) {
    throw ValidationError("lq value: state has dimension " +
                          std::to_string(x.size()) + ", expected " +
                          std::to_string(sol.K.rows()));
  }
  return 0.5 * x.dot(sol.K * x);
}

}  // namespace adaptive_lqr
