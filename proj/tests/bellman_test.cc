#include "adaptive_lqr/bellman.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "test_fleets.h"

namespace adaptive_lqr {
namespace {

using test::ExactCeFleet;

std::vector<Vector> RandomStates(const RegimeEnsemble& e, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  std::vector<Vector> x;
  for (const LinearRegime& r : e.regimes) {
    Vector v(r.state_dim());
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = n(rng);
    x.push_back(v);
  }
  return x;
}

Belief RandomBelief(Eigen::Index n, std::mt19937_64& rng) {
  std::exponential_distribution<double> ex;
  Vector w(n);
  for (Eigen::Index j = 0; j < n; ++j) w[j] = ex(rng);
  return Belief::FromWeights(w);
}

GTEST_TEST(ValueTest, ExampleValues) {
  const RegimeEnsemble e = ExactCeFleet();
  const ValueSpec uce = MakeValueSpec(ValueKind::kUce, e);
  const ValueSpec vce = MakeValueSpec(ValueKind::kVce, e);
  const ValueSpec scaled = MakeValueSpec(ValueKind::kScaledEntropy, e, 0.5);
  const Belief b = e.prior_belief();
  // K = (1, 3), x = (1, 1): U = (1/2)(1/2 + 3/2) = 1.
  EXPECT_NEAR(ValueEval(uce, e.x0, b), 1.0, 1e-12);
  EXPECT_NEAR(ValueEval(vce, e.x0, b), 1.0 + std::log(2.0), 1e-12);
  EXPECT_NEAR(ValueEval(scaled, e.x0, b), 1.0 + 0.25 * std::log(2.0), 1e-12);
}

GTEST_TEST(ValueTest, GradientMatchesFiniteDifference) {
  const RegimeEnsemble e = test::MixedDimensionFleet();
  const ValueSpec vs = MakeValueSpec(ValueKind::kVce, e);
  std::mt19937_64 rng(3);
  auto x = RandomStates(e, rng);
  const Belief b = RandomBelief(2, rng);
  const auto grad = ValueGradient(vs, x, b);
  const double h = 1e-6;
  for (std::size_t j = 0; j < x.size(); ++j) {
    for (Eigen::Index k = 0; k < x[j].size(); ++k) {
      auto xp = x, xm = x;
      xp[j][k] += h;
      xm[j][k] -= h;
      const double fd = (ValueEval(vs, xp, b) - ValueEval(vs, xm, b)) / (2 * h);
      EXPECT_NEAR(grad[j][k], fd, 1e-7);
    }
  }
}

GTEST_TEST(HamiltonianTest, ArgminIsStationary) {
  const RegimeEnsemble e = test::DoubleIntegratorFleet();
  std::mt19937_64 rng(4);
  const auto x = RandomStates(e, rng);
  const auto D = RandomStates(e, rng);
  const Belief b = RandomBelief(2, rng);
  const HamiltonianValue h = Hamiltonian(e, x, b, D);
  // Direct evaluation of the minimized expression at u and nearby points.
  auto objective = [&](const Vector& u) {
    double v = 0.5 * u.squaredNorm();
    for (std::size_t j = 0; j < x.size(); ++j) {
      const LinearRegime& r = e.regimes[j];
      v += 0.5 * b[static_cast<Eigen::Index>(j)] * (r.C * x[j]).squaredNorm() +
           D[j].dot(r.A * x[j] + r.B * u);
    }
    return v;
  };
  EXPECT_NEAR(objective(h.argmin_u), h.value, 1e-12);
  for (double du : {-0.1, 0.1}) {
    EXPECT_GT(objective(h.argmin_u + Vector::Constant(1, du)), h.value);
  }
}

// The entropy Hessian in p is -diag(1/p_j); the generator therefore equals
// -(1/2) sum_j p_j |z_j - zhat|^2.
GTEST_TEST(GeneratorTest, EntropyHessianAgreesWithClosedForm) {
  const RegimeEnsemble e = test::ThreeRegimeFleet();
  const ValueSpec vce = MakeValueSpec(ValueKind::kVce, e);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Belief b = RandomBelief(3, rng);
    const auto z = Signals(e, RandomStates(e, rng));
    Matrix hess = Matrix::Zero(3, 3);
    for (int j = 0; j < 3; ++j) hess(j, j) = -1.0 / b[j];
    EXPECT_NEAR(GeneratorOn(vce, b, z), GeneratorOnHessian(hess, b, z), 1e-12);
    EXPECT_NEAR(GeneratorOn(vce, b, z), -0.5 * ConditionalVariance(z, b),
                1e-12);
  }
}

GTEST_TEST(BellmanResidualTest, ExactCeFleetSolvesVce) {
  const RegimeEnsemble e = ExactCeFleet();
  const ValueSpec vce = MakeValueSpec(ValueKind::kVce, e);
  const ScanResult scan = BellmanResidualScan(vce, e, 500, 1);
  EXPECT_LT(std::abs(scan.min_value), 1e-10);
  EXPECT_LT(std::abs(scan.max_value), 1e-10);
  EXPECT_EQ(scan.trials, 500);
}

// residual(V) = (1/2) [Var(Gx) - Var(B'Kx)] = (1/2) VarianceGap.
GTEST_TEST(BellmanResidualTest, EqualsHalfVarianceGap) {
  for (const RegimeEnsemble& e :
       {test::DoubledGFleet(), test::ThreeRegimeFleet(),
        test::DoubleIntegratorFleet(), test::MixedDimensionFleet()}) {
    const ValueSpec vce = MakeValueSpec(ValueKind::kVce, e);
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      const auto x = RandomStates(e, rng);
      const Belief b = RandomBelief(static_cast<Eigen::Index>(e.size()), rng);
      EXPECT_NEAR(BellmanResidual(vce, e, x, b),
                  0.5 * VarianceGap(e, vce.riccati, x, b), 1e-10);
    }
  }
}

GTEST_TEST(BellmanResidualTest, UceIsSubsolution) {
  const RegimeEnsemble e = test::ThreeRegimeFleet();
  const ValueSpec uce = MakeValueSpec(ValueKind::kUce, e);
  const ScanResult scan = BellmanResidualScan(uce, e, 1000, 2);
  EXPECT_LE(scan.max_value, 1e-12);
  const ScanResult violation =
      FindUceSupersolutionViolation(e, uce.riccati, 200, 2);
  EXPECT_LT(violation.min_value, 0.0);
  EXPECT_NEAR(BellmanResidual(uce, e, violation.argmin_x,
                              Belief::FromWeights(violation.argmin_p)),
              violation.min_value, 1e-12);
}

GTEST_TEST(BellmanResidualTest, SingleRegimeUceIsExact) {
  RegimeEnsemble e;
  e.regimes = {test::DoubleIntegratorFleet().regimes[0]};
  e.prior = Vector::Ones(1);
  e.x0 = {Vector::Ones(2)};
  const ValueSpec uce = MakeValueSpec(ValueKind::kUce, e);
  const ScanResult scan = BellmanResidualScan(uce, e, 100, 3);
  EXPECT_LT(std::abs(scan.min_value), 1e-10);
  EXPECT_LT(std::abs(scan.max_value), 1e-10);
}

GTEST_TEST(SolveFeedbackTest, Classifications) {
  RegimeEnsemble e = ExactCeFleet();
  FeedbackCertificate c = SolveFeedback(e, SolveAll(e));
  EXPECT_NEAR(c.F(0, 0), 1.0, 1e-12);
  EXPECT_EQ(c.classification, CeClassification::kExactCe);
  EXPECT_TRUE(c.faithful);

  e = test::DoubledGFleet();
  c = SolveFeedback(e, SolveAll(e));
  EXPECT_NEAR(c.F(0, 0), 0.5, 1e-12);
  EXPECT_EQ(c.classification, CeClassification::kSupersolution);

  // Halved signals need F = 2: not a contraction.
  e = ExactCeFleet();
  e.regimes[0].G *= 0.5;
  e.regimes[1].G *= 0.5;
  c = SolveFeedback(e, SolveAll(e));
  EXPECT_NEAR(c.F(0, 0), 2.0, 1e-12);
  EXPECT_EQ(c.classification, CeClassification::kNone);

  // Inconsistent equations leave a residual.
  e = ExactCeFleet();
  e.regimes[1].G *= 2.0;
  c = SolveFeedback(e, SolveAll(e));
  EXPECT_GT(c.residual, 1e-3);
  EXPECT_EQ(c.classification, CeClassification::kNone);
}

// A double-integrator regime whose signal is its own LQ gain: F = 1.
GTEST_TEST(SolveFeedbackTest, TwoDimensionalExactCe) {
  RegimeEnsemble e = test::DoubleIntegratorFleet();
  const auto ric = SolveAll(e);
  e.regimes[0].G = ric[0].gain;
  e.regimes[1].G = ric[1].gain;
  const FeedbackCertificate c = SolveFeedback(e, ric);
  EXPECT_EQ(c.classification, CeClassification::kExactCe);
  const ValueSpec vce = MakeValueSpec(ValueKind::kVce, e);
  const ScanResult scan = BellmanResidualScan(vce, e, 200, 4);
  EXPECT_LT(std::max(-scan.min_value, scan.max_value), 1e-10);
}

GTEST_TEST(SolveFeedbackTest, NonFaithfulIsFlagged) {
  RegimeEnsemble e = test::DoubleIntegratorFleet();
  for (auto& r : e.regimes) r.G = Matrix::Zero(2, 2);
  e.regimes[0].G(0, 0) = 1.0;  // rank one with two outputs
  e.regimes[1].G(0, 1) = 1.0;
  EXPECT_FALSE(IsFaithful(e));
  EXPECT_FALSE(SolveFeedback(e, SolveAll(e)).faithful);
}

GTEST_TEST(VarianceScanTest, SignMatchesClassification) {
  RegimeEnsemble e = test::DoubledGFleet();
  EXPECT_GE(VarianceInequalityScan(e, SolveAll(e), 2000, 1).min_value, -1e-10);
  e = ExactCeFleet();
  e.regimes[0].G *= 0.5;
  e.regimes[1].G *= 0.5;
  EXPECT_LT(VarianceInequalityScan(e, SolveAll(e), 2000, 1).min_value, 0.0);
}

GTEST_TEST(HamiltonianTest, SteadyLqExample) {
  // N = 1, K = 1, D = K x: H = 1/2 + 0 - 1/2 = 0 with argmin -1.
  RegimeEnsemble e;
  e.regimes = {test::ScalarRegime(0, 1, 1, 1)};
  e.prior = Vector::Ones(1);
  e.x0 = {Vector::Ones(1)};
  const std::vector<Vector> x = {Vector::Ones(1)};
  const HamiltonianValue h = Hamiltonian(e, x, Belief::Vertex(1, 0), x);
  EXPECT_NEAR(h.value, 0.0, 1e-15);
  EXPECT_NEAR(h.argmin_u[0], -1.0, 1e-15);
}

// The lambda-scaled value equals lambda^2 V_ce(x / lambda, p) as a function,
// but the generator sees the signals at x itself. The residuals agree once
// the signal matrices are scaled as well: G_j -> lambda G_j.
GTEST_TEST(BellmanResidualTest, ScalingConsistency) {
  const RegimeEnsemble e = test::MixedDimensionFleet();
  std::mt19937_64 rng(21);
  for (double lambda : {0.3, 2.0}) {
    RegimeEnsemble scaled_signals = e;
    for (auto& r : scaled_signals.regimes) r.G *= lambda;
    const ValueSpec scaled =
        MakeValueSpec(ValueKind::kScaledEntropy, e, lambda);
    const ValueSpec vce = MakeValueSpec(ValueKind::kVce, scaled_signals);
    for (int trial = 0; trial < 20; ++trial) {
      const auto x = RandomStates(e, rng);
      const Belief b = RandomBelief(2, rng);
      std::vector<Vector> shrunk;
      for (const Vector& v : x) shrunk.push_back(v / lambda);
      EXPECT_NEAR(BellmanResidual(scaled, e, x, b),
                  lambda * lambda *
                      BellmanResidual(vce, scaled_signals, shrunk, b),
                  1e-10);
    }
  }
}

GTEST_TEST(ValueKindTest, Names) {
  EXPECT_EQ(ValueKindFromString("U_ce"), ValueKind::kUce);
  EXPECT_EQ(ValueKindFromString("vce"), ValueKind::kVce);
  EXPECT_EQ(ValueKindFromString("scaled"), ValueKind::kScaledEntropy);
  EXPECT_THROW(ValueKindFromString("W"), ValidationError);
  EXPECT_EQ(ToString(CeClassification::kExactCe), "exact_ce");
}

}  // namespace
}  // namespace adaptive_lqr
