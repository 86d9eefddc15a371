#include "adaptive_lqr/riccati.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "adaptive_lqr/linalg.h"
#include "test_fleets.h"

namespace adaptive_lqr {
namespace {

using test::ScalarRegime;

LinearRegime DoubleIntegrator() { return test::DoubleIntegratorFleet().regimes[0]; }

GTEST_TEST(MinimalityTest, DetectsEachDefect) {
  EXPECT_TRUE(IsMinimal(ScalarRegime(0, 1, 1, 0)).minimal());
  const Minimality no_input = IsMinimal(ScalarRegime(0, 0, 1, 0));
  EXPECT_FALSE(no_input.controllable);
  EXPECT_TRUE(no_input.observable);
  LinearRegime r = DoubleIntegrator();
  r.C << 0, 1;  // velocity only: position unobservable
  const Minimality m = IsMinimal(r);
  EXPECT_TRUE(m.controllable);
  EXPECT_FALSE(m.observable);
  EXPECT_EQ(NumericalRank(ControllabilityMatrix(r.A, r.B)), 2);
  EXPECT_EQ(NumericalRank(ObservabilityMatrix(r.A, r.C)), 1);
}

GTEST_TEST(RiccatiOdeTest, ScalarClosedForm) {
  // K' = 1 - K^2, K(0) = 0  =>  K(t) = tanh(t)
  const LinearRegime r = ScalarRegime(0, 1, 1, 0);
  for (double t : {0.1, 0.5, 1.0, 3.0}) {
    EXPECT_NEAR(RiccatiOde(r, t, 10000)(0, 0), std::tanh(t), 1e-10);
  }
}

GTEST_TEST(RiccatiOdeTest, MonotoneAndConvergesToAlgebraic) {
  const LinearRegime r = DoubleIntegrator();
  const Matrix k1 = RiccatiOde(r, 1.0, 2000);
  const Matrix k2 = RiccatiOde(r, 2.0, 4000);
  EXPECT_GE(MinSymmetricEigenvalue(k2 - k1), -1e-12);
  const Matrix k_are = RiccatiAlgebraic(r).K;
  EXPECT_LT(OperatorNorm(RiccatiOde(r, 30.0, 30000) - k_are), 1e-9);
}

GTEST_TEST(RiccatiOdeTest, RejectsBadArguments) {
  const LinearRegime r = ScalarRegime(0, 1, 1, 0);
  EXPECT_THROW(RiccatiOde(r, -1.0, 10), ValidationError);
  EXPECT_THROW(RiccatiOde(r, 1.0, 0), ValidationError);
  EXPECT_EQ(DefaultRiccatiSteps(ScalarRegime(2, 1, 1, 0), 10.0), 2000);
  EXPECT_EQ(DefaultRiccatiSteps(r, 10.0), 1000);
}

GTEST_TEST(RiccatiAlgebraicTest, ScalarQuadratics) {
  // Positive root of c^2 + 2aK - b^2 K^2 = 0.
  for (auto [a, b, c] : {std::tuple{0.0, 1.0, 1.0}, std::tuple{1.0, 1.0, 1.0},
                         std::tuple{1.0, 1.0, std::sqrt(3.0)},
                         std::tuple{-2.0, 0.5, 3.0}}) {
    const RiccatiSolution s = RiccatiAlgebraic(ScalarRegime(a, b, c, 0));
    const double k = (a + std::sqrt(a * a + b * b * c * c)) / (b * b);
    EXPECT_NEAR(s.K(0, 0), k, 1e-10 * k);
    EXPECT_NEAR(s.spectral_abscissa, -std::sqrt(a * a + b * b * c * c), 1e-9);
  }
}

GTEST_TEST(RiccatiAlgebraicTest, DoubleIntegratorClosedForm) {
  // K = [[sqrt 2, 1], [1, sqrt 2]] for x'' = u with cost x_1^2 + u^2:
  // 1 - b^2 = 0, a - b c = 0, 2 b - c^2 = 0.
  const RiccatiSolution s = RiccatiAlgebraic(DoubleIntegrator());
  Matrix expected(2, 2);
  // clang-format off
  expected << std::sqrt(2.0), 1,
              1, std::sqrt(2.0);
  // clang-format on
  EXPECT_LT((s.K - expected).norm(), 1e-10);
  EXPECT_LT(s.residual, 1e-9);
  EXPECT_LT(s.spectral_abscissa, 0.0);
  EXPECT_LT((s.gain - DoubleIntegrator().B.transpose() * s.K).norm(), 1e-14);
}

GTEST_TEST(RiccatiAlgebraicTest, UnstableHigherDimension) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    LinearRegime r{Matrix(4, 4), Matrix(4, 2), Matrix(2, 4), Matrix(1, 4)};
    for (Matrix* m : {&r.A, &r.B, &r.C, &r.G}) {
      for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = n(rng);
    }
    const RiccatiSolution s = RiccatiAlgebraic(r);
    EXPECT_LT(s.residual, 1e-9);
    EXPECT_LT(SpectralAbscissa(s.Abar), 0.0);
    EXPECT_GT(MinSymmetricEigenvalue(s.K), 0.0);
    EXPECT_LT((s.K - s.K.transpose()).norm(), 1e-12);
  }
}

GTEST_TEST(RiccatiAlgebraicTest, RequiresMinimality) {
  try {
    RiccatiAlgebraic(ScalarRegime(1, 0, 1, 0));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "minimality required");
  }
  RegimeEnsemble e = test::ExactCeFleet();
  e.regimes[1].B = test::Scalar(0);
  try {
    SolveAll(e);
    FAIL();
  } catch (const ValidationError& err) {
    EXPECT_NE(std::string(err.what()).find("regime 1"), std::string::npos);
  }
}

GTEST_TEST(LyapunovTest, SolvesContinuousEquation) {
  Matrix A(2, 2);
  A << -1, 2, 0, -3;
  const Matrix Q = Matrix::Identity(2, 2);
  const Matrix X = SolveLyapunov(A, Q);
  EXPECT_LT((A.transpose() * X + X * A + Q).norm(), 1e-12);
}

// <Kx, x>/2 is homogeneous of degree two.
GTEST_TEST(LqValueTest, QuadraticScaling) {
  const RiccatiSolution s = RiccatiAlgebraic(DoubleIntegrator());
  Vector x(2);
  x << 0.3, -1.2;
  for (double c : {-2.0, 0.5, 7.0}) {
    EXPECT_NEAR(LqValue(s, c * x), c * c * LqValue(s, x), 1e-12);
  }
  EXPECT_EQ(LqValue(s, Vector::Zero(2)), 0.0);
  EXPECT_THROW(LqValue(s, Vector::Ones(3)), ValidationError);
}

}  // namespace
}  // namespace adaptive_lqr
