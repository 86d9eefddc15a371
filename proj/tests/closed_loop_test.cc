#include "adaptive_lqr/closed_loop.h"

#include <cmath>
#include <cstdlib>

#include <gtest/gtest.h>

#include "test_fleets.h"

namespace adaptive_lqr {
namespace {

using test::ScalarRegime;

SimConfig SmallConfig() {
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.T = 2.0;
  cfg.paths = 64;
  cfg.seed = 17;
  cfg.threads = 1;
  return cfg;
}

GTEST_TEST(SimulateTest, ZeroPolicyConstantStates) {
  // B = 0: the states stay at +-1 and the running cost is |C x|^2 T / 2.
  const SimRun run = Simulate(test::PlusMinusFleet(), ZeroPolicy{},
                              SmallConfig());
  EXPECT_NEAR(run.cost_mean, 1.0, 1e-12);
  EXPECT_NEAR(run.cost_stderr, 0.0, 1e-12);
  EXPECT_EQ(run.completed, 64);
  EXPECT_NEAR(run.terminal_state_msq, 1.0, 1e-12);
}

GTEST_TEST(SimulateTest, DeterministicAcrossWorkerCounts) {
  SimConfig cfg = SmallConfig();
  cfg.keep_records = true;
  const RegimeEnsemble e = test::ExactCeFleet();
  const CertaintyEquivalentPolicy ce{Matrix::Ones(1, 1)};
  const SimRun one = Simulate(e, ce, cfg);
  cfg.threads = 3;
  const SimRun three = Simulate(e, ce, cfg);
  EXPECT_EQ(one.cost_mean, three.cost_mean);
  EXPECT_EQ(one.modified_cost_stderr, three.modified_cost_stderr);
  EXPECT_EQ(one.belief_final_mean, three.belief_final_mean);
  ASSERT_EQ(one.records.size(), three.records.size());
  for (std::size_t k = 0; k < one.records.size(); ++k) {
    EXPECT_EQ(one.records[k].cost, three.records[k].cost);
    EXPECT_EQ(one.records[k].theta, three.records[k].theta);
  }
  cfg.seed += 1;
  EXPECT_NE(Simulate(e, ce, cfg).cost_mean, one.cost_mean);
}

GTEST_TEST(SimulateTest, SingleRegimeCeMatchesLq) {
  RegimeEnsemble e;
  e.regimes = {ScalarRegime(0, 1, 1, 1)};  // K = 1, B'K = G
  e.prior = Vector::Ones(1);
  e.x0 = {Vector::Constant(1, 2.0)};
  SimConfig cfg = SmallConfig();
  cfg.keep_records = true;
  const SimRun ce = Simulate(e, CertaintyEquivalentPolicy{Matrix::Ones(1, 1)},
                             cfg);
  const SimRun lq = Simulate(e, LqPerRegimePolicy{0}, cfg);
  for (std::size_t k = 0; k < ce.records.size(); ++k) {
    EXPECT_NEAR(ce.records[k].cost, lq.records[k].cost, 1e-12);
  }
  // Deterministic LQ: cost approaches <Kx, x>/2 = 2 as T grows.
  cfg.T = 20.0;
  cfg.dt = 1e-3;
  cfg.paths = 1;
  EXPECT_NEAR(Simulate(e, LqPerRegimePolicy{0}, cfg).cost_mean, 2.0, 1e-5);
}

// The policy sees only (t, x_1..x_N, p, zhat). Two regimes that differ only
// in their cost output C generate the same observations, so under shared
// noise the controls must coincide for either true regime.
GTEST_TEST(SimulateTest, PolicyIsBlindToTheTrueRegime) {
  RegimeEnsemble e;
  e.regimes = {ScalarRegime(0.5, 1, 1, 1), ScalarRegime(0.5, 1, 3, 1)};
  e.prior = Vector::Constant(2, 0.5);
  e.x0 = {Vector::Ones(1), Vector::Ones(1)};
  SimConfig cfg = SmallConfig();
  for (const Policy& policy :
       {Policy{CertaintyEquivalentPolicy{Matrix::Constant(1, 1, 2.0)}},
        Policy{BellmanGradientPolicy{ValueKind::kVce, 1.0}}}) {
    PathTrace a, b;
    const PathRecord ra = SimulatePath(e, policy, cfg, 5, 0, &a);
    const PathRecord rb = SimulatePath(e, policy, cfg, 5, 1, &b);
    ASSERT_EQ(a.u.size(), b.u.size());
    for (std::size_t k = 0; k < a.u.size(); ++k) EXPECT_EQ(a.u[k], b.u[k]);
    EXPECT_NE(ra.cost, rb.cost);
  }
}

GTEST_TEST(SimulateTest, TailProxyBoundsLqValuePathwise) {
  const RegimeEnsemble e = test::ExactCeFleet();
  SimConfig cfg = SmallConfig();
  cfg.tail_estimate = true;
  cfg.keep_records = true;
  const double k[2] = {1.0, 3.0};
  for (const Policy& policy :
       {Policy{ZeroPolicy{}}, Policy{LqPerRegimePolicy{1}},
        Policy{CertaintyEquivalentPolicy{Matrix::Constant(1, 1, 0.3)}}}) {
    const SimRun run = Simulate(e, policy, cfg);
    for (const PathRecord& r : run.records) {
      EXPECT_GE(r.cost, 0.5 * k[r.theta] - 1e-3) << Describe(policy);
      EXPECT_GT(r.tail, 0.0);
    }
  }
}

GTEST_TEST(SimulateTest, BlowUpRaisesNumericalError) {
  RegimeEnsemble e;
  e.regimes = {ScalarRegime(20, 1, 1, 1)};
  e.prior = Vector::Ones(1);
  e.x0 = {Vector::Ones(1)};
  EXPECT_THROW(Simulate(e, ZeroPolicy{}, SmallConfig()), NumericalError);
}

GTEST_TEST(SimulateTest, RejectsBadInputs) {
  SimConfig cfg = SmallConfig();
  cfg.dt = 0.0;
  EXPECT_THROW(ValidateConfig(cfg), ValidationError);
  cfg = SmallConfig();
  cfg.paths = 0;
  EXPECT_THROW(ValidateConfig(cfg), ValidationError);
  const RegimeEnsemble e = test::ExactCeFleet();
  EXPECT_THROW(Simulate(e, LqPerRegimePolicy{5}, SmallConfig()),
               ValidationError);
  EXPECT_THROW(
      Simulate(e, CertaintyEquivalentPolicy{Matrix::Ones(2, 2)}, SmallConfig()),
      ValidationError);
}

GTEST_TEST(OpenLoopPolicyTest, InterpolatesAndHolds) {
  OpenLoopPolicy p;
  p.times = {0.0, 1.0};
  p.values = {Vector::Zero(1), Vector::Constant(1, 2.0)};
  EXPECT_DOUBLE_EQ(p.At(0.25)[0], 0.5);
  EXPECT_DOUBLE_EQ(p.At(5.0)[0], 2.0);
  EXPECT_DOUBLE_EQ(p.At(-1.0)[0], 0.0);
}

GTEST_TEST(ResolveThreadsTest, ExplicitThenEnvironment) {
  EXPECT_EQ(ResolveThreads(3), 3);
  setenv("ADAPTIVE_LQR_THREADS", "2", 1);
  EXPECT_EQ(ResolveThreads(0), 2);
  unsetenv("ADAPTIVE_LQR_THREADS");
  EXPECT_GE(ResolveThreads(0), 1);
}

GTEST_TEST(StabilityTest, UniformCheckAndReport) {
  const RegimeEnsemble e = test::ExactCeFleet();
  const auto abscissas = UniformStabilizabilityCheck(e, Matrix::Ones(1, 1));
  EXPECT_NEAR(abscissas[0], -1.0, 1e-12);
  EXPECT_NEAR(abscissas[1], -2.0, 1e-12);
  // F = 0 leaves the A = 1 regime unstable.
  EXPECT_THROW(AdaptiveStabilityRun(e, Matrix::Zero(1, 1), SmallConfig(),
                                    {1.0}),
               ValidationError);
  SimConfig cfg = SmallConfig();
  const AdaptiveStabilityReport rep =
      AdaptiveStabilityRun(e, Matrix::Ones(1, 1), cfg, {1.0, 3.0});
  EXPECT_NEAR(rep.mu, 1.0, 1e-12);
  EXPECT_EQ(rep.msq.size(), 2u);
  EXPECT_LT(rep.msq[1], rep.msq[0]);
  EXPECT_DOUBLE_EQ(rep.initial_msq, 1.0);
  EXPECT_TRUE(std::isfinite(rep.c_witness));
}

}  // namespace
}  // namespace adaptive_lqr
