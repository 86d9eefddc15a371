#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "adaptive_lqr/regime.h"
#include "adaptive_lqr/riccati.h"

namespace adaptive_lqr {

// Candidate value functions on the hyperstate (x, p):
//   U_ce(x, p)      = 1/2 sum_j p_j <K_j x_j, x_j>
//   V_ce(x, p)      = U_ce(x, p) + H(p)
//   scaled(lambda)  = U_ce(x, p) + lambda^2 H(p)
// All three share the x-gradient grad_j f = p_j K_j x_j.
enum class ValueKind { kUce, kVce, kScaledEntropy };

std::string ToString(ValueKind kind);
ValueKind ValueKindFromString(const std::string& name);

struct ValueSpec {
  ValueKind kind = ValueKind::kVce;
  double lambda = 1.0;  // used by kScaledEntropy
  std::vector<RiccatiSolution> riccati;

  /// Coefficient of H(p) in the value function.
  double entropy_weight() const;
};

ValueSpec MakeValueSpec(ValueKind kind, const RegimeEnsemble& e,
                        double lambda = 1.0);

double ValueEval(const ValueSpec& vs, std::span<const Vector> x,
                 const Belief& b);

/// grad_j f = p_j K_j x_j
std::vector<Vector> ValueGradient(const ValueSpec& vs,
                                  std::span<const Vector> x, const Belief& b);

struct HamiltonianValue {
  double value = 0.0;
  Vector argmin_u;  // -sum_j B_j' D_j
};

/// min_u ( |u|^2/2 + sum_j p_j |C_j x_j|^2 / 2 + <D_j, A_j x_j + B_j u> ).
HamiltonianValue Hamiltonian(const RegimeEnsemble& e,
                             std::span<const Vector> x, const Belief& b,
                             std::span<const Vector> D);

/// Generator on a function with belief Hessian `hessian_p` (N x N):
/// 1/2 sum_{j,k} H_jk p_j p_k <z_j - zhat, z_k - zhat>.
double GeneratorOnHessian(const Matrix& hessian_p, const Belief& b,
                          std::span<const Vector> z);

/// Generator applied to a candidate value. Only the entropy part depends
/// nonlinearly on p, so the result is -w/2 sum_j p_j |z_j - zhat|^2.
double GeneratorOn(const ValueSpec& vs, const Belief& b,
                   std::span<const Vector> z);

/// Signals z_j = G_j x_j.
std::vector<Vector> Signals(const RegimeEnsemble& e,
                            std::span<const Vector> x);

/// Signed slack -L f - H(x, p, grad f). Zero where f solves the Bellman
/// equation, >= 0 for supersolutions, <= 0 for subsolutions.
double BellmanResidual(const ValueSpec& vs, const RegimeEnsemble& e,
                       std::span<const Vector> x, const Belief& b);

enum class CeClassification { kExactCe, kSupersolution, kNone };
std::string ToString(CeClassification c);

struct FeedbackCertificate {
  Matrix F;                 // i x o
  double residual = 0.0;    // max_j |F G_j - B_j' K_j|
  double norm = 0.0;        // largest singular value of F
  double partial_isometry_defect = 0.0;  // |F F' F - F|
  CeClassification classification = CeClassification::kNone;
  bool faithful = false;    // some G_j is surjective
};

/// Least-squares solution of F [G_1 ... G_N] = [B_1'K_1 ... B_N'K_N] with its
/// classification: exact certainty equivalence when F is a partial isometry,
/// supersolution regime when |F| <= 1.
FeedbackCertificate SolveFeedback(const RegimeEnsemble& e,
                                  std::span<const RiccatiSolution> riccati,
                                  double tolerance = 1e-8);

/// True when some G_j has rank equal to the output dimension.
bool IsFaithful(const RegimeEnsemble& e);

/// lambda^2 sum_j p_j |G_j x_j - Ghat|^2 - sum_j p_j |B_j'K_j x_j - Khat|^2.
/// V_ce is a supersolution iff this is >= 0 everywhere (lambda = 1).
double VarianceGap(const RegimeEnsemble& e,
                   std::span<const RiccatiSolution> riccati,
                   std::span<const Vector> x, const Belief& b,
                   double lambda = 1.0);

struct HyperstateSample {
  std::vector<Vector> x;
  Belief belief;
};

/// x_j entries uniform on [-1, 1]; p ~ Dirichlet(1, ..., 1).
HyperstateSample SampleHyperstate(const RegimeEnsemble& e,
                                  std::mt19937_64& rng);

struct ScanResult {
  double min_value = 0.0;
  double max_value = 0.0;
  int trials = 0;
  std::vector<Vector> argmin_x;
  Vector argmin_p;
};

/// Minimum of VarianceGap over seeded random hyperstates.
ScanResult VarianceInequalityScan(const RegimeEnsemble& e,
                                  std::span<const RiccatiSolution> riccati,
                                  int trials, std::uint64_t seed,
                                  double lambda = 1.0);

/// Range of BellmanResidual over seeded random hyperstates.
ScanResult BellmanResidualScan(const ValueSpec& vs, const RegimeEnsemble& e,
                               int trials, std::uint64_t seed);

/// Searches for a hyperstate where U_ce has strictly negative supersolution
/// slack. Besides random samples, tries the points with a single nonzero
/// block x_j and p_j = 1/2, where the slack is -p_j(1-p_j)|B_j'K_j x_j|^2/2.
ScanResult FindUceSupersolutionViolation(
    const RegimeEnsemble& e, std::span<const RiccatiSolution> riccati,
    int trials, std::uint64_t seed);

}  // namespace adaptive_lqr
