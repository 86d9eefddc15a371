#include "adaptive_lqr/bellman.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace adaptive_lqr {
namespace {

void CheckBlocks(const RegimeEnsemble& e, std::span<const Vector> x,
                 const Belief& b) {
  const std::size_t n = e.regimes.size();
  if (x.size() != n || static_cast<std::size_t>(b.size()) != n) {
    throw ValidationError("hyperstate has " + std::to_string(x.size()) +
                          " state blocks and " + std::to_string(b.size()) +
                          " probabilities, expected " + std::to_string(n));
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (x[j].size() != e.regimes[j].state_dim()) {
      throw ValidationError("state block " + std::to_string(j) +
                            " has dimension " + std::to_string(x[j].size()) +
                            ", expected " +
                            std::to_string(e.regimes[j].state_dim()));
    }
  }
}

void CheckRiccati(std::span<const RiccatiSolution> riccati,
                  std::span<const Vector> x) {
  if (riccati.size() != x.size()) {
    throw ValidationError("expected one Riccati solution per regime");
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (riccati[j].K.rows() != x[j].size()) {
      throw ValidationError("Riccati solution " + std::to_string(j) +
                            " does not match the state dimension");
    }
  }
}

// B_j' K_j x_j for every regime.
std::vector<Vector> OptimalControls(std::span<const RiccatiSolution> riccati,
                                    std::span<const Vector> x) {
  std::vector<Vector> out;
  out.reserve(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    out.push_back(riccati[j].gain * x[j]);
  }
  return out;
}

}  // namespace

std::string ToString(ValueKind kind) {
  switch (kind) {
    case ValueKind::kUce: return "U_ce";
    case ValueKind::kVce: return "V_ce";
    case ValueKind::kScaledEntropy: return "scaled";
  }
  return "unknown";
}

ValueKind ValueKindFromString(const std::string& name) {
  if (name == "U_ce" || name == "uce") return ValueKind::kUce;
  if (name == "V_ce" || name == "vce") return ValueKind::kVce;
  if (name == "scaled") return ValueKind::kScaledEntropy;
  throw ValidationError("unknown value function '" + name + "'");
}

double ValueSpec::entropy_weight() const {
  switch (kind) {
    case ValueKind::kUce: return 0.0;
    case ValueKind::kVce: return 1.0;
    case ValueKind::kScaledEntropy: return lambda * lambda;
  }
  return 0.0;
}

ValueSpec MakeValueSpec(ValueKind kind, const RegimeEnsemble& e,
                        double lambda) {
  return {kind, lambda, SolveAll(e)};
}

double ValueEval(const ValueSpec& vs, std::span<const Vector> x,
                 const Belief& b) {
  CheckRiccati(vs.riccati, x);
  double quadratic = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    quadratic += b[static_cast<Eigen::Index>(j)] * LqValue(vs.riccati[j], x[j]);
  }
  return quadratic + vs.entropy_weight() * Entropy(b);
}

std::vector<Vector> ValueGradient(const ValueSpec& vs,
                                  std::span<const Vector> x, const Belief& b) {
  CheckRiccati(vs.riccati, x);
  std::vector<Vector> out;
  out.reserve(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    out.push_back(b[static_cast<Eigen::Index>(j)] * (vs.riccati[j].K * x[j]));
  }
  return out;
}

HamiltonianValue Hamiltonian(const RegimeEnsemble& e,
                             std::span<const Vector> x, const Belief& b,
                             std::span<const Vector> D) {
  CheckBlocks(e, x, b);
  if (D.size() != x.size()) {
    throw ValidationError("hamiltonian: one gradient block per regime");
  }
  double value = 0.0;
  Vector sum_btd = Vector::Zero(e.input_dim());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const LinearRegime& r = e.regimes[j];
    if (D[j].size() != x[j].size()) {
      throw ValidationError("hamiltonian: gradient block " +
                            std::to_string(j) + " has wrong dimension");
    }
    value += 0.5 * b[static_cast<Eigen::Index>(j)] * (r.C * x[j]).squaredNorm();
    value += D[j].dot(r.A * x[j]);
    sum_btd += r.B.transpose() * D[j];
  }
  value -= 0.5 * sum_btd.squaredNorm();
  return {value, -sum_btd};
}

double GeneratorOnHessian(const Matrix& hessian_p, const Belief& b,
                          std::span<const Vector> z) {
  const Eigen::Index n = b.size();
  if (hessian_p.rows() != n || hessian_p.cols() != n) {
    throw ValidationError("generator: Hessian must be N x N");
  }
  const Vector zhat = Mix(z, b);
  double out = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < n; ++k) {
      if (hessian_p(j, k) == 0.0) continue;
      out += hessian_p(j, k) * b[j] * b[k] *
             (z[static_cast<std::size_t>(j)] - zhat)
                 .dot(z[static_cast<std::size_t>(k)] - zhat);
    }
  }
  return 0.5 * out;
}

double GeneratorOn(const ValueSpec& vs, const Belief& b,
                   std::span<const Vector> z) {
  // d^2 H / dp_j dp_k = -delta_jk / p_j, so p_j p_k H_jk = -p_j delta_jk.
  return -0.5 * vs.entropy_weight() * ConditionalVariance(z, b);
}

std::vector<Vector> Signals(const RegimeEnsemble& e,
                            std::span<const Vector> x) {
  std::vector<Vector> z;
  z.reserve(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) z.push_back(e.regimes[j].G * x[j]);
  return z;
}

double BellmanResidual(const ValueSpec& vs, const RegimeEnsemble& e,
                       std::span<const Vector> x, const Belief& b) {
  CheckBlocks(e, x, b);
  const auto gradient = ValueGradient(vs, x, b);
  const double hamiltonian = Hamiltonian(e, x, b, gradient).value;
  return -GeneratorOn(vs, b, Signals(e, x)) - hamiltonian;
}

std::string ToString(CeClassification c) {
  switch (c) {
    case CeClassification::kExactCe: return "exact_ce";
    case CeClassification::kSupersolution: return "supersolution";
    case CeClassification::kNone: return "none";
  }
  return "none";
}

bool IsFaithful(const RegimeEnsemble& e) {
  return std::any_of(e.regimes.begin(), e.regimes.end(),
                     [](const LinearRegime& r) {
                       return NumericalRank(r.G) == r.G.rows();
                     });
}

FeedbackCertificate SolveFeedback(const RegimeEnsemble& e,
                                  std::span<const RiccatiSolution> riccati,
                                  double tolerance) {
  if (riccati.size() != e.regimes.size()) {
    throw ValidationError("solve_feedback: one Riccati solution per regime");
  }
  const Eigen::Index o = e.output_dim();
  const Eigen::Index i = e.input_dim();
  Eigen::Index columns = 0;
  for (const LinearRegime& r : e.regimes) columns += r.state_dim();

  Matrix signal_stack(o, columns);
  Matrix gain_stack(i, columns);
  Eigen::Index offset = 0;
  for (std::size_t j = 0; j < e.regimes.size(); ++j) {
    const Eigen::Index n = e.regimes[j].state_dim();
    signal_stack.middleCols(offset, n) = e.regimes[j].G;
    gain_stack.middleCols(offset, n) = riccati[j].gain;
    offset += n;
  }

  FeedbackCertificate cert;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(signal_stack.transpose());
  cert.F = cod.solve(gain_stack.transpose()).transpose();
  for (std::size_t j = 0; j < e.regimes.size(); ++j) {
    cert.residual = std::max(
        cert.residual, OperatorNorm(cert.F * e.regimes[j].G - riccati[j].gain));
  }
  cert.norm = OperatorNorm(cert.F);
  cert.partial_isometry_defect =
      OperatorNorm(cert.F * cert.F.transpose() * cert.F - cert.F);
  cert.faithful = IsFaithful(e);
  if (cert.residual <= tolerance &&
      cert.partial_isometry_defect <= tolerance) {
    cert.classification = CeClassification::kExactCe;
  } else if (cert.residual <= tolerance && cert.norm <= 1.0 + tolerance) {
    cert.classification = CeClassification::kSupersolution;
  }
  return cert;
}

double VarianceGap(const RegimeEnsemble& e,
                   std::span<const RiccatiSolution> riccati,
                   std::span<const Vector> x, const Belief& b,
                   double lambda) {
  CheckBlocks(e, x, b);
  CheckRiccati(riccati, x);
  return lambda * lambda * ConditionalVariance(Signals(e, x), b) -
         ConditionalVariance(OptimalControls(riccati, x), b);
}

HyperstateSample SampleHyperstate(const RegimeEnsemble& e,
                                  std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::exponential_distribution<double> exponential(1.0);
  std::vector<Vector> x;
  x.reserve(e.regimes.size());
  for (const LinearRegime& r : e.regimes) {
    Vector v(r.state_dim());
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = uniform(rng);
    x.push_back(std::move(v));
  }
  Vector w(static_cast<Eigen::Index>(e.regimes.size()));
  for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = exponential(rng);
  return {std::move(x), Belief::FromWeights(w)};
}

namespace {

template <typename Fn>
ScanResult Scan(const RegimeEnsemble& e, int trials, std::uint64_t seed,
                Fn&& evaluate) {
  ScanResult result;
  result.min_value = std::numeric_limits<double>::infinity();
  result.max_value = -std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    HyperstateSample s = SampleHyperstate(e, rng);
    const double v = evaluate(s.x, s.belief);
    result.max_value = std::max(result.max_value, v);
    if (v < result.min_value) {
      result.min_value = v;
      result.argmin_x = s.x;
      result.argmin_p = s.belief.p();
    }
  }
  result.trials = trials;
  return result;
}

}  // namespace

ScanResult VarianceInequalityScan(const RegimeEnsemble& e,
                                  std::span<const RiccatiSolution> riccati,
                                  int trials, std::uint64_t seed,
                                  double lambda) {
  return Scan(e, trials, seed,
              [&](std::span<const Vector> x, const Belief& b) {
                return VarianceGap(e, riccati, x, b, lambda);
              });
}

ScanResult BellmanResidualScan(const ValueSpec& vs, const RegimeEnsemble& e,
                               int trials, std::uint64_t seed) {
  return Scan(e, trials, seed,
              [&](std::span<const Vector> x, const Belief& b) {
                return BellmanResidual(vs, e, x, b);
              });
}

ScanResult FindUceSupersolutionViolation(
    const RegimeEnsemble& e, std::span<const RiccatiSolution> riccati,
    int trials, std::uint64_t seed) {
  const ValueSpec uce{ValueKind::kUce, 1.0,
                      {riccati.begin(), riccati.end()}};
  ScanResult result = BellmanResidualScan(uce, e, trials, seed);
  const std::size_t n = e.regimes.size();
  if (n < 2) return result;

  // Single nonzero block x_j along the dominant direction of B_j'K_j.
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<Vector> x;
    for (const LinearRegime& r : e.regimes) {
      x.push_back(Vector::Zero(r.state_dim()));
    }
    Eigen::JacobiSVD<Matrix> svd(riccati[j].gain, Eigen::ComputeFullV);
    x[j] = svd.matrixV().col(0);
    Vector p = Vector::Constant(static_cast<Eigen::Index>(n),
                                0.5 / static_cast<double>(n - 1));
    p[static_cast<Eigen::Index>(j)] = 0.5;
    const Belief b(p);
    const double v = BellmanResidual(uce, e, x, b);
    result.max_value = std::max(result.max_value, v);
    if (v < result.min_value) {
      result.min_value = v;
      result.argmin_x = x;
      result.argmin_p = p;
    }
    ++result.trials;
  }
  return result;
}

}  // namespace adaptive_lqr
