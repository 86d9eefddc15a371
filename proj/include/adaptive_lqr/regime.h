#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace adaptive_lqr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised for malformed inputs (dimension mismatches, invalid beliefs, bad
/// configuration). The CLI maps it to exit status 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure fails (non-finite values, solver
/// non-convergence, excessive blow-ups). The CLI maps it to exit status 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One linear system: x' = A x + B u, cost output C x, signal G x.
struct LinearRegime {
  Matrix A;  // n x n
  Matrix B;  // n x i
  Matrix C;  // q x n
  Matrix G;  // o x n

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index input_dim() const { return B.cols(); }
  Eigen::Index output_dim() const { return G.rows(); }
};

/// A point of the probability simplex.
///
/// Construction normalizes inputs whose sum is within 1e-9 of one and rejects
/// anything further away, negative, or non-finite.
class Belief {
 public:
  static constexpr double kNormalizeTolerance = 1e-9;

  explicit Belief(Vector p);

  /// Uniform belief over n regimes.
  static Belief Uniform(Eigen::Index n);
  /// Divides nonnegative weights by their sum. Used by filters, whose
  /// updates produce unnormalized weights by construction.
  static Belief FromWeights(const Vector& w);
  /// The vertex delta_j of the simplex.
  static Belief Vertex(Eigen::Index n, Eigen::Index j);

  const Vector& p() const { return p_; }
  double operator[](Eigen::Index j) const { return p_[j]; }
  Eigen::Index size() const { return p_.size(); }

 private:
  Belief() = default;

  Vector p_;
};

struct RegimeEnsemble {
  std::vector<LinearRegime> regimes;
  Vector prior;             // validated through Belief when consumed
  std::vector<Vector> x0;   // x0[j] has dimension n_j

  std::size_t size() const { return regimes.size(); }
  Eigen::Index input_dim() const {
    return regimes.empty() ? 0 : regimes.front().input_dim();
  }
  Eigen::Index output_dim() const {
    return regimes.empty() ? 0 : regimes.front().output_dim();
  }
  Belief prior_belief() const { return Belief(prior); }
};

/// The completely observed hyperstate (x_1..x_N, p_1..p_N) at time t.
struct HyperState {
  std::vector<Vector> x;
  Belief belief;
  double t = 0.0;
};

struct Diagnostic {
  int regime = -1;  // -1 when the problem is not attached to a regime
  std::string field;
  std::string message;
};

/// Returns one diagnostic per violated invariant; empty iff the ensemble is
/// well formed.
std::vector<Diagnostic> ValidateEnsemble(const RegimeEnsemble& e);

/// Throws ValidationError carrying all diagnostics when the ensemble is invalid.
void RequireValid(const RegimeEnsemble& e);

std::string FormatDiagnostics(const std::vector<Diagnostic>& diagnostics);

/// Shannon entropy -sum p_j log p_j with 0 log 0 = 0.
double Entropy(const Belief& b);
double Entropy(const Vector& p);

/// Belief-weighted combination sum_j p_j v_j.
Vector Mix(std::span<const Vector> vectors, const Belief& b);

/// sum_j p_j |v_j - mix|^2.
double ConditionalVariance(std::span<const Vector> vectors, const Belief& b);

}  // namespace adaptive_lqr
