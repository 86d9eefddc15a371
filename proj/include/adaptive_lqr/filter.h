#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "adaptive_lqr/regime.h"

namespace adaptive_lqr {

/// Regime-belief filter state. The belief is the Bayes normalization of the
/// prior against the accumulated log-likelihoods.
struct FilterState {
  Vector log_prior;  // -inf where the prior vanishes
  Vector log_lik;    // log l_j(t)
  Belief belief;
  double t = 0.0;
  long clamp_count = 0;  // innovation form only: negative entries clamped
};

FilterState MakeFilterState(const Belief& prior);

/// Observation record y on a strictly increasing grid starting at (0, 0).
struct ObservationPath {
  std::vector<double> times;
  std::vector<Vector> y;
};

void ValidateObservationPath(const ObservationPath& path);

/// Log-likelihood update followed by Bayes normalization (log-sum-exp).
/// log l_j += <z_j, dy> - |z_j|^2 dt / 2 with z_j evaluated at the left end
/// of the step. The returned belief is on the simplex by construction.
FilterState BayesStep(const FilterState& fs, std::span<const Vector> z,
                      const Vector& dy, double dt);

/// Discretization of the innovation SDE. Euler-Maruyama converges to the
/// Bayes filter at strong order 1/2 only; Milstein adds the second-order
/// Ito correction and converges at order 1 (the noise fields commute).
enum class InnovationScheme { kEuler, kMilstein };

/// Step of the innovation form dp_j = p_j <z_j - zhat, dy - zhat dt>.
/// Negative entries are clamped to zero (counted in clamp_count) and the
/// belief renormalized. Kept as an independent cross-check of BayesStep.
FilterState InnovationStep(const FilterState& fs, std::span<const Vector> z,
                           const Vector& dy, double dt,
                           InnovationScheme scheme = InnovationScheme::kEuler);

/// zhat = sum_j p_j z_j
Vector ConditionalSignal(const FilterState& fs, std::span<const Vector> z);

enum class FilterForm { kBayes, kInnovation };

/// Filters along a recorded observation path. `signals(t)` returns the N
/// regime signals at grid time t. Returns one state per grid point.
std::vector<FilterState> FilterAlongPath(
    const Belief& prior, const ObservationPath& path,
    const std::function<std::vector<Vector>(double)>& signals,
    FilterForm form = FilterForm::kBayes,
    InnovationScheme scheme = InnovationScheme::kEuler);

struct EntropyLedgerResult {
  double H0 = 0.0;
  double HT = 0.0;
  double quad = 0.0;  // (1/2) sum_steps sum_j p_j |z_j - zhat|^2 dt
};

/// Running accumulation of the entropy ledger along one trajectory.
class EntropyLedger {
 public:
  explicit EntropyLedger(const Belief& prior) : h0_(Entropy(prior)) {}

  /// Adds the left-point contribution of one step of length dt.
  void Add(const Belief& b, std::span<const Vector> z, double dt);
  EntropyLedgerResult Finish(const Belief& final_belief) const;
  double quad() const { return quad_; }

 private:
  double h0_;
  double quad_ = 0.0;
};

/// Ledger of a completed trajectory: states[k] pairs with z_history[k] for
/// k < states.size() - 1, each step of length dt.
EntropyLedgerResult ComputeEntropyLedger(
    std::span<const FilterState> states,
    std::span<const std::vector<Vector>> z_history, double dt);

/// One CSV row per state: t, p_1..p_N, H(p), cumulative quad.
void WriteFilterTrajectoryCsv(std::ostream& os,
                              std::span<const FilterState> states,
                              std::span<const double> cumulative_quad);

namespace kernel {

// Allocation-free building blocks shared with the Monte Carlo simulator.
// Signals are packed row-major: z[j * o + k] is component k of z_j.

/// log_lik[j] += <z_j, dy> - |z_j|^2 dt / 2
void AccumulateLogLikelihood(std::span<double> log_lik,
                             std::span<const double> z,
                             std::span<const double> dy, double dt);

/// p = softmax(log_prior + log_lik), computed with the max shift.
void NormalizeBelief(std::span<const double> log_prior,
                     std::span<const double> log_lik, std::span<double> p);

/// (1/2) sum_j p_j |z_j - zhat|^2; zhat is written to `zhat`.
double HalfConditionalVariance(std::span<const double> p,
                               std::span<const double> z,
                               std::span<double> zhat);

}  // namespace kernel

}  // namespace adaptive_lqr
