#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "adaptive_lqr/bellman.h"
#include "adaptive_lqr/regime.h"
#include "adaptive_lqr/riccati.h"

namespace adaptive_lqr {

// Feedback laws. Every law sees only filter-visible data: time, the regime
// state ensemble x_1..x_N, the belief and the conditional signal zhat.

struct ZeroPolicy {};

/// u = -B_j'K_j x_j for one fixed regime index j.
struct LqPerRegimePolicy {
  int regime = 0;
};

/// u = -F zhat
struct CertaintyEquivalentPolicy {
  Matrix F;
};

/// u = -sum_j B_j' grad_j f(x, p) for a candidate value f.
struct BellmanGradientPolicy {
  ValueKind kind = ValueKind::kVce;
  double lambda = 1.0;
};

/// Deterministic control u(t), linearly interpolated from a table and held at
/// the last entry beyond it. Evaluated at step midpoints.
struct OpenLoopPolicy {
  std::vector<double> times;
  std::vector<Vector> values;

  Vector At(double t) const;
};

using Policy = std::variant<ZeroPolicy, LqPerRegimePolicy,
                            CertaintyEquivalentPolicy, BellmanGradientPolicy,
                            OpenLoopPolicy>;

std::string Describe(const Policy& policy);

/// True when the policy needs per-regime Riccati solutions.
bool NeedsRiccati(const Policy& policy);

struct SimConfig {
  double dt = 1e-3;
  double T = 10.0;
  int paths = 1000;
  std::uint64_t seed = 0;
  bool tail_estimate = false;
  int threads = 0;  // 0: ADAPTIVE_LQR_THREADS or hardware concurrency
  bool keep_records = false;
  std::vector<double> checkpoints;  // times at which E|x_theta(t)|^2 is kept

  int steps() const;
};

void ValidateConfig(const SimConfig& cfg);

/// Worker count: explicit value, else ADAPTIVE_LQR_THREADS, else hardware.
int ResolveThreads(int requested);

struct PathRecord {
  long path_id = 0;
  int theta = 0;
  double cost = 0.0;        // includes the tail proxy when enabled
  double tail = 0.0;
  double entropy_final = 0.0;
  double quad = 0.0;        // entropy ledger accumulation
  double terminal_msq = 0.0;  // |x_theta(T)|^2
  Vector belief_final;
  std::vector<double> checkpoint_msq;
  bool blew_up = false;
};

struct SimRun {
  int paths = 0;
  int completed = 0;
  int blowups = 0;
  double cost_mean = 0.0;
  double cost_stderr = 0.0;
  double entropy_final_mean = 0.0;
  double entropy_final_stderr = 0.0;
  double modified_cost_mean = 0.0;  // cost + H(p(T))
  double modified_cost_stderr = 0.0;
  double quad_mean = 0.0;
  double quad_stderr = 0.0;
  double ledger_mean = 0.0;  // H(p(T)) + quad, whose mean should be H(p)
  double ledger_stderr = 0.0;
  double terminal_state_msq = 0.0;
  long clamp_count = 0;
  Vector belief_final_mean;
  Vector belief_final_stderr;
  std::vector<double> checkpoint_msq;
  std::vector<PathRecord> records;  // filled when cfg.keep_records
};

/// Per-step trace of one path.
struct PathTrace {
  std::vector<double> t;
  std::vector<Vector> belief;
  std::vector<double> entropy;
  std::vector<double> quad;  // cumulative
  std::vector<Vector> u;     // control applied on [t_k, t_k+1)
  std::vector<Vector> x_theta;
};

/// Simulates a single path. `theta_override` replaces the sampled regime
/// without changing the random stream, so noise is shared across overrides.
PathRecord SimulatePath(const RegimeEnsemble& e, const Policy& policy,
                        const SimConfig& cfg, long path_index,
                        std::optional<int> theta_override = std::nullopt,
                        PathTrace* trace = nullptr);

/// Monte Carlo over cfg.paths independent paths. Paths are keyed by
/// (seed, path index) and reduced in index order, so the statistics do not
/// depend on the worker count. Throws NumericalError when more than 1% of the
/// paths blow up.
SimRun Simulate(const RegimeEnsemble& e, const Policy& policy,
                const SimConfig& cfg);

/// Spectral abscissa of A_j - B_j F G_j for every regime.
std::vector<double> UniformStabilizabilityCheck(const RegimeEnsemble& e,
                                                const Matrix& F);

struct AdaptiveStabilityReport {
  std::vector<double> abscissas;
  double mu = 0.0;  // -max abscissa
  std::vector<double> horizons;
  std::vector<double> msq;  // E|x_theta(t)|^2 at each horizon
  double initial_msq = 0.0;  // sum_j p_j |x_j|^2
  SimRun run;
  double c_witness = 0.0;  // modified cost / (sum p_j |x_j|^2 / 2 + H(p))
};

/// Simulates u = -F zhat and reports mean-square decay over `horizons` (the
/// last one is the simulated horizon) together with the empirical constant
/// bounding the modified cost. Requires uniform stabilizability.
AdaptiveStabilityReport AdaptiveStabilityRun(const RegimeEnsemble& e,
                                             const Matrix& F,
                                             const SimConfig& cfg,
                                             std::vector<double> horizons);

}  // namespace adaptive_lqr
