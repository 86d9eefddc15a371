#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaptive_lqr/bellman.h"
#include "adaptive_lqr/closed_loop.h"

namespace adaptive_lqr {

/// Commands understood by RunExperiment.
const std::vector<std::string>& ExperimentCommands();

struct ExperimentSpec {
  std::string command;
  std::filesystem::path ensemble_path;
  std::optional<nlohmann::json> ensemble_inline;  // wins over ensemble_path
  std::map<std::string, std::string> overrides;
  std::string output = "-";  // "-" is standard output
  std::string format = "json";

  /// Rebuilds the spec embedded in a report's "config" block.
  static ExperimentSpec FromReport(const nlohmann::json& report);
};

/// Numeric and policy parameters of an experiment. Every field has a default
/// and can be overridden by key (see ParseSettings).
struct Settings {
  double dt = 1e-3;
  double T = 10.0;
  int paths = 1000;
  std::uint64_t seed = 1;
  int threads = 0;
  bool tail = false;
  double tol = 1e-8;        // certificate residual / defect tolerance
  double scan_tol = 1e-10;  // variance and residual scan tolerance
  int trials = 10000;
  std::string policy = "ce";
  std::string policies = "ce,zero";  // compare-policies
  std::string value = "V_ce";        // residual-scan / bellman policy
  std::optional<Matrix> F;
  double lambda = 1.0;
  double c = 1.0;                    // open-loop amplitude u = -c exp(-t)
  double x_plus = 1.0;               // scalar integrator initial states
  double x_minus = -1.0;
  double p = 0.5;                    // scalar integrator prior P(theta=+1)
  long path = 0;                     // filter-demo path index
  int stride = 1;                    // filter-demo row stride
  int bins = 5;                      // entropy-identity consistency bins
  std::vector<double> horizons;      // stabilize-report
};

Settings ParseSettings(const std::map<std::string, std::string>& overrides);

/// All settings as strings, defaults included. Feeding this map back to
/// ParseSettings reproduces the same Settings.
std::map<std::string, std::string> ResolvedOverrides(const Settings& s);

/// Two scalar integrators dx = ±u dt with C = 1 and a blind signal (G = 0),
/// started at x_plus and x_minus, prior (p, 1 - p).
RegimeEnsemble ScalarIntegratorEnsemble(double x_plus, double x_minus,
                                        double p);

/// u(t) = -amplitude exp(-t) tabulated on [0, horizon] at spacing dt / 2.
OpenLoopPolicy OpenLoopExponential(double amplitude, double horizon,
                                   double dt);

/// Parses "zero", "ce", "lq:<j>", "bellman:<U_ce|V_ce|scaled>",
/// "openloop:exp". The CE gain comes from settings.F or, when absent, the
/// least-squares certificate of the ensemble.
Policy ParsePolicy(const std::string& text, const RegimeEnsemble& e,
                   const Settings& settings);

struct ExperimentResult {
  int status = 0;  // 0 ok, 1 validation failure, 2 numerical failure
  nlohmann::json report;
  std::string csv;
  std::string error;
};

/// Dispatches one command. Never throws for validation or numerical
/// failures; they are mapped to the status code.
ExperimentResult RunExperiment(const ExperimentSpec& spec);

/// Runs the experiment and writes the artifact to spec.output in
/// spec.format. Errors are written to `err`. Returns the exit status.
int RunAndWrite(const ExperimentSpec& spec, std::ostream& out,
                std::ostream& err);

// ---------------------------------------------------------------------------
// Monte Carlo checks on belief statistics, computed from kept path records.

struct EntropyIdentityCheck {
  double H0 = 0.0;
  double HT_mean = 0.0;
  double quad_mean = 0.0;
  double gap = 0.0;     // H0 - E[HT] - E[quad]
  double stderr_ = 0.0;  // of HT + quad
  double bound = 0.0;   // 3 stderr + slack
  bool pass = false;
};

EntropyIdentityCheck CheckEntropyIdentity(const SimRun& run,
                                          const Belief& prior, double slack);

struct MartingaleCheck {
  Vector mean;     // E[p_j(T)]
  Vector stderr_;
  Vector prior;
  bool pass = false;
};

/// |E[p_j(T)] - p_j(0)| <= 3 stderr for every j.
MartingaleCheck CheckMartingale(const SimRun& run, const Belief& prior);

struct ConsistencyBin {
  int regime = 0;
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
  double fraction = 0.0;  // of paths with theta == regime
  double stderr_ = 0.0;
  bool pass = true;
};

/// For each regime and each bin [a, b] of p_j(T): the fraction of paths with
/// theta = j lies in [a - 3 se, b + 3 se]. Bins with fewer than `min_count`
/// paths are reported but always pass.
std::vector<ConsistencyBin> CheckBayesConsistency(const SimRun& run,
                                                  int bins,
                                                  int min_count = 30);

struct PolicyRow {
  std::string name;
  SimRun run;
  bool uce_bound_ok = true;     // cost + 3 se >= U_ce
  std::optional<bool> vce_bound_ok;  // modified cost <= V_ce + 3 se
};

struct PolicyComparison {
  double U_ce = 0.0;
  double V_ce = 0.0;
  std::optional<FeedbackCertificate> certificate;
  std::vector<PolicyRow> rows;
};

/// Simulates every policy with the same seed (common random numbers) and
/// checks U_ce <= cost for all, and modified cost <= V_ce for the CE feedback
/// of a supersolution certificate.
PolicyComparison ComparePolicies(
    const RegimeEnsemble& e,
    const std::vector<std::pair<std::string, Policy>>& policies,
    const SimConfig& cfg, double tolerance = 1e-8);

nlohmann::json ToJson(const SimRun& run);
nlohmann::json ToJson(const FeedbackCertificate& cert);

}  // namespace adaptive_lqr
