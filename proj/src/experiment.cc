#include "adaptive_lqr/experiment.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <iostream>
#include <sstream>

#include "adaptive_lqr/ensemble_io.h"
#include "adaptive_lqr/filter.h"
#include "adaptive_lqr/riccati.h"

#ifndef ADAPTIVE_LQR_BUILD_FINGERPRINT
#define ADAPTIVE_LQR_BUILD_FINGERPRINT "unknown"
#endif

namespace adaptive_lqr {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double ParseDouble(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("override " + key + ": not a number: '" + text + "'");
  }
}

long long ParseInteger(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("override " + key + ": not an integer: '" + text +
                          "'");
  }
}

bool ParseBool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "no") return false;
  throw ValidationError("override " + key + ": not a boolean: '" + text + "'");
}

std::vector<double> ParseList(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(ParseDouble(key, item));
  }
  return out;
}

// Command-specific defaults, applied before user overrides.
std::map<std::string, std::string> CommandDefaults(const std::string& cmd) {
  if (cmd == "entropy-identity") {
    return {{"policy", "zero"}, {"T", "4"}, {"paths", "10000"}};
  }
  if (cmd == "filter-demo") return {{"policy", "zero"}, {"T", "1"}};
  if (cmd == "scalar-integrator") {
    return {{"policy", "openloop:exp"}, {"T", "20"}, {"paths", "200"}};
  }
  if (cmd == "stabilize-report") return {{"paths", "2000"}};
  return {};
}

double UceAt(const std::vector<RiccatiSolution>& riccati,
             const RegimeEnsemble& e) {
  const ValueSpec uce{ValueKind::kUce, 1.0, riccati};
  return ValueEval(uce, e.x0, e.prior_belief());
}

bool AllMinimal(const RegimeEnsemble& e) {
  return std::all_of(e.regimes.begin(), e.regimes.end(),
                     [](const LinearRegime& r) {
                       return IsMinimal(r).minimal();
                     });
}

SimConfig MakeSimConfig(const Settings& s) {
  SimConfig cfg;
  cfg.dt = s.dt;
  cfg.T = s.T;
  cfg.paths = s.paths;
  cfg.seed = s.seed;
  cfg.threads = s.threads;
  cfg.tail_estimate = s.tail;
  return cfg;
}

struct CommandOutput {
  json results;
  std::vector<std::string> csv_columns;
  std::string csv;
};

std::string CsvHeader(const std::vector<std::string>& columns) {
  std::string out;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (k > 0) out += ",";
    out += columns[k];
  }
  return out + "\n";
}

// --- commands --------------------------------------------------------------

CommandOutput RunRiccati(const RegimeEnsemble& e, const Settings&) {
  CommandOutput out;
  out.csv_columns = {"regime",   "controllable", "observable",
                     "K",        "gain",         "spectral_abscissa",
                     "residual", "lq_value_x0"};
  std::ostringstream csv;
  csv << CsvHeader(out.csv_columns);
  json regimes = json::array();
  for (std::size_t j = 0; j < e.size(); ++j) {
    const LinearRegime& r = e.regimes[j];
    const Minimality mm = IsMinimal(r);
    json entry = {{"regime", j},
                  {"controllable", mm.controllable},
                  {"observable", mm.observable}};
    if (!mm.minimal()) {
      entry["error"] = "minimality required";
      regimes.push_back(entry);
      csv << j << "," << mm.controllable << "," << mm.observable
          << ",,,,,\n";
      continue;
    }
    const RiccatiSolution sol = RiccatiAlgebraic(r);
    const double horizon = 30.0 / std::abs(sol.spectral_abscissa);
    const Matrix k_ode =
        RiccatiOde(r, horizon, DefaultRiccatiSteps(r, horizon));
    entry["K"] = MatrixToJson(sol.K);
    entry["gain"] = MatrixToJson(sol.gain);
    entry["Abar"] = MatrixToJson(sol.Abar);
    entry["spectral_abscissa"] = sol.spectral_abscissa;
    entry["residual"] = sol.residual;
    entry["iterations"] = sol.iterations;
    entry["lq_value_x0"] = LqValue(sol, e.x0[j]);
    entry["ode_horizon"] = horizon;
    entry["ode_difference"] = OperatorNorm(k_ode - sol.K);
    regimes.push_back(entry);
    csv << j << "," << mm.controllable << "," << mm.observable << ",\""
        << MatrixToJson(sol.K).dump() << "\",\""
        << MatrixToJson(sol.gain).dump() << "\","
        << FormatDouble(sol.spectral_abscissa) << ","
        << FormatDouble(sol.residual) << ","
        << FormatDouble(LqValue(sol, e.x0[j])) << "\n";
  }
  out.results = {{"regimes", regimes}};
  out.csv = csv.str();
  return out;
}

CommandOutput RunFilterDemo(const RegimeEnsemble& e, const Settings& s) {
  const Policy policy = ParsePolicy(s.policy, e, s);
  SimConfig cfg = MakeSimConfig(s);
  PathTrace trace;
  const PathRecord rec = SimulatePath(e, policy, cfg, s.path, std::nullopt,
                                      &trace);
  CommandOutput out;
  out.csv_columns = {"t"};
  for (std::size_t j = 0; j < e.size(); ++j) {
    out.csv_columns.push_back("p_" + std::to_string(j + 1));
  }
  out.csv_columns.push_back("H");
  out.csv_columns.push_back("quad");
  std::ostringstream csv;
  csv << CsvHeader(out.csv_columns);
  const int stride = std::max(1, s.stride);
  for (std::size_t k = 0; k < trace.t.size(); ++k) {
    if (k % static_cast<std::size_t>(stride) != 0 && k + 1 != trace.t.size()) {
      continue;
    }
    csv << FormatDouble(trace.t[k]);
    for (Eigen::Index j = 0; j < trace.belief[k].size(); ++j) {
      csv << "," << FormatDouble(trace.belief[k][j]);
    }
    csv << "," << FormatDouble(trace.entropy[k]) << ","
        << FormatDouble(trace.quad[k]) << "\n";
  }
  out.csv = csv.str();
  out.results = {{"path", s.path},
                 {"theta", rec.theta},
                 {"blew_up", rec.blew_up},
                 {"cost", rec.cost},
                 {"H0", trace.entropy.front()},
                 {"H_final", trace.entropy.back()},
                 {"quad", trace.quad.back()},
                 {"belief_final", VectorToJson(trace.belief.back())}};
  return out;
}

std::string PerPathCsv(const std::vector<PathRecord>& records) {
  std::ostringstream csv;
  csv << "path_id,theta,cost,H_final,terminal_msq\n";
  for (const PathRecord& r : records) {
    csv << r.path_id << "," << r.theta << ",";
    if (r.blew_up) {
      csv << "nan,nan,nan\n";
    } else {
      csv << FormatDouble(r.cost) << "," << FormatDouble(r.entropy_final)
          << "," << FormatDouble(r.terminal_msq) << "\n";
    }
  }
  return csv.str();
}

CommandOutput RunSimulate(const RegimeEnsemble& e, const Settings& s) {
  const Policy policy = ParsePolicy(s.policy, e, s);
  SimConfig cfg = MakeSimConfig(s);
  cfg.keep_records = true;
  SimRun run = Simulate(e, policy, cfg);
  CommandOutput out;
  out.csv_columns = {"path_id", "theta", "cost", "H_final", "terminal_msq"};
  out.csv = PerPathCsv(run.records);
  out.results = ToJson(run);
  out.results["policy"] = Describe(policy);
  if (AllMinimal(e)) {
    const auto riccati = SolveAll(e);
    out.results["U_ce"] = UceAt(riccati, e);
    out.results["V_ce"] = UceAt(riccati, e) + Entropy(e.prior_belief());
  }
  return out;
}

CommandOutput RunCheckCe(const RegimeEnsemble& e, const Settings& s) {
  const auto riccati = SolveAll(e);
  const FeedbackCertificate cert = SolveFeedback(e, riccati, s.tol);
  const ScanResult scan =
      VarianceInequalityScan(e, riccati, s.trials, s.seed, s.lambda);
  CommandOutput out;
  out.results = ToJson(cert);
  out.results["variance_scan_min"] = scan.min_value;
  out.results["variance_scan_trials"] = scan.trials;
  out.results["variance_scan_supports_supersolution"] =
      scan.min_value >= -s.scan_tol;
  if (!cert.faithful) {
    out.results["note"] =
        "signal is not faithful; the scan cannot certify the converse";
  }
  out.csv_columns = {"classification", "residual", "norm", "defect",
                     "faithful", "F"};
  std::ostringstream csv;
  csv << CsvHeader(out.csv_columns) << ToString(cert.classification) << ","
      << FormatDouble(cert.residual) << "," << FormatDouble(cert.norm) << ","
      << FormatDouble(cert.partial_isometry_defect) << "," << cert.faithful
      << ",\"" << MatrixToJson(cert.F).dump() << "\"\n";
  out.csv = csv.str();
  return out;
}

CommandOutput RunResidualScan(const RegimeEnsemble& e, const Settings& s) {
  const ValueKind kind = ValueKindFromString(s.value);
  const ValueSpec vs{kind, s.lambda, SolveAll(e)};
  const ScanResult residual = BellmanResidualScan(vs, e, s.trials, s.seed);
  const ScanResult gap =
      VarianceInequalityScan(e, vs.riccati, s.trials, s.seed, s.lambda);
  const ScanResult uce =
      FindUceSupersolutionViolation(e, vs.riccati, s.trials, s.seed);
  CommandOutput out;
  out.results = {
      {"value", ToString(kind)},
      {"lambda", s.lambda},
      {"trials", s.trials},
      {"residual_min", residual.min_value},
      {"residual_max", residual.max_value},
      {"supersolution_on_samples", residual.min_value >= -s.scan_tol},
      {"subsolution_on_samples", residual.max_value <= s.scan_tol},
      {"variance_gap_min", gap.min_value},
      {"uce_violation_min", uce.min_value},
      {"uce_violation_found", uce.min_value < -s.scan_tol},
  };
  if (!uce.argmin_x.empty()) {
    json x = json::array();
    for (const Vector& v : uce.argmin_x) x.push_back(VectorToJson(v));
    out.results["uce_violation_point"] = {{"x", x},
                                          {"p", VectorToJson(uce.argmin_p)}};
  }
  out.csv_columns = {"value",  "residual_min", "residual_max",
                     "variance_gap_min", "uce_violation_min"};
  std::ostringstream csv;
  csv << CsvHeader(out.csv_columns) << ToString(kind) << ","
      << FormatDouble(residual.min_value) << ","
      << FormatDouble(residual.max_value) << ","
      << FormatDouble(gap.min_value) << "," << FormatDouble(uce.min_value)
      << "\n";
  out.csv = csv.str();
  return out;
}

CommandOutput RunEntropyIdentity(const RegimeEnsemble& e, const Settings& s) {
  const Policy policy = ParsePolicy(s.policy, e, s);
  SimConfig cfg = MakeSimConfig(s);
  cfg.keep_records = true;
  const SimRun run = Simulate(e, policy, cfg);
  const Belief prior = e.prior_belief();
  const EntropyIdentityCheck identity =
      CheckEntropyIdentity(run, prior, 10.0 * s.dt);
  const MartingaleCheck martingale = CheckMartingale(run, prior);
  const auto bins = CheckBayesConsistency(run, s.bins);
  json bin_rows = json::array();
  bool bins_ok = true;
  for (const ConsistencyBin& b : bins) {
    bins_ok = bins_ok && b.pass;
    bin_rows.push_back({{"regime", b.regime},
                        {"lo", b.lo},
                        {"hi", b.hi},
                        {"count", b.count},
                        {"fraction", b.fraction},
                        {"stderr", b.stderr_},
                        {"pass", b.pass}});
  }
  CommandOutput out;
  out.results = {
      {"H0", identity.H0},
      {"HT_mean", identity.HT_mean},
      {"quad_mean", identity.quad_mean},
      {"gap", identity.gap},
      {"stderr", identity.stderr_},
      {"bound", identity.bound},
      {"identity_pass", identity.pass},
      {"martingale",
       {{"mean", VectorToJson(martingale.mean)},
        {"stderr", VectorToJson(martingale.stderr_)},
        {"prior", VectorToJson(martingale.prior)},
        {"pass", martingale.pass}}},
      {"bayes_consistency", {{"bins", bin_rows}, {"pass", bins_ok}}},
      {"run", ToJson(run)},
  };
  out.csv_columns = {"path_id", "theta", "H_final", "quad"};
  std::ostringstream csv;
  csv << CsvHeader(out.csv_columns);
  for (const PathRecord& r : run.records) {
    if (r.blew_up) continue;
    csv << r.path_id << "," << r.theta << "," << FormatDouble(r.entropy_final)
        << "," << FormatDouble(r.quad) << "\n";
  }
  out.csv = csv.str();
  return out;
}

Matrix ResolveFeedback(const RegimeEnsemble& e, const Settings& s) {
  if (s.F) return *s.F;
  return SolveFeedback(e, SolveAll(e), s.tol).F;
}

CommandOutput RunStabilizeReport(const RegimeEnsemble& e, const Settings& s) {
  const Matrix F = ResolveFeedback(e, s);
  const auto abscissas = UniformStabilizabilityCheck(e, F);
  const double mu =
      -*std::max_element(abscissas.begin(), abscissas.end());
  std::vector<double> horizons = s.horizons;
  if (horizons.empty() && mu > 0.0) {
    const double end = 10.0 / mu;
    horizons = {0.25 * end, 0.5 * end, 0.75 * end, end};
  }
  const AdaptiveStabilityReport report =
      AdaptiveStabilityRun(e, F, MakeSimConfig(s), horizons);
  const double final_msq = report.msq.empty() ? 0.0 : report.msq.back();
  CommandOutput out;
  out.results = {
      {"F", MatrixToJson(F)},
      {"abscissas", report.abscissas},
      {"mu", report.mu},
      {"horizons", report.horizons},
      {"msq", report.msq},
      {"initial_msq", report.initial_msq},
      {"decay_ratio",
       report.initial_msq > 0.0 ? final_msq / report.initial_msq : 0.0},
      {"decay_pass", final_msq <= 1e-3 * report.initial_msq},
      {"blowups", report.run.blowups},
      {"modified_cost", report.run.modified_cost_mean},
      {"c_witness", report.c_witness},
      {"run", ToJson(report.run)},
  };
  out.csv_columns = {"horizon", "msq"};
  std::ostringstream csv;
  csv << CsvHeader(out.csv_columns);
  for (std::size_t k = 0; k < report.horizons.size(); ++k) {
    csv << FormatDouble(report.horizons[k]) << ","
        << FormatDouble(report.msq[k]) << "\n";
  }
  out.csv = csv.str();
  return out;
}

CommandOutput RunScalarIntegrator(const Settings& s) {
  const RegimeEnsemble e = ScalarIntegratorEnsemble(s.x_plus, s.x_minus, s.p);
  SimConfig cfg = MakeSimConfig(s);
  const Policy policy = ParsePolicy(s.policy, e, s);
  const SimRun run = Simulate(e, policy, cfg);

  // Terminal states of both regimes under the deterministic control family
  // u = -c exp(-t), swept over c around the given amplitude.
  json sweep = json::array();
  std::ostringstream csv;
  CommandOutput out;
  out.csv_columns = {"c", "x_plus_T", "x_minus_T", "cost"};
  csv << CsvHeader(out.csv_columns);
  double min_terminal = std::numeric_limits<double>::infinity();
  for (int k = -10; k <= 10; ++k) {
    Settings swept = s;
    swept.c = s.c + 0.2 * k;
    const Policy family = OpenLoopExponential(swept.c, s.T, s.dt);
    SimConfig single = cfg;
    single.paths = 1;
    PathTrace plus_trace;
    PathTrace minus_trace;
    const PathRecord plus = SimulatePath(e, family, single, 0, 0, &plus_trace);
    const PathRecord minus =
        SimulatePath(e, family, single, 0, 1, &minus_trace);
    const double xp = plus_trace.x_theta.back()[0];
    const double xm = minus_trace.x_theta.back()[0];
    const double cost = s.p * plus.cost + (1.0 - s.p) * minus.cost;
    min_terminal = std::min(min_terminal, std::max(std::abs(xp), std::abs(xm)));
    sweep.push_back({{"c", swept.c},
                     {"x_plus_T", xp},
                     {"x_minus_T", xm},
                     {"cost", cost}});
    csv << FormatDouble(swept.c) << "," << FormatDouble(xp) << ","
        << FormatDouble(xm) << "," << FormatDouble(cost) << "\n";
  }
  const double separation = 0.5 * std::abs(s.x_plus + s.x_minus);
  out.results = {
      {"cost", run.cost_mean},
      {"cost_stderr", run.cost_stderr},
      {"antisymmetric", s.x_plus == -s.x_minus},
      {"sweep", sweep},
      {"min_terminal_max_abs", min_terminal},
      {"terminal_lower_bound", separation},
      {"never_both_zero", separation > 0.0 ? min_terminal >= separation * (1 - 1e-9)
                                           : false},
      {"run", ToJson(run)},
  };
  if (s.x_plus == -s.x_minus && s.c == s.x_plus) {
    // Both regimes follow x(t) = x_plus e^{-t}.
    out.results["reference_cost"] =
        0.5 * s.x_plus * s.x_plus * (1.0 - std::exp(-2.0 * s.T));
  }
  out.csv = csv.str();
  return out;
}

CommandOutput RunComparePolicies(const RegimeEnsemble& e, const Settings& s) {
  std::vector<std::pair<std::string, Policy>> policies;
  std::string item;
  std::istringstream in(s.policies);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) policies.emplace_back(item, ParsePolicy(item, e, s));
  }
  if (policies.size() < 2) {
    throw ValidationError("compare-policies needs at least two policies");
  }
  const PolicyComparison cmp =
      ComparePolicies(e, policies, MakeSimConfig(s), s.tol);
  CommandOutput out;
  out.csv_columns = {"policy", "cost_mean", "cost_stderr",
                     "modified_cost_mean", "modified_cost_stderr"};
  std::ostringstream csv;
  csv << CsvHeader(out.csv_columns);
  json rows = json::array();
  for (const PolicyRow& row : cmp.rows) {
    json r = {{"policy", row.name},
              {"cost_mean", row.run.cost_mean},
              {"cost_stderr", row.run.cost_stderr},
              {"modified_cost_mean", row.run.modified_cost_mean},
              {"modified_cost_stderr", row.run.modified_cost_stderr},
              {"uce_bound_ok", row.uce_bound_ok}};
    if (row.vce_bound_ok) r["vce_bound_ok"] = *row.vce_bound_ok;
    rows.push_back(r);
    csv << row.name << "," << FormatDouble(row.run.cost_mean) << ","
        << FormatDouble(row.run.cost_stderr) << ","
        << FormatDouble(row.run.modified_cost_mean) << ","
        << FormatDouble(row.run.modified_cost_stderr) << "\n";
  }
  out.results = {{"U_ce", cmp.U_ce}, {"V_ce", cmp.V_ce}, {"rows", rows}};
  if (cmp.certificate) out.results["certificate"] = ToJson(*cmp.certificate);
  out.csv = csv.str();
  return out;
}

}  // namespace

const std::vector<std::string>& ExperimentCommands() {
  static const std::vector<std::string> commands = {
      "riccati",         "filter-demo",       "simulate",
      "check-ce",        "residual-scan",     "entropy-identity",
      "stabilize-report", "scalar-integrator", "compare-policies"};
  return commands;
}

RegimeEnsemble ScalarIntegratorEnsemble(double x_plus, double x_minus,
                                        double p) {
  RegimeEnsemble e;
  for (double sign : {1.0, -1.0}) {
    e.regimes.push_back({Matrix::Zero(1, 1), Matrix::Constant(1, 1, sign),
                         Matrix::Constant(1, 1, 1.0), Matrix::Zero(1, 1)});
  }
  e.prior = Vector(2);
  e.prior << p, 1.0 - p;
  e.x0 = {Vector::Constant(1, x_plus), Vector::Constant(1, x_minus)};
  return e;
}

OpenLoopPolicy OpenLoopExponential(double amplitude, double horizon,
                                   double dt) {
  // Table spacing dt/2 keeps the interpolation error O(dt^2 / 32).
  OpenLoopPolicy policy;
  const double spacing = 0.5 * dt;
  const auto count = static_cast<long>(std::ceil(horizon / spacing)) + 1;
  for (long k = 0; k <= count; ++k) {
    const double t = k * spacing;
    policy.times.push_back(t);
    policy.values.push_back(Vector::Constant(1, -amplitude * std::exp(-t)));
  }
  return policy;
}

ExperimentSpec ExperimentSpec::FromReport(const json& report) {
  if (!report.contains("config")) {
    throw ValidationError("report has no embedded config");
  }
  const json& config = report.at("config");
  ExperimentSpec spec;
  spec.command = config.at("command").get<std::string>();
  spec.ensemble_inline = config.at("ensemble");
  for (const auto& [key, value] : config.at("overrides").items()) {
    spec.overrides[key] = value.get<std::string>();
  }
  return spec;
}

Settings ParseSettings(const std::map<std::string, std::string>& overrides) {
  Settings s;
  for (const auto& [key, value] : overrides) {
    if (key == "dt") {
      s.dt = ParseDouble(key, value);
    } else if (key == "T") {
      s.T = ParseDouble(key, value);
    } else if (key == "paths") {
      s.paths = static_cast<int>(ParseInteger(key, value));
    } else if (key == "seed") {
      s.seed = static_cast<std::uint64_t>(ParseInteger(key, value));
    } else if (key == "threads") {
      s.threads = static_cast<int>(ParseInteger(key, value));
    } else if (key == "tail") {
      s.tail = ParseBool(key, value);
    } else if (key == "tol") {
      s.tol = ParseDouble(key, value);
    } else if (key == "scan_tol") {
      s.scan_tol = ParseDouble(key, value);
    } else if (key == "trials") {
      s.trials = static_cast<int>(ParseInteger(key, value));
    } else if (key == "policy") {
      s.policy = value;
    } else if (key == "policies") {
      s.policies = value;
    } else if (key == "value") {
      s.value = value;
    } else if (key == "F") {
      if (value.empty()) continue;
      try {
        s.F = MatrixFromJson(json::parse(value), "F");
      } catch (const json::parse_error&) {
        throw ValidationError("override F: expected a JSON matrix");
      }
    } else if (key == "lambda") {
      s.lambda = ParseDouble(key, value);
    } else if (key == "c") {
      s.c = ParseDouble(key, value);
    } else if (key == "x_plus") {
      s.x_plus = ParseDouble(key, value);
    } else if (key == "x_minus") {
      s.x_minus = ParseDouble(key, value);
    } else if (key == "p") {
      s.p = ParseDouble(key, value);
    } else if (key == "path") {
      s.path = static_cast<long>(ParseInteger(key, value));
    } else if (key == "stride") {
      s.stride = static_cast<int>(ParseInteger(key, value));
    } else if (key == "bins") {
      s.bins = static_cast<int>(ParseInteger(key, value));
    } else if (key == "horizons") {
      s.horizons = ParseList(key, value);
    } else {
      throw ValidationError("unknown override '" + key + "'");
    }
  }
  if (s.trials < 1) throw ValidationError("trials must be positive");
  if (s.bins < 1) throw ValidationError("bins must be positive");
  return s;
}

std::map<std::string, std::string> ResolvedOverrides(const Settings& s) {
  std::map<std::string, std::string> out = {
      {"dt", FormatDouble(s.dt)},
      {"T", FormatDouble(s.T)},
      {"paths", std::to_string(s.paths)},
      {"seed", std::to_string(s.seed)},
      {"threads", std::to_string(s.threads)},
      {"tail", s.tail ? "true" : "false"},
      {"tol", FormatDouble(s.tol)},
      {"scan_tol", FormatDouble(s.scan_tol)},
      {"trials", std::to_string(s.trials)},
      {"policy", s.policy},
      {"policies", s.policies},
      {"value", s.value},
      {"F", s.F ? MatrixToJson(*s.F).dump() : ""},
      {"lambda", FormatDouble(s.lambda)},
      {"c", FormatDouble(s.c)},
      {"x_plus", FormatDouble(s.x_plus)},
      {"x_minus", FormatDouble(s.x_minus)},
      {"p", FormatDouble(s.p)},
      {"path", std::to_string(s.path)},
      {"stride", std::to_string(s.stride)},
      {"bins", std::to_string(s.bins)},
  };
  std::string horizons;
  for (std::size_t k = 0; k < s.horizons.size(); ++k) {
    if (k > 0) horizons += ",";
    horizons += FormatDouble(s.horizons[k]);
  }
  out["horizons"] = horizons;
  return out;
}

Policy ParsePolicy(const std::string& text, const RegimeEnsemble& e,
                   const Settings& settings) {
  if (text == "zero") return ZeroPolicy{};
  if (text == "ce") {
    return CertaintyEquivalentPolicy{ResolveFeedback(e, settings)};
  }
  if (text.rfind("lq:", 0) == 0) {
    return LqPerRegimePolicy{
        static_cast<int>(ParseInteger("policy", text.substr(3)))};
  }
  if (text.rfind("bellman:", 0) == 0) {
    return BellmanGradientPolicy{ValueKindFromString(text.substr(8)),
                                 settings.lambda};
  }
  if (text == "openloop:exp") {
    return OpenLoopExponential(settings.c, settings.T, settings.dt);
  }
  throw ValidationError("unknown policy '" + text + "'");
}

ExperimentResult RunExperiment(const ExperimentSpec& spec) {
  ExperimentResult result;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto& commands = ExperimentCommands();
    if (std::find(commands.begin(), commands.end(), spec.command) ==
        commands.end()) {
      throw ValidationError("unknown command '" + spec.command + "'");
    }
    std::map<std::string, std::string> merged = CommandDefaults(spec.command);
    for (const auto& [key, value] : spec.overrides) merged[key] = value;
    const Settings settings = ParseSettings(merged);

    RegimeEnsemble e;
    if (spec.command == "scalar-integrator") {
      e = ScalarIntegratorEnsemble(settings.x_plus, settings.x_minus,
                                   settings.p);
    } else if (spec.ensemble_inline) {
      e = EnsembleFromJson(*spec.ensemble_inline);
    } else {
      e = LoadEnsemble(spec.ensemble_path);
    }
    const auto diagnostics = ValidateEnsemble(e);
    if (!diagnostics.empty()) {
      json diag = json::array();
      for (const Diagnostic& d : diagnostics) {
        diag.push_back(
            {{"regime", d.regime}, {"field", d.field}, {"message", d.message}});
      }
      result.status = 1;
      result.report = {{"status", 1}, {"diagnostics", diag}};
      result.error = "invalid ensemble:\n" + FormatDiagnostics(diagnostics);
      return result;
    }

    CommandOutput out;
    if (spec.command == "riccati") {
      out = RunRiccati(e, settings);
    } else if (spec.command == "filter-demo") {
      out = RunFilterDemo(e, settings);
    } else if (spec.command == "simulate") {
      out = RunSimulate(e, settings);
    } else if (spec.command == "check-ce") {
      out = RunCheckCe(e, settings);
    } else if (spec.command == "residual-scan") {
      out = RunResidualScan(e, settings);
    } else if (spec.command == "entropy-identity") {
      out = RunEntropyIdentity(e, settings);
    } else if (spec.command == "stabilize-report") {
      out = RunStabilizeReport(e, settings);
    } else if (spec.command == "scalar-integrator") {
      out = RunScalarIntegrator(settings);
    } else {
      out = RunComparePolicies(e, settings);
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    json overrides = json::object();
    for (const auto& [key, value] : ResolvedOverrides(settings)) {
      overrides[key] = value;
    }
    result.report = {
        {"command", spec.command},
        {"status", 0},
        {"config",
         {{"command", spec.command},
          {"ensemble", EnsembleToJson(e)},
          {"overrides", overrides}}},
        {"build", {{"version", kVersion},
                   {"fingerprint", ADAPTIVE_LQR_BUILD_FINGERPRINT}}},
        {"results", out.results},
        {"csv_columns", out.csv_columns},
        {"wall_time_s", wall},
    };
    result.csv = std::move(out.csv);
  } catch (const ValidationError& err) {
    result.status = 1;
    result.error = err.what();
    result.report = {{"status", 1}, {"error", result.error}};
  } catch (const NumericalError& err) {
    result.status = 2;
    result.error = err.what();
    result.report = {{"status", 2}, {"error", result.error}};
  } catch (const json::exception& err) {
    result.status = 1;
    result.error = err.what();
    result.report = {{"status", 1}, {"error", result.error}};
  }
  return result;
}

int RunAndWrite(const ExperimentSpec& spec, std::ostream& out,
                std::ostream& err) {
  const ExperimentResult result = RunExperiment(spec);
  if (result.status != 0) {
    err << "error: " << result.error << "\n";
    return result.status;
  }
  const std::string payload =
      spec.format == "csv" ? result.csv : result.report.dump(2) + "\n";
  if (spec.output.empty() || spec.output == "-") {
    out << payload;
  } else {
    std::ofstream file(spec.output);
    if (!file) {
      err << "error: cannot write " << spec.output << "\n";
      return 1;
    }
    file << payload;
  }
  return 0;
}

// --- Monte Carlo checks ------------------------------------------------------

EntropyIdentityCheck CheckEntropyIdentity(const SimRun& run,
                                          const Belief& prior, double slack) {
  EntropyIdentityCheck c;
  c.H0 = Entropy(prior);
  c.HT_mean = run.entropy_final_mean;
  c.quad_mean = run.quad_mean;
  c.gap = c.H0 - run.ledger_mean;
  c.stderr_ = run.ledger_stderr;
  c.bound = 3.0 * c.stderr_ + slack;
  c.pass = std::abs(c.gap) <= c.bound;
  return c;
}

MartingaleCheck CheckMartingale(const SimRun& run, const Belief& prior) {
  MartingaleCheck c;
  c.mean = run.belief_final_mean;
  c.stderr_ = run.belief_final_stderr;
  c.prior = prior.p();
  c.pass = true;
  for (Eigen::Index j = 0; j < c.mean.size(); ++j) {
    if (std::abs(c.mean[j] - c.prior[j]) > 3.0 * c.stderr_[j]) c.pass = false;
  }
  return c;
}

std::vector<ConsistencyBin> CheckBayesConsistency(const SimRun& run, int bins,
                                                  int min_count) {
  if (run.records.empty()) {
    throw ValidationError("Bayes consistency needs kept path records");
  }
  std::vector<ConsistencyBin> out;
  const Eigen::Index n = run.belief_final_mean.size();
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int b = 0; b < bins; ++b) {
      ConsistencyBin bin;
      bin.regime = static_cast<int>(j);
      bin.lo = static_cast<double>(b) / bins;
      bin.hi = static_cast<double>(b + 1) / bins;
      int hits = 0;
      for (const PathRecord& r : run.records) {
        if (r.blew_up) continue;
        const double pj = r.belief_final[j];
        const bool inside =
            pj >= bin.lo && (pj < bin.hi || (b + 1 == bins && pj <= bin.hi));
        if (!inside) continue;
        ++bin.count;
        if (r.theta == j) ++hits;
      }
      if (bin.count > 0) {
        bin.fraction = static_cast<double>(hits) / bin.count;
        // Standard error at the nearest admissible proportion in the bin, so
        // that a bin whose empirical fraction is 0 or 1 still gets a width.
        const double center = std::clamp(bin.fraction, bin.lo, bin.hi);
        bin.stderr_ = std::sqrt(center * (1.0 - center) / bin.count);
      }
      if (bin.count >= min_count) {
        bin.pass = bin.fraction >= bin.lo - 3.0 * bin.stderr_ &&
                   bin.fraction <= bin.hi + 3.0 * bin.stderr_;
      }
      out.push_back(bin);
    }
  }
  return out;
}

PolicyComparison ComparePolicies(
    const RegimeEnsemble& e,
    const std::vector<std::pair<std::string, Policy>>& policies,
    const SimConfig& cfg, double tolerance) {
  RequireValid(e);
  PolicyComparison cmp;
  std::vector<RiccatiSolution> riccati;
  if (AllMinimal(e)) {
    riccati = SolveAll(e);
    cmp.U_ce = UceAt(riccati, e);
    cmp.V_ce = cmp.U_ce + Entropy(e.prior_belief());
    const FeedbackCertificate cert = SolveFeedback(e, riccati, tolerance);
    if (cert.classification != CeClassification::kNone) cmp.certificate = cert;
  }
  for (const auto& [name, policy] : policies) {
    PolicyRow row;
    row.name = name;
    row.run = Simulate(e, policy, cfg);
    if (!riccati.empty()) {
      row.uce_bound_ok =
          row.run.cost_mean + 3.0 * row.run.cost_stderr >= cmp.U_ce;
    }
    if (cmp.certificate) {
      if (const auto* ce = std::get_if<CertaintyEquivalentPolicy>(&policy)) {
        if (ce->F.isApprox(cmp.certificate->F, 1e-9) ||
            (ce->F - cmp.certificate->F).norm() <= tolerance) {
          row.vce_bound_ok = row.run.modified_cost_mean <=
                             cmp.V_ce + 3.0 * row.run.modified_cost_stderr;
        }
      }
    }
    cmp.rows.push_back(std::move(row));
  }
  return cmp;
}

json ToJson(const SimRun& run) {
  return {{"paths", run.paths},
          {"completed", run.completed},
          {"blowups", run.blowups},
          {"cost_mean", run.cost_mean},
          {"cost_stderr", run.cost_stderr},
          {"entropy_final_mean", run.entropy_final_mean},
          {"entropy_final_stderr", run.entropy_final_stderr},
          {"modified_cost_mean", run.modified_cost_mean},
          {"modified_cost_stderr", run.modified_cost_stderr},
          {"quad_mean", run.quad_mean},
          {"quad_stderr", run.quad_stderr},
          {"terminal_state_msq", run.terminal_state_msq},
          {"clamp_count", run.clamp_count},
          {"belief_final_mean", VectorToJson(run.belief_final_mean)},
          {"belief_final_stderr", VectorToJson(run.belief_final_stderr)},
          {"checkpoint_msq", run.checkpoint_msq}};
}

json ToJson(const FeedbackCertificate& cert) {
  return {{"F", MatrixToJson(cert.F)},
          {"residual", cert.residual},
          {"norm", cert.norm},
          {"partial_isometry_defect", cert.partial_isometry_defect},
          {"classification", ToString(cert.classification)},
          {"faithful", cert.faithful}};
}

}  // namespace adaptive_lqr
