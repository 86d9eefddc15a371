#include "adaptive_lqr/closed_loop.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <unsupported/Eigen/MatrixFunctions>

#include "adaptive_lqr/filter.h"

namespace adaptive_lqr {
namespace {

constexpr double kBlowUpThreshold = 1e8;

using Flat = std::vector<double>;

Flat RowMajor(const Matrix& m) {
  Flat out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    }
  }
  return out;
}

// out[r] (+)= sum_c m[r, c] v[c] for a row-major rows x cols block.
inline void MatVec(const double* m, const double* v, double* out,
                   std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = m + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * v[c];
    out[r] = acc;
  }
}

inline double SquaredNorm(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += v[k] * v[k];
  return s;
}

// Regime data in the layout used by the stepping loop. Phi and Gamma give
// the exact propagation over one step with the control held constant:
// x <- Phi x + Gamma u.
struct StepRegime {
  std::size_t n = 0;
  std::size_t q = 0;
  std::size_t offset = 0;  // into the packed state ensemble
  Flat phi;    // n x n
  Flat gamma;  // n x i
  Flat C;      // q x n
  Flat G;      // o x n
  Flat K;      // n x n, empty unless the tail proxy is enabled
  Flat law;    // i x n feedback block, empty when unused
};

struct StepModel {
  std::size_t regimes = 0;
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::size_t total_state = 0;
  std::size_t max_state = 0;
  std::vector<StepRegime> blocks;
  Flat x0;
  Flat cumulative_prior;
  Flat log_prior;
  bool belief_weighted = false;  // law blocks are weighted by p_j
  bool has_law = false;
  const OpenLoopPolicy* open_loop = nullptr;
  double dt = 0.0;
  int steps = 0;
  std::vector<int> checkpoint_steps;
  bool tail = false;
};

void CheckPolicy(const RegimeEnsemble& e, const Policy& policy) {
  const Eigen::Index i = e.input_dim();
  const Eigen::Index o = e.output_dim();
  if (const auto* ce = std::get_if<CertaintyEquivalentPolicy>(&policy)) {
    if (ce->F.rows() != i || ce->F.cols() != o) {
      std::ostringstream os;
      os << "certainty-equivalent F must be " << i << "x" << o << ", got "
         << ce->F.rows() << "x" << ce->F.cols();
      throw ValidationError(os.str());
    }
    if (!ce->F.allFinite()) throw ValidationError("F must be finite");
  } else if (const auto* lq = std::get_if<LqPerRegimePolicy>(&policy)) {
    if (lq->regime < 0 || lq->regime >= static_cast<int>(e.size())) {
      throw ValidationError("lq policy regime index out of range");
    }
  } else if (const auto* ol = std::get_if<OpenLoopPolicy>(&policy)) {
    if (ol->times.empty() || ol->times.size() != ol->values.size()) {
      throw ValidationError("open-loop table must be non-empty and aligned");
    }
    for (std::size_t k = 0; k < ol->values.size(); ++k) {
      if (ol->values[k].size() != i) {
        throw ValidationError("open-loop control has wrong dimension");
      }
      if (k > 0 && !(ol->times[k] > ol->times[k - 1])) {
        throw ValidationError("open-loop times must increase strictly");
      }
    }
  }
}

StepModel Compile(const RegimeEnsemble& e, const Policy& policy,
                  const SimConfig& cfg) {
  RequireValid(e);
  ValidateConfig(cfg);
  CheckPolicy(e, policy);

  std::vector<RiccatiSolution> riccati;
  if (NeedsRiccati(policy) || cfg.tail_estimate) riccati = SolveAll(e);

  StepModel m;
  m.regimes = e.size();
  m.inputs = static_cast<std::size_t>(e.input_dim());
  m.outputs = static_cast<std::size_t>(e.output_dim());
  m.dt = cfg.dt;
  m.steps = cfg.steps();
  m.tail = cfg.tail_estimate;

  const Belief prior = e.prior_belief();
  double cumulative = 0.0;
  for (Eigen::Index j = 0; j < prior.size(); ++j) {
    cumulative += prior[j];
    m.cumulative_prior.push_back(cumulative);
    m.log_prior.push_back(prior[j] > 0.0
                              ? std::log(prior[j])
                              : -std::numeric_limits<double>::infinity());
  }
  m.cumulative_prior.back() = 1.0;

  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, CertaintyEquivalentPolicy> ||
                      std::is_same_v<P, BellmanGradientPolicy>) {
          m.has_law = true;
          m.belief_weighted = true;
        } else if constexpr (std::is_same_v<P, LqPerRegimePolicy>) {
          m.has_law = true;
        } else if constexpr (std::is_same_v<P, OpenLoopPolicy>) {
          m.open_loop = &p;
        }
      },
      policy);

  std::size_t offset = 0;
  for (std::size_t j = 0; j < e.size(); ++j) {
    const LinearRegime& r = e.regimes[j];
    const Eigen::Index n = r.state_dim();
    const Eigen::Index i = r.input_dim();
    StepRegime b;
    b.n = static_cast<std::size_t>(n);
    b.q = static_cast<std::size_t>(r.C.rows());
    b.offset = offset;
    Matrix augmented = Matrix::Zero(n + i, n + i);
    augmented.topLeftCorner(n, n) = r.A * cfg.dt;
    augmented.topRightCorner(n, i) = r.B * cfg.dt;
    const Matrix propagator = augmented.exp();
    b.phi = RowMajor(propagator.topLeftCorner(n, n));
    b.gamma = RowMajor(propagator.topRightCorner(n, i));
    b.C = RowMajor(r.C);
    b.G = RowMajor(r.G);
    if (cfg.tail_estimate) b.K = RowMajor(riccati[j].K);

    if (const auto* ce = std::get_if<CertaintyEquivalentPolicy>(&policy)) {
      b.law = RowMajor(ce->F * r.G);
    } else if (std::holds_alternative<BellmanGradientPolicy>(policy)) {
      b.law = RowMajor(riccati[j].gain);
    } else if (const auto* lq = std::get_if<LqPerRegimePolicy>(&policy)) {
      if (lq->regime == static_cast<int>(j)) b.law = RowMajor(riccati[j].gain);
    }
    m.blocks.push_back(std::move(b));
    m.x0.insert(m.x0.end(), e.x0[j].data(), e.x0[j].data() + n);
    offset += static_cast<std::size_t>(n);
    m.max_state = std::max(m.max_state, static_cast<std::size_t>(n));
  }
  m.total_state = offset;

  for (double t : cfg.checkpoints) {
    if (t < 0.0 || t > cfg.T + 0.5 * cfg.dt) {
      throw ValidationError("checkpoint outside [0, T]");
    }
    m.checkpoint_steps.push_back(static_cast<int>(std::llround(t / cfg.dt)));
  }
  return m;
}

std::mt19937_64 PathRng(std::uint64_t seed, long path_index) {
  // SplitMix64 finalizer over (seed, index) gives decorrelated stream seeds.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL *
                               (static_cast<std::uint64_t>(path_index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return std::mt19937_64(z);
}

// Scratch buffers owned by one worker.
struct Workspace {
  explicit Workspace(const StepModel& m)
      : x(m.total_state),
        next(m.max_state),
        z(m.regimes * m.outputs),
        zhat(m.outputs),
        dy(m.outputs),
        u(m.inputs),
        scratch(m.inputs),
        p(m.regimes),
        log_lik(m.regimes),
        cx(0) {
    std::size_t q = 0;
    for (const StepRegime& b : m.blocks) q = std::max(q, b.q);
    cx.resize(q);
  }
  Flat x, next, z, zhat, dy, u, scratch, p, log_lik, cx;
};

// The only inputs a feedback law may read.
struct VisibleState {
  double t;
  std::span<const double> x;
  std::span<const double> p;
  std::span<const double> zhat;
};

void EvaluateLaw(const StepModel& m, const VisibleState& s,
                 std::span<double> u, std::span<double> scratch) {
  std::fill(u.begin(), u.end(), 0.0);
  if (m.open_loop != nullptr) {
    const Vector v = m.open_loop->At(s.t + 0.5 * m.dt);
    std::copy(v.data(), v.data() + v.size(), u.begin());
    return;
  }
  if (!m.has_law) return;
  for (std::size_t j = 0; j < m.regimes; ++j) {
    const StepRegime& b = m.blocks[j];
    if (b.law.empty()) continue;
    const double weight = m.belief_weighted ? s.p[j] : 1.0;
    if (weight == 0.0) continue;
    MatVec(b.law.data(), s.x.data() + b.offset, scratch.data(), m.inputs,
           b.n);
    for (std::size_t k = 0; k < m.inputs; ++k) u[k] -= weight * scratch[k];
  }
}

PathRecord RunPath(const StepModel& m, const SimConfig& cfg, long path_index,
                   std::optional<int> theta_override, Workspace& w,
                   PathTrace* trace) {
  std::mt19937_64 rng = PathRng(cfg.seed, path_index);
  const double draw =
      static_cast<double>(rng() >> 11) * 0x1.0p-53;  // uniform [0, 1)
  int theta = static_cast<int>(
      std::upper_bound(m.cumulative_prior.begin(), m.cumulative_prior.end(),
                       draw) -
      m.cumulative_prior.begin());
  theta = std::min(theta, static_cast<int>(m.regimes) - 1);
  if (theta_override) theta = *theta_override;
  std::normal_distribution<double> normal(0.0, 1.0);

  PathRecord rec;
  rec.path_id = path_index;
  rec.theta = theta;

  std::copy(m.x0.begin(), m.x0.end(), w.x.begin());
  std::fill(w.log_lik.begin(), w.log_lik.end(), 0.0);
  kernel::NormalizeBelief(m.log_prior, w.log_lik, w.p);

  const StepRegime& truth = m.blocks[static_cast<std::size_t>(theta)];
  const double sqrt_dt = std::sqrt(m.dt);
  auto state_cost = [&]() {
    MatVec(truth.C.data(), w.x.data() + truth.offset, w.cx.data(), truth.q,
           truth.n);
    return SquaredNorm(w.cx.data(), truth.q);
  };
  auto record_trace = [&](double t, double quad) {
    if (trace == nullptr) return;
    trace->t.push_back(t);
    trace->belief.push_back(Eigen::Map<const Vector>(
        w.p.data(), static_cast<Eigen::Index>(m.regimes)));
    trace->entropy.push_back(Entropy(trace->belief.back()));
    trace->quad.push_back(quad);
    trace->x_theta.push_back(Eigen::Map<const Vector>(
        w.x.data() + truth.offset, static_cast<Eigen::Index>(truth.n)));
  };

  std::size_t next_checkpoint = 0;
  auto record_checkpoints = [&](int step) {
    while (next_checkpoint < m.checkpoint_steps.size() &&
           m.checkpoint_steps[next_checkpoint] <= step) {
      rec.checkpoint_msq.push_back(
          SquaredNorm(w.x.data() + truth.offset, truth.n));
      ++next_checkpoint;
    }
  };
  record_checkpoints(0);
  record_trace(0.0, 0.0);

  double cost = 0.0;
  double quad = 0.0;
  double cost_before = state_cost();
  for (int step = 0; step < m.steps; ++step) {
    const double t = step * m.dt;

    // Signals and conditional signal at the left end of the step.
    for (std::size_t j = 0; j < m.regimes; ++j) {
      const StepRegime& b = m.blocks[j];
      MatVec(b.G.data(), w.x.data() + b.offset, w.z.data() + j * m.outputs,
             m.outputs, b.n);
    }
    const double half_var = kernel::HalfConditionalVariance(w.p, w.z, w.zhat);
    quad += half_var * m.dt;

    EvaluateLaw(m, {t, w.x, w.p, w.zhat}, w.u, w.scratch);
    if (trace != nullptr) {
      trace->u.push_back(Eigen::Map<const Vector>(
          w.u.data(), static_cast<Eigen::Index>(m.inputs)));
    }

    const double* z_true = w.z.data() + static_cast<std::size_t>(theta) *
                                            m.outputs;
    for (std::size_t k = 0; k < m.outputs; ++k) {
      w.dy[k] = z_true[k] * m.dt + sqrt_dt * normal(rng);
    }

    // Exact propagation of every regime state under the held control.
    bool blew_up = false;
    for (std::size_t j = 0; j < m.regimes; ++j) {
      const StepRegime& b = m.blocks[j];
      double* xj = w.x.data() + b.offset;
      MatVec(b.phi.data(), xj, w.next.data(), b.n, b.n);
      for (std::size_t r = 0; r < b.n; ++r) {
        const double* row = b.gamma.data() + r * m.inputs;
        double acc = w.next[r];
        for (std::size_t k = 0; k < m.inputs; ++k) acc += row[k] * w.u[k];
        xj[r] = acc;
        if (!(std::abs(acc) <= kBlowUpThreshold)) blew_up = true;
      }
    }

    const double cost_after = state_cost();
    cost += 0.5 * SquaredNorm(w.u.data(), m.inputs) * m.dt +
            0.25 * (cost_before + cost_after) * m.dt;
    cost_before = cost_after;

    kernel::AccumulateLogLikelihood(w.log_lik, w.z, w.dy, m.dt);
    kernel::NormalizeBelief(m.log_prior, w.log_lik, w.p);

    if (blew_up) {
      rec.blew_up = true;
      return rec;
    }
    record_checkpoints(step + 1);
    record_trace((step + 1) * m.dt, quad);
  }

  const double* x_true = w.x.data() + truth.offset;
  if (m.tail) {
    MatVec(truth.K.data(), x_true, w.next.data(), truth.n, truth.n);
    double inner = 0.0;
    for (std::size_t r = 0; r < truth.n; ++r) inner += w.next[r] * x_true[r];
    rec.tail = 0.5 * inner;
    cost += rec.tail;
  }
  rec.cost = cost;
  rec.quad = quad;
  rec.terminal_msq = SquaredNorm(x_true, truth.n);
  rec.belief_final = Eigen::Map<const Vector>(
      w.p.data(), static_cast<Eigen::Index>(m.regimes));
  rec.entropy_final = Entropy(rec.belief_final);
  return rec;
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

template <typename Fn>
MeanStderr Summarize(const std::vector<const PathRecord*>& rows, Fn&& value) {
  MeanStderr out;
  const auto n = static_cast<double>(rows.size());
  if (rows.empty()) return out;
  for (const PathRecord* r : rows) out.mean += value(*r);
  out.mean /= n;
  if (rows.size() > 1) {
    double ss = 0.0;
    for (const PathRecord* r : rows) {
      const double d = value(*r) - out.mean;
      ss += d * d;
    }
    out.stderr_ = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

}  // namespace

Vector OpenLoopPolicy::At(double t) const {
  if (t <= times.front()) return values.front();
  if (t >= times.back()) return values.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const auto k = static_cast<std::size_t>(it - times.begin());
  const double s = (t - times[k - 1]) / (times[k] - times[k - 1]);
  return (1.0 - s) * values[k - 1] + s * values[k];
}

std::string Describe(const Policy& policy) {
  return std::visit(
      [](const auto& p) -> std::string {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ZeroPolicy>) {
          return "zero";
        } else if constexpr (std::is_same_v<P, LqPerRegimePolicy>) {
          return "lq:" + std::to_string(p.regime);
        } else if constexpr (std::is_same_v<P, CertaintyEquivalentPolicy>) {
          return "ce";
        } else if constexpr (std::is_same_v<P, BellmanGradientPolicy>) {
          return "bellman:" + ToString(p.kind);
        } else {
          return "openloop";
        }
      },
      policy);
}

bool NeedsRiccati(const Policy& policy) {
  return std::holds_alternative<LqPerRegimePolicy>(policy) ||
         std::holds_alternative<BellmanGradientPolicy>(policy);
}

int SimConfig::steps() const {
  return static_cast<int>(std::llround(T / dt));
}

void ValidateConfig(const SimConfig& cfg) {
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) {
    throw ValidationError("dt must be positive");
  }
  if (!(cfg.T >= cfg.dt) || !std::isfinite(cfg.T)) {
    throw ValidationError("T must be at least dt");
  }
  if (cfg.paths < 1) throw ValidationError("paths must be at least 1");
  if (cfg.threads < 0) throw ValidationError("threads must be nonnegative");
}

int ResolveThreads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ADAPTIVE_LQR_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

PathRecord SimulatePath(const RegimeEnsemble& e, const Policy& policy,
                        const SimConfig& cfg, long path_index,
                        std::optional<int> theta_override, PathTrace* trace) {
  SimConfig sorted = cfg;
  std::sort(sorted.checkpoints.begin(), sorted.checkpoints.end());
  const StepModel m = Compile(e, policy, sorted);
  if (theta_override &&
      (*theta_override < 0 || *theta_override >= static_cast<int>(e.size()))) {
    throw ValidationError("theta override out of range");
  }
  Workspace w(m);
  return RunPath(m, sorted, path_index, theta_override, w, trace);
}

SimRun Simulate(const RegimeEnsemble& e, const Policy& policy,
                const SimConfig& cfg) {
  SimConfig sorted = cfg;
  std::sort(sorted.checkpoints.begin(), sorted.checkpoints.end());
  const StepModel m = Compile(e, policy, sorted);

  std::vector<PathRecord> records(static_cast<std::size_t>(cfg.paths));
  std::atomic<long> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    try {
      Workspace w(m);
      for (long k = next++; k < cfg.paths; k = next++) {
        records[static_cast<std::size_t>(k)] =
            RunPath(m, sorted, k, std::nullopt, w, nullptr);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  const int threads = std::min(ResolveThreads(cfg.threads), cfg.paths);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  SimRun run;
  run.paths = cfg.paths;
  std::vector<const PathRecord*> done;
  done.reserve(records.size());
  for (const PathRecord& r : records) {
    if (r.blew_up) {
      ++run.blowups;
    } else {
      done.push_back(&r);
    }
  }
  run.completed = static_cast<int>(done.size());
  if (run.blowups * 100 > cfg.paths || done.empty()) {
    std::ostringstream os;
    os << run.blowups << " of " << cfg.paths
       << " paths exceeded |x| > 1e8; blow-up rate above 1%";
    throw NumericalError(os.str());
  }

  const auto cost = Summarize(done, [](const PathRecord& r) { return r.cost; });
  const auto entropy =
      Summarize(done, [](const PathRecord& r) { return r.entropy_final; });
  const auto modified = Summarize(
      done, [](const PathRecord& r) { return r.cost + r.entropy_final; });
  const auto quad = Summarize(done, [](const PathRecord& r) { return r.quad; });
  const auto ledger = Summarize(
      done, [](const PathRecord& r) { return r.entropy_final + r.quad; });
  const auto msq =
      Summarize(done, [](const PathRecord& r) { return r.terminal_msq; });
  run.cost_mean = cost.mean;
  run.cost_stderr = cost.stderr_;
  run.entropy_final_mean = entropy.mean;
  run.entropy_final_stderr = entropy.stderr_;
  run.modified_cost_mean = modified.mean;
  run.modified_cost_stderr = modified.stderr_;
  run.quad_mean = quad.mean;
  run.quad_stderr = quad.stderr_;
  run.ledger_mean = ledger.mean;
  run.ledger_stderr = ledger.stderr_;
  run.terminal_state_msq = msq.mean;

  const auto n = static_cast<Eigen::Index>(e.size());
  run.belief_final_mean = Vector::Zero(n);
  run.belief_final_stderr = Vector::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto pj = Summarize(
        done, [j](const PathRecord& r) { return r.belief_final[j]; });
    run.belief_final_mean[j] = pj.mean;
    run.belief_final_stderr[j] = pj.stderr_;
  }
  for (std::size_t c = 0; c < sorted.checkpoints.size(); ++c) {
    run.checkpoint_msq.push_back(
        Summarize(done, [c](const PathRecord& r) {
          return r.checkpoint_msq[c];
        }).mean);
  }
  if (cfg.keep_records) run.records = std::move(records);
  return run;
}

std::vector<double> UniformStabilizabilityCheck(const RegimeEnsemble& e,
                                                const Matrix& F) {
  RequireValid(e);
  if (F.rows() != e.input_dim() || F.cols() != e.output_dim()) {
    throw ValidationError("F has the wrong shape for this ensemble");
  }
  std::vector<double> out;
  for (const LinearRegime& r : e.regimes) {
    out.push_back(SpectralAbscissa(r.A - r.B * F * r.G));
  }
  return out;
}

AdaptiveStabilityReport AdaptiveStabilityRun(const RegimeEnsemble& e,
                                             const Matrix& F,
                                             const SimConfig& cfg,
                                             std::vector<double> horizons) {
  AdaptiveStabilityReport report;
  report.abscissas = UniformStabilizabilityCheck(e, F);
  const double worst =
      *std::max_element(report.abscissas.begin(), report.abscissas.end());
  if (!(worst < 0.0)) {
    throw ValidationError("ensemble is not uniformly stabilizable with F");
  }
  report.mu = -worst;

  std::sort(horizons.begin(), horizons.end());
  SimConfig run_cfg = cfg;
  if (!horizons.empty()) run_cfg.T = horizons.back();
  run_cfg.checkpoints = horizons;
  report.horizons = horizons;
  report.run = Simulate(e, CertaintyEquivalentPolicy{F}, run_cfg);
  report.msq = report.run.checkpoint_msq;

  const Belief prior = e.prior_belief();
  double half_msq = 0.0;
  for (std::size_t j = 0; j < e.size(); ++j) {
    const double sq = e.x0[j].squaredNorm();
    report.initial_msq += prior[static_cast<Eigen::Index>(j)] * sq;
    half_msq += 0.5 * prior[static_cast<Eigen::Index>(j)] * sq;
  }
  const double scale = half_msq + Entropy(prior);
  report.c_witness =
      scale > 0.0 ? report.run.modified_cost_mean / scale : 0.0;
  return report;
}

}  // namespace adaptive_lqr
