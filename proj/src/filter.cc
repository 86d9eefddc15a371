#include "adaptive_lqr/filter.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

namespace adaptive_lqr {
namespace kernel {

void AccumulateLogLikelihood(std::span<double> log_lik,
                             std::span<const double> z,
                             std::span<const double> dy, double dt) {
  const std::size_t o = dy.size();
  for (std::size_t j = 0; j < log_lik.size(); ++j) {
    const double* zj = z.data() + j * o;
    double inner = 0.0;
    double sq = 0.0;
    for (std::size_t k = 0; k < o; ++k) {
      inner += zj[k] * dy[k];
      sq += zj[k] * zj[k];
    }
    log_lik[j] += inner - 0.5 * sq * dt;
  }
}

void NormalizeBelief(std::span<const double> log_prior,
                     std::span<const double> log_lik, std::span<double> p) {
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < p.size(); ++j) {
    shift = std::max(shift, log_prior[j] + log_lik[j]);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    p[j] = std::exp(log_prior[j] + log_lik[j] - shift);
    total += p[j];
  }
  for (double& v : p) v /= total;
}

double HalfConditionalVariance(std::span<const double> p,
                               std::span<const double> z,
                               std::span<double> zhat) {
  const std::size_t o = zhat.size();
  std::fill(zhat.begin(), zhat.end(), 0.0);
  for (std::size_t j = 0; j < p.size(); ++j) {
    for (std::size_t k = 0; k < o; ++k) zhat[k] += p[j] * z[j * o + k];
  }
  double v = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    double sq = 0.0;
    for (std::size_t k = 0; k < o; ++k) {
      const double d = z[j * o + k] - zhat[k];
      sq += d * d;
    }
    v += p[j] * sq;
  }
  return 0.5 * v;
}

}  // namespace kernel

namespace {

// Packs the N signal vectors row-major and checks dimensions and finiteness.
std::vector<double> PackSignals(std::span<const Vector> z, Eigen::Index n,
                                Eigen::Index o) {
  if (static_cast<Eigen::Index>(z.size()) != n) {
    throw ValidationError("filter: expected " + std::to_string(n) +
                          " signals, got " + std::to_string(z.size()));
  }
  std::vector<double> packed(static_cast<std::size_t>(n * o));
  for (Eigen::Index j = 0; j < n; ++j) {
    const Vector& zj = z[static_cast<std::size_t>(j)];
    if (zj.size() != o) {
      throw ValidationError("filter: signal " + std::to_string(j) +
                            " has dimension " + std::to_string(zj.size()) +
                            ", expected " + std::to_string(o));
    }
    if (!zj.allFinite()) throw NumericalError("filter: non-finite signal");
    std::copy(zj.data(), zj.data() + o, packed.begin() + j * o);
  }
  return packed;
}

void CheckStep(const Vector& dy, double dt) {
  if (!(dt > 0.0)) throw ValidationError("filter: dt must be positive");
  if (!dy.allFinite()) {
    throw NumericalError("filter: non-finite observation increment");
  }
}

std::span<const double> View(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

FilterState MakeFilterState(const Belief& prior) {
  Vector log_prior(prior.size());
  for (Eigen::Index j = 0; j < prior.size(); ++j) {
    log_prior[j] = prior[j] > 0.0 ? std::log(prior[j])
                                  : -std::numeric_limits<double>::infinity();
  }
  return {log_prior, Vector::Zero(prior.size()), prior, 0.0, 0};
}

void ValidateObservationPath(const ObservationPath& path) {
  if (path.times.size() != path.y.size() || path.times.empty()) {
    throw ValidationError("observation path: times and y must be non-empty "
                          "and of equal length");
  }
  if (path.times.front() != 0.0 || !path.y.front().isZero(0.0)) {
    throw ValidationError("observation path must start at t = 0 with y = 0");
  }
  for (std::size_t k = 1; k < path.times.size(); ++k) {
    if (!(path.times[k] > path.times[k - 1])) {
      throw ValidationError("observation path times must increase strictly");
    }
    if (path.y[k].size() != path.y.front().size()) {
      throw ValidationError("observation path: inconsistent output dimension");
    }
  }
}

FilterState BayesStep(const FilterState& fs, std::span<const Vector> z,
                      const Vector& dy, double dt) {
  CheckStep(dy, dt);
  const auto packed = PackSignals(z, fs.belief.size(), dy.size());
  FilterState next = fs;
  std::span<double> log_lik(next.log_lik.data(),
                            static_cast<std::size_t>(next.log_lik.size()));
  kernel::AccumulateLogLikelihood(log_lik, packed, View(dy), dt);
  if (!next.log_lik.allFinite()) {
    throw NumericalError("filter: log-likelihood overflow");
  }
  Vector p(fs.belief.size());
  kernel::NormalizeBelief(View(next.log_prior), View(next.log_lik),
                          {p.data(), static_cast<std::size_t>(p.size())});
  next.belief = Belief::FromWeights(p);
  next.t = fs.t + dt;
  return next;
}

FilterState InnovationStep(const FilterState& fs, std::span<const Vector> z,
                           const Vector& dy, double dt,
                           InnovationScheme scheme) {
  CheckStep(dy, dt);
  const Eigen::Index n = fs.belief.size();
  const Eigen::Index o = dy.size();
  const auto packed = PackSignals(z, n, o);
  FilterState next = fs;
  kernel::AccumulateLogLikelihood(
      {next.log_lik.data(), static_cast<std::size_t>(n)}, packed, View(dy),
      dt);

  const Vector zhat = Mix(z, fs.belief);
  const Vector dnu = dy - zhat * dt;
  Vector p = fs.belief.p();
  // Milstein correction for the (commutative) noise fields b_j = p_j d_j:
  // 1/2 p_j [<d_j,dnu>^2 - |d_j|^2 dt - sum_k p_k (<d_k,dnu>^2 - |d_k|^2 dt)].
  double mean_second = 0.0;
  if (scheme == InnovationScheme::kMilstein) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Vector d = z[static_cast<std::size_t>(j)] - zhat;
      const double proj = d.dot(dnu);
      mean_second += fs.belief[j] * (proj * proj - d.squaredNorm() * dt);
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const Vector d = z[static_cast<std::size_t>(j)] - zhat;
    const double proj = d.dot(dnu);
    double increment = proj;
    if (scheme == InnovationScheme::kMilstein) {
      increment += 0.5 * (proj * proj - d.squaredNorm() * dt - mean_second);
    }
    p[j] += fs.belief[j] * increment;
    if (p[j] < 0.0) {
      p[j] = 0.0;
      ++next.clamp_count;
    }
  }
  if (!(p.sum() > 0.0)) {
    throw NumericalError("innovation filter collapsed off the simplex");
  }
  next.belief = Belief::FromWeights(p);
  next.t = fs.t + dt;
  return next;
}

Vector ConditionalSignal(const FilterState& fs, std::span<const Vector> z) {
  return Mix(z, fs.belief);
}

std::vector<FilterState> FilterAlongPath(
    const Belief& prior, const ObservationPath& path,
    const std::function<std::vector<Vector>(double)>& signals,
    FilterForm form, InnovationScheme scheme) {
  ValidateObservationPath(path);
  std::vector<FilterState> states;
  states.reserve(path.times.size());
  states.push_back(MakeFilterState(prior));
  for (std::size_t k = 1; k < path.times.size(); ++k) {
    const double dt = path.times[k] - path.times[k - 1];
    const Vector dy = path.y[k] - path.y[k - 1];
    const auto z = signals(path.times[k - 1]);
    states.push_back(form == FilterForm::kBayes
                         ? BayesStep(states.back(), z, dy, dt)
                         : InnovationStep(states.back(), z, dy, dt, scheme));
  }
  return states;
}

void EntropyLedger::Add(const Belief& b, std::span<const Vector> z,
                        double dt) {
  quad_ += 0.5 * ConditionalVariance(z, b) * dt;
}

EntropyLedgerResult EntropyLedger::Finish(const Belief& final_belief) const {
  return {h0_, Entropy(final_belief), quad_};
}

EntropyLedgerResult ComputeEntropyLedger(
    std::span<const FilterState> states,
    std::span<const std::vector<Vector>> z_history, double dt) {
  if (states.empty()) throw ValidationError("entropy ledger: empty run");
  if (z_history.size() + 1 < states.size()) {
    throw ValidationError("entropy ledger: signal history too short");
  }
  EntropyLedger ledger(states.front().belief);
  for (std::size_t k = 0; k + 1 < states.size(); ++k) {
    ledger.Add(states[k].belief, z_history[k], dt);
  }
  return ledger.Finish(states.back().belief);
}

void WriteFilterTrajectoryCsv(std::ostream& os,
                              std::span<const FilterState> states,
                              std::span<const double> cumulative_quad) {
  const Eigen::Index n = states.empty() ? 0 : states.front().belief.size();
  os << "t";
  for (Eigen::Index j = 0; j < n; ++j) os << ",p_" << (j + 1);
  os << ",H,quad\n";
  const auto old_precision = os.precision(17);
  for (std::size_t k = 0; k < states.size(); ++k) {
    os << states[k].t;
    for (Eigen::Index j = 0; j < n; ++j) os << "," << states[k].belief[j];
    os << "," << Entropy(states[k].belief) << ","
       << (k < cumulative_quad.size() ? cumulative_quad[k] : 0.0) << "\n";
  }
  os.precision(old_precision);
}

}  // namespace adaptive_lqr
