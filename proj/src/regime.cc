#include "adaptive_lqr/regime.h"

#include <cmath>
#include <sstream>

namespace adaptive_lqr {
namespace {

bool AllFinite(const Matrix& m) { return m.allFinite(); }

std::string Shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace

Belief::Belief(Vector p) : p_(std::move(p)) {
  if (p_.size() == 0) throw ValidationError("belief must be non-empty");
  if (!p_.allFinite()) throw ValidationError("belief entries must be finite");
  if ((p_.array() < 0.0).any()) {
    throw ValidationError("belief entries must be nonnegative");
  }
  const double sum = p_.sum();
  if (std::abs(sum - 1.0) > kNormalizeTolerance) {
    std::ostringstream os;
    os << "belief sums to " << sum << ", not 1";
    throw ValidationError(os.str());
  }
  p_ /= sum;
}

Belief Belief::Uniform(Eigen::Index n) {
  return Belief(Vector::Constant(n, 1.0 / static_cast<double>(n)));
}

Belief Belief::FromWeights(const Vector& w) {
  Belief b;
  b.p_ = w / w.sum();
  return b;
}

Belief Belief::Vertex(Eigen::Index n, Eigen::Index j) {
  Vector p = Vector::Zero(n);
  p[j] = 1.0;
  return Belief(std::move(p));
}

std::vector<Diagnostic> ValidateEnsemble(const RegimeEnsemble& e) {
  std::vector<Diagnostic> out;
  auto report = [&out](int j, std::string field, std::string message) {
    out.push_back({j, std::move(field), std::move(message)});
  };

  if (e.regimes.empty()) {
    report(-1, "regimes", "ensemble needs at least one regime");
    return out;
  }
  const Eigen::Index inputs = e.regimes.front().input_dim();
  const Eigen::Index outputs = e.regimes.front().output_dim();

  for (std::size_t k = 0; k < e.regimes.size(); ++k) {
    const int j = static_cast<int>(k);
    const LinearRegime& r = e.regimes[k];
    const Eigen::Index n = r.A.rows();
    if (n == 0) report(j, "A", "state dimension must be positive");
    if (r.A.cols() != n) report(j, "A", "A must be square, got " + Shape(r.A));
    if (r.B.rows() != n) {
      report(j, "B", "B has " + std::to_string(r.B.rows()) +
                         " rows, expected " + std::to_string(n));
    }
    if (r.C.cols() != n) {
      report(j, "C", "C has " + std::to_string(r.C.cols()) +
                         " columns, expected " + std::to_string(n));
    }
    if (r.G.cols() != n) {
      report(j, "G", "G has " + std::to_string(r.G.cols()) +
                         " columns, expected " + std::to_string(n));
    }
    if (r.B.cols() != inputs) {
      report(j, "B", "input dimension " + std::to_string(r.B.cols()) +
                         " differs from regime 0 (" + std::to_string(inputs) +
                         ")");
    }
    if (r.G.rows() != outputs) {
      report(j, "G", "output dimension " + std::to_string(r.G.rows()) +
                         " differs from regime 0 (" + std::to_string(outputs) +
                         ")");
    }
    for (auto [name, m] : {std::pair{"A", &r.A}, std::pair{"B", &r.B},
                           std::pair{"C", &r.C}, std::pair{"G", &r.G}}) {
      if (!AllFinite(*m)) report(j, name, "non-finite entry");
    }
  }

  const auto count = static_cast<Eigen::Index>(e.regimes.size());
  if (e.prior.size() != count) {
    report(-1, "prior", "prior has length " + std::to_string(e.prior.size()) +
                            ", expected " + std::to_string(count));
  } else if (!e.prior.allFinite() || (e.prior.array() < 0.0).any()) {
    report(-1, "prior", "prior entries must be finite and nonnegative");
  } else if (std::abs(e.prior.sum() - 1.0) > Belief::kNormalizeTolerance) {
    std::ostringstream os;
    os << "prior sums to " << e.prior.sum();
    report(-1, "prior", os.str());
  }

  if (e.x0.size() != e.regimes.size()) {
    report(-1, "x0", "x0 has " + std::to_string(e.x0.size()) +
                         " entries, expected " + std::to_string(count));
  } else {
    for (std::size_t k = 0; k < e.x0.size(); ++k) {
      const Eigen::Index n = e.regimes[k].A.rows();
      if (e.x0[k].size() != n) {
        report(static_cast<int>(k), "x0",
               "initial state has dimension " +
                   std::to_string(e.x0[k].size()) + ", expected " +
                   std::to_string(n));
      } else if (!e.x0[k].allFinite()) {
        report(static_cast<int>(k), "x0", "non-finite entry");
      }
    }
  }
  return out;
}

std::string FormatDiagnostics(const std::vector<Diagnostic>& diagnostics) {
  std::ostringstream os;
  for (const Diagnostic& d : diagnostics) {
    if (d.regime >= 0) os << "regime " << d.regime << ": ";
    os << d.field << ": " << d.message << "\n";
  }
  return os.str();
}

void RequireValid(const RegimeEnsemble& e) {
  const auto diagnostics = ValidateEnsemble(e);
  if (!diagnostics.empty()) {
    throw ValidationError("invalid ensemble:\n" +
                          FormatDiagnostics(diagnostics));
  }
}

double Entropy(const Vector& p) {
  double h = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
  }
  return h;
}

double Entropy(const Belief& b) { return Entropy(b.p()); }

Vector Mix(std::span<const Vector> vectors, const Belief& b) {
  if (static_cast<Eigen::Index>(vectors.size()) != b.size()) {
    throw ValidationError("mix: expected " + std::to_string(b.size()) +
                          " vectors, got " + std::to_string(vectors.size()));
  }
  const Eigen::Index dim = vectors.empty() ? 0 : vectors.front().size();
  Vector out = Vector::Zero(dim);
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    if (vectors[j].size() != dim) {
      throw ValidationError("mix: vector " + std::to_string(j) +
                            " has dimension " +
                            std::to_string(vectors[j].size()) + ", expected " +
                            std::to_string(dim));
    }
    out += b[static_cast<Eigen::Index>(j)] * vectors[j];
  }
  return out;
}

double ConditionalVariance(std::span<const Vector> vectors, const Belief& b) {
  const Vector mean = Mix(vectors, b);
  double v = 0.0;
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    v += b[static_cast<Eigen::Index>(j)] * (vectors[j] - mean).squaredNorm();
  }
  return v;
}

}  // namespace adaptive_lqr
