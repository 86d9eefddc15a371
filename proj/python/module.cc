#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "adaptive_lqr/bellman.h"
#include "adaptive_lqr/ensemble_io.h"
#include "adaptive_lqr/experiment.h"
#include "adaptive_lqr/filter.h"
#include "adaptive_lqr/riccati.h"

namespace py = pybind11;

namespace adaptive_lqr {
namespace {

// Ensembles cross the boundary as JSON text in the regime-core schema; the
// Python wrapper takes care of dumping dicts.
RegimeEnsemble Parse(const std::string& text) {
  RegimeEnsemble e = EnsembleFromJson(nlohmann::json::parse(text));
  RequireValid(e);
  return e;
}

py::dict ToDict(const RiccatiSolution& s) {
  py::dict d;
  d["K"] = s.K;
  d["gain"] = s.gain;
  d["Abar"] = s.Abar;
  d["spectral_abscissa"] = s.spectral_abscissa;
  d["residual"] = s.residual;
  d["iterations"] = s.iterations;
  return d;
}

LinearRegime Regime(const Matrix& A, const Matrix& B, const Matrix& C) {
  return {A, B, C, Matrix::Zero(0, A.rows())};
}

}  // namespace
}  // namespace adaptive_lqr

PYBIND11_MODULE(_adaptive_lqr, m) {
  using namespace adaptive_lqr;
  m.doc() = "Adaptive LQ regulator core";

  py::register_exception<ValidationError>(m, "ValidationError",
                                          PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError",
                                         PyExc_ArithmeticError);

  m.def(
      "riccati_ode",
      [](const Matrix& A, const Matrix& B, const Matrix& C, double T,
         int steps) { return RiccatiOde(Regime(A, B, C), T, steps); },
      py::arg("A"), py::arg("B"), py::arg("C"), py::arg("T"),
      py::arg("steps"));
  m.def(
      "riccati_algebraic",
      [](const Matrix& A, const Matrix& B, const Matrix& C, double tolerance) {
        return ToDict(RiccatiAlgebraic(Regime(A, B, C), {tolerance, 100}));
      },
      py::arg("A"), py::arg("B"), py::arg("C"), py::arg("tolerance") = 1e-9);
  m.def(
      "is_minimal",
      [](const Matrix& A, const Matrix& B, const Matrix& C) {
        const Minimality mm = IsMinimal(Regime(A, B, C));
        return py::make_tuple(mm.controllable, mm.observable);
      },
      py::arg("A"), py::arg("B"), py::arg("C"));

  m.def(
      "validate_ensemble",
      [](const std::string& text) {
        std::vector<py::dict> out;
        for (const Diagnostic& d :
             ValidateEnsemble(EnsembleFromJson(nlohmann::json::parse(text)))) {
          py::dict row;
          row["regime"] = d.regime;
          row["field"] = d.field;
          row["message"] = d.message;
          out.push_back(row);
        }
        return out;
      },
      py::arg("ensemble_json"));

  m.def(
      "solve_feedback",
      [](const std::string& text, double tolerance) {
        const RegimeEnsemble e = Parse(text);
        const FeedbackCertificate c =
            SolveFeedback(e, SolveAll(e), tolerance);
        py::dict d;
        d["F"] = c.F;
        d["residual"] = c.residual;
        d["norm"] = c.norm;
        d["partial_isometry_defect"] = c.partial_isometry_defect;
        d["classification"] = ToString(c.classification);
        d["faithful"] = c.faithful;
        return d;
      },
      py::arg("ensemble_json"), py::arg("tolerance") = 1e-8);

  m.def(
      "value",
      [](const std::string& text, const std::string& kind,
         const std::vector<Vector>& x, const Vector& p, double lambda) {
        const RegimeEnsemble e = Parse(text);
        return ValueEval(MakeValueSpec(ValueKindFromString(kind), e, lambda),
                         x, Belief(p));
      },
      py::arg("ensemble_json"), py::arg("kind"), py::arg("x"), py::arg("p"),
      py::arg("lam") = 1.0);
  m.def(
      "bellman_residual",
      [](const std::string& text, const std::string& kind,
         const std::vector<Vector>& x, const Vector& p, double lambda) {
        const RegimeEnsemble e = Parse(text);
        return BellmanResidual(
            MakeValueSpec(ValueKindFromString(kind), e, lambda), e, x,
            Belief(p));
      },
      py::arg("ensemble_json"), py::arg("kind"), py::arg("x"), py::arg("p"),
      py::arg("lam") = 1.0);

  m.def(
      "filter_constant_signals",
      [](const Vector& prior, const Matrix& z, const Matrix& dy, double dt,
         const std::string& form) {
        // z: N x o regime signals, dy: steps x o increments.
        std::vector<Vector> signals;
        for (Eigen::Index j = 0; j < z.rows(); ++j) {
          signals.push_back(z.row(j).transpose());
        }
        FilterState fs = MakeFilterState(Belief(prior));
        Matrix out(dy.rows() + 1, prior.size());
        out.row(0) = fs.belief.p().transpose();
        for (Eigen::Index k = 0; k < dy.rows(); ++k) {
          const Vector step = dy.row(k).transpose();
          if (form == "bayes") {
            fs = BayesStep(fs, signals, step, dt);
          } else if (form == "euler") {
            fs = InnovationStep(fs, signals, step, dt, InnovationScheme::kEuler);
          } else if (form == "milstein") {
            fs = InnovationStep(fs, signals, step, dt,
                                InnovationScheme::kMilstein);
          } else {
            throw ValidationError("unknown filter form '" + form + "'");
          }
          out.row(k + 1) = fs.belief.p().transpose();
        }
        return out;
      },
      py::arg("prior"), py::arg("z"), py::arg("dy"), py::arg("dt"),
      py::arg("form") = "bayes");

  m.def(
      "run",
      [](const std::string& command, const std::string& ensemble_text,
         const std::map<std::string, std::string>& overrides) {
        ExperimentSpec spec;
        spec.command = command;
        if (!ensemble_text.empty()) {
          spec.ensemble_inline = nlohmann::json::parse(ensemble_text);
        }
        spec.overrides = overrides;
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = RunExperiment(spec);
        }
        return py::make_tuple(r.status, r.report.dump(), r.csv, r.error);
      },
      py::arg("command"), py::arg("ensemble_json"), py::arg("overrides"));

  m.attr("commands") = ExperimentCommands();
}
