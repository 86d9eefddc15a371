#include "adaptive_lqr/linalg.h"

#include <algorithm>
#include <limits>

namespace adaptive_lqr {

double OperatorNorm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

Eigen::Index NumericalRank(const Matrix& m) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  const double threshold =
      static_cast<double>(std::max(m.rows(), m.cols())) * s(0) * 1e-12;
  Eigen::Index rank = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s(k) > threshold) ++rank;
  }
  return rank;
}

double SpectralAbscissa(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw ValidationError("spectral abscissa needs a square matrix");
  }
  if (m.size() == 0) return -std::numeric_limits<double>::infinity();
  if (m.rows() == 1) return m(0, 0);
  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("eigenvalue computation failed");
  }
  return solver.eigenvalues().real().maxCoeff();
}

double MinSymmetricEigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(Symmetrized(m),
                                               Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

}  // namespace adaptive_lqr
