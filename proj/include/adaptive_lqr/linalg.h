#pragma once

#include "adaptive_lqr/regime.h"

namespace adaptive_lqr {

/// Largest singular value.
double OperatorNorm(const Matrix& m);

/// Rank from singular values with threshold max(rows, cols) * sigma_max * 1e-12.
Eigen::Index NumericalRank(const Matrix& m);

inline Matrix Symmetrized(const Matrix& m) {
  return 0.5 * (m + m.transpose());
}

/// Max real part over the eigenvalues of a square matrix.
double SpectralAbscissa(const Matrix& m);

/// Smallest eigenvalue of the symmetric part of m.
double MinSymmetricEigenvalue(const Matrix& m);

}  // namespace adaptive_lqr
