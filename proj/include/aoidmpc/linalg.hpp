// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense matrix/vector aliases and small shared helpers. Eigen is the storage
// backend; these aliases are the only spelling the rest of the library uses.

#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace aoidmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Largest |eigenvalue| of a (possibly non-symmetric) square matrix.
inline double spectral_radius(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("spectral_radius: square matrix required");
  if (a.rows() == 0) return 0.0;
  return Eigen::EigenSolver<Matrix>(a, /*computeEigenvectors=*/false)
      .eigenvalues()
      .cwiseAbs()
      .maxCoeff();
}

// Shift that projects a symmetric matrix onto the PSD cone by eigenvalue
// clipping: returns max(0, -lambda_min) + floor. Adding shift*I to the matrix
// makes it positive definite while leaving it unchanged on the subspace where
// it already is.
inline double psd_shift(const Matrix& sym, double floor_eps = 1e-9) {
  if (sym.rows() == 0) return floor_eps;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(sym), Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  return (lmin < 0.0 ? -lmin : 0.0) + floor_eps;
}

}  // namespace aoidmpc
