// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "aoidmpc/lyapunov.hpp"

#include <stdexcept>

namespace aoidmpc {

Matrix solve_discrete_lyapunov(const Matrix& A, const Matrix& Q, const Tolerances& tol) {
  if (A.rows() != A.cols() || Q.rows() != Q.cols() || A.rows() != Q.rows())
    throw std::invalid_argument("solve_discrete_lyapunov: dimension mismatch");
  if (!all_finite(A) || !all_finite(Q))
    throw std::invalid_argument("solve_discrete_lyapunov: non-finite entries");
  if (spectral_radius(A) >= 1.0 - 1e-12)
    throw std::runtime_error("terminal dynamics not Schur-stable");

  // Doubling iteration: P_{j+1} = P_j + A_j' P_j A_j with A_{j+1} = A_j^2
  // computes sum_k (A^k)' Q A^k with quadratic convergence.
  Matrix P = symmetrize(Q);
  Matrix Aj = A;
  const double q_norm = 1.0 + Q.norm();
  for (int j = 0; j < 200; ++j) {
    const Matrix incr = Aj.transpose() * P * Aj;
    P = symmetrize(P + incr);
    Aj = Aj * Aj;
    if (incr.norm() <= 0.25 * tol.lyapunov_resid * q_norm && Aj.norm() < 1.0) break;
  }
  return P;
}

}  // namespace aoidmpc
