// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Discrete Lyapunov equation  A'PA - P + Q = 0  for Schur-stable A.

#pragma once

#include "aoidmpc/linalg.hpp"
#include "aoidmpc/tolerances.hpp"

namespace aoidmpc {

// Solves A'PA - P + Q = 0 by the doubling iteration
//   P_{j+1} = P_j + A_j' P_j A_j,  A_{j+1} = A_j^2,
// which converges quadratically for spectral_radius(A) < 1. The returned P is
// exactly symmetric; its residual satisfies
//   |A'PA - P + Q|_F <= tol.lyapunov_resid * (1 + |Q|_F).
//
// Throws std::runtime_error("terminal dynamics not Schur-stable") when
// spectral_radius(A) >= 1, and std::invalid_argument on dimension mismatch.
Matrix solve_discrete_lyapunov(const Matrix& A, const Matrix& Q,
                               const Tolerances& tol = default_tolerances());

}  // namespace aoidmpc
