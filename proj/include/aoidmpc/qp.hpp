// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense convex quadratic programming:
//
//     min  0.5 x'Hx + g'x
//     s.t. C_ineq x <= b_ineq,   C_eq x = b_eq
//
// solved by a Mehrotra predictor-corrector interior-point method with an
// active-set polish step. H must be symmetric positive semidefinite (callers
// regularize indefinite cost matrices with psd_shift beforehand). Linear
// programs are the H = 0 special case.
//
// Infeasibility is certified by a phase-1 solve (minimize the total constraint
// violation); a strictly positive phase-1 optimum is reported as the
// infeasibility certificate. Unboundedness is detected by divergence of the
// primal iterate and flagged on the solution.

#pragma once

#include <optional>

#include "aoidmpc/linalg.hpp"
#include "aoidmpc/tolerances.hpp"

namespace aoidmpc {

struct QpProblem {
  Matrix H;       // n x n, symmetric PSD
  Vector g;       // n
  Matrix C_ineq;  // m x n (may have 0 rows)
  Vector b_ineq;  // m
  Matrix C_eq;    // p x n (may have 0 rows)
  Vector b_eq;    // p

  int num_vars() const { return static_cast<int>(g.size()); }
};

enum class QpStatus { optimal, infeasible, max_iterations };

struct QpSolution {
  Vector x;
  Vector lambda_ineq;  // multipliers of C_ineq x <= b_ineq (>= 0)
  Vector nu_eq;        // multipliers of C_eq x = b_eq
  double objective = 0.0;
  QpStatus status = QpStatus::max_iterations;
  bool unbounded = false;  // primal divergence detected (LP directions)

  // KKT residual norms at the returned point (inf-norms).
  double kkt_stationarity = 0.0;
  double kkt_primal = 0.0;       // max violation of all constraints
  double kkt_dual = 0.0;         // max negative part of lambda
  double kkt_complementarity = 0.0;

  // status == infeasible: minimal achievable constraint violation (phase-1
  // optimum), strictly positive.
  double infeasibility_certificate = 0.0;
};

// Solves the QP. Throws std::invalid_argument on dimension mismatches or
// non-finite entries.
QpSolution solve_qp(const QpProblem& p, const Tolerances& tol = default_tolerances());

// Maximizes direction'x over {x : C x <= b}. Returns the optimal value, or
// std::nullopt when the LP is unbounded in that direction. Throws on an
// infeasible constraint set.
std::optional<double> solve_max_lp(const Matrix& C, const Vector& b, const Vector& direction,
                                   const Tolerances& tol = default_tolerances());

}  // namespace aoidmpc
