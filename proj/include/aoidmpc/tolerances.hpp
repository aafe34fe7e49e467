// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central tolerance record. Every numerical contract in the library reads its
// thresholds from one instance of this struct so that all tolerances live in
// a single place.

#pragma once

namespace aoidmpc {

struct Tolerances {
  // QP/LP interior-point solver.
  double qp_kkt = 1e-8;          // accepted max KKT residual at "optimal"
  double qp_mu = 1e-11;          // target complementarity measure
  double qp_feas = 1e-7;         // phase-1 violation above which "infeasible"
  int qp_max_iters = 100;        // interior-point iteration cap
  double qp_unbounded_scale = 1e10;  // |x| blowup factor that flags unboundedness

  // Discrete Lyapunov solver: residual <= lyapunov_resid * (1 + |Q|_F).
  double lyapunov_resid = 1e-9;

  // Support-function / polytope checks.
  double support = 1e-9;

  // Simulation-side constraint slack (state/input violation counting).
  double constraint_slack = 1e-7;

  // Envelope-soundness slack (realized deviation vs communicated bound).
  double envelope_slack = 1e-9;
};

// The library-wide defaults; operations take an optional override.
inline const Tolerances& default_tolerances() {
  static const Tolerances t{};
  return t;
}

}  // namespace aoidmpc
