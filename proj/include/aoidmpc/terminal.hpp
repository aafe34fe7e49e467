// Copyright 2026
// SPDX-License-Identifier: Apache-2.0
//
// Terminal ingredients for the delayed cooperative controllers: a terminal
// control law that acts on information that is `delay` steps old, a terminal
// cost that is a Lyapunov function for the resulting delayed closed loop, and
// a robustly invariant terminal set, all built in relative coordinates
// z = x_front - x_self so that the common feedforward motion drops out.

#pragma once

#include <string>
#include <vector>

#include "aoidmpc/linalg.hpp"
#include "aoidmpc/polytope.hpp"
#include "aoidmpc/tolerances.hpp"

namespace aoidmpc {

// Inputs to the synthesis.  The per-vehicle dynamics (A, B) are shared by the
// pair; the terminal law is u_self = u_ff + K_rel z_{k-delay}; the neighbor's
// input in the terminal phase deviates from u_ff within [dev_lo, dev_hi].
struct TerminalSpec {
  Matrix A;             // per-vehicle dynamics
  Matrix B;
  Vector K_rel;         // gain on the delayed relative state
  int delay = 4;
  Matrix Qx_rel;        // relative-coordinate stage weight on z
  double qu_own = 0.1;  // stage weight on the own input deviation
  double u_ff = 0.0;    // common feedforward input in the terminal phase
  double input_bound = 0.0;          // own input: |u| <= input_bound
  double dev_lo = 0.0, dev_hi = 0.0; // neighbor input deviation interval
};

struct TerminalOptions {
  Vector seed_halfwidth;     // per-coordinate seed box halfwidth (size nz);
                             // must dominate the deviation-reachable core
  int max_iterations = 600;  // invariance-iteration cap
  // Optional cap (> 0 to enable) on the own-input deviation rows seeded into
  // the set.  The published radius never exceeds it, which keeps a follower
  // chain viable: the next vehicle's deviation-reachable core scales with
  // this radius.  Must exceed the deviation-reachable core's own radius.
  double input_dev_cap = 0.0;
};

// Result: lifted relative-coordinate objects over Z = [z_{k-delay}; ...; z_k].
struct TerminalIngredients {
  Matrix A_rel;        // lifted closed-loop matrix, size (delay+1)*nz
  Matrix B_rel;        // neighbor-deviation input column
  Matrix P_rel;        // Lyapunov cost on Z
  Matrix Q_rel;        // lifted stage weight used in the Lyapunov equation
  Polytope set_rel;    // robustly invariant terminal set over Z
  Vector K_rel;
  int delay = 4;
  int nz = 2;
  double u_ff = 0.0;
  double input_bound = 0.0;
  double dev_lo = 0.0, dev_hi = 0.0;
  // Largest own-input deviation |K_rel z_{k-delay}| over the terminal set;
  // this is the deviation interval radius handed to the follower.
  double own_dev_radius = 0.0;

  int dim() const { return (delay + 1) * nz; }
};

// Build the lifted dynamics only (no set synthesis).  Throws
// "terminal dynamics not Schur-stable" via the Lyapunov solver if the closed
// loop is not contractive.
TerminalIngredients lift_terminal_dynamics(const TerminalSpec& spec);

// Full synthesis: lifted dynamics, Lyapunov cost, and the maximal robustly
// invariant subset of the seed box intersected with the own-input rows
// |K_rel z_{k-delay}| <= input_bound - |u_ff|, grown by pre-set iteration.
// Embedding the input rows in the seed makes input admissibility structural;
// the growth throws the name of the violated assumption when the seed cannot
// contain the deviation-reachable core (enlarging the box is the remedy).
TerminalIngredients synthesize_terminal(const TerminalSpec& spec,
                                        const TerminalOptions& options,
                                        const Tolerances& tol = default_tolerances());

// The four assumption checks on a candidate.  `worst` is the largest
// violation (<= 0 passes, up to the stated tolerance):
//  - "terminal set robust invariance"
//  - "terminal input admissibility"
//  - "terminal cost decrease"
//  - "terminal cost consensus alignment"
struct TerminalCheck {
  std::string name;
  double worst = 0.0;
  bool pass = false;
};

std::vector<TerminalCheck> check_terminal(const TerminalIngredients& t,
                                          const Tolerances& tol = default_tolerances());

// Throwing wrapper around check_terminal: raises std::runtime_error naming
// the first violated assumption.
void verify_terminal(const TerminalIngredients& t,
                     const Tolerances& tol = default_tolerances());

// Terminal cost for the leader's reference-tracking controller (no neighbor,
// no delay): solves the Lyapunov equation of the undelayed closed loop
// (A - B K)' P (A - B K) - P + Q + K' qu K = 0.
Matrix tracking_terminal_cost(const Matrix& A, const Matrix& B, const Vector& K,
                              const Matrix& Q, double qu,
                              const Tolerances& tol = default_tolerances());

}  // namespace aoidmpc
