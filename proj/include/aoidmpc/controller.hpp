// Copyright 2026
// SPDX-License-Identifier: Apache-2.0
//
// Distributed robust horizon controllers coupled through broadcast plans.
// Each subsystem publishes its state, its nominal input plan, and an
// uncertainty envelope bounding how much the plan may still change.  A
// follower treats the neighbor's future inputs as its nominal plan plus a
// boxed deviation, optimizes a causal disturbance-feedback policy against
// that box, and tightens every constraint by the worst-case deviation effect.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aoidmpc/linalg.hpp"
#include "aoidmpc/prediction.hpp"
#include "aoidmpc/structured_qp.hpp"
#include "aoidmpc/terminal.hpp"
#include "aoidmpc/tolerances.hpp"

namespace aoidmpc {

// Broadcast payload published at `step`: the state at that step, the nominal
// input plan over slots step..step+H-1, and envelope half-widths for slots
// step+1..step+H-1 (the first planned input is applied exactly, so it
// carries no envelope).
struct ControllerMessage {
  int sender = 0;
  int step = 0;
  Vector state;
  std::vector<double> plan;
  std::vector<double> envelope;
};

// Per-slot own-input interval carried from one step to the next: the next
// plan must stay inside the previously announced envelope around the
// previously announced plan, shifted by one slot and intersected with the
// global bound; the new final slot only sees the global bound.
struct InputBand {
  Vector lo;
  Vector hi;

  int horizon() const { return static_cast<int>(lo.size()); }
};

InputBand global_input_band(double input_bound, int horizon);

InputBand shift_input_constraint(const std::vector<double>& prev_plan,
                                 const std::vector<double>& prev_envelope,
                                 double input_bound);

// Envelope induced by a disturbance-feedback matrix over the deviation box:
//   gamma[l-1] = sum_m dev_halfwidth[m] * |feedback(l, m)|,  l = 1..H-1.
std::vector<double> compute_envelope(const Matrix& feedback,
                                     const Vector& dev_halfwidth);

// Shifted fallback plan: previous plan rolled one slot, each entry corrected
// by the previously optimized feedback acting on the deviations learned since
// the previous solve (zeros where unknown), delayed terminal law appended.
std::vector<double> shift_policy(const std::vector<double>& prev_plan,
                                 const Matrix& prev_feedback,
                                 const Vector& learned_deviation,
                                 double terminal_input);

// Neighbor information at solve time, derived from the freshest broadcast
// that is `age` steps old.  Throws "stale neighbor envelope" when the
// broadcast is too old for its plan and envelope to cover the horizon.
struct NeighborData {
  Vector est_state;             // neighbor state rolled forward to now
  std::vector<double> nominal;  // neighbor nominal inputs, slots now..now+H-1
  Vector dev_halfwidth;         // per window slot now-age+1..now+H-1
  int age = 1;
};

NeighborData derive_neighbor_data(const ControllerMessage& msg, int now,
                                  int horizon, const Matrix& A_nbr,
                                  const Matrix& B_nbr, double neighbor_bound);

struct SolveResult {
  std::vector<double> plan;      // own nominal inputs, slots now..now+H-1
  Matrix feedback;               // H x W disturbance feedback (masked zeros)
  std::vector<double> envelope;  // slots now+1..now+H-1
  double value = 0.0;            // nominal cost, re-evaluated explicitly
  bool fallback = false;         // shifted fallback used instead of the QP
  int qp_iterations = 0;
  QpStatus status = QpStatus::optimal;
};

// Tightened program plus the bookkeeping needed to decode its solution.
// Core variables: the free nominal inputs (slots whose band has width; slots
// pinned by a zero-width band are eliminated exactly and recorded in vfix)
// followed by the free feedback entries in free_entries order.  cost_constant
// completes the objective value.
struct AssembledQp {
  StructuredQp qp;
  int horizon = 0;
  int window = 0;
  std::vector<int> vmap;      // per slot: core index of v, or -1 if pinned
  std::vector<double> vfix;   // pinned value per slot (0 when free)
  std::vector<std::pair<int, int>> free_entries;  // feedback (row, window col)
  double cost_constant = 0.0;
  // A constraint row with no decision variables reduced to a constant
  // inequality that is genuinely violated; the program is infeasible as
  // assembled (rows satisfied up to roundoff are dropped instead).
  bool constant_infeasible = false;
};

AssembledQp assemble_robust_qp(const AugmentedModel& model,
                               const PredictionModel& pred,
                               const FeedbackMask& mask, const NeighborData& nbr,
                               const Vector& own_state, const InputBand& band,
                               const Matrix& Qx, const Matrix& Qu,
                               const TerminalIngredients* terminal);

struct RobustControllerConfig {
  SubsystemModel self;
  SubsystemModel neighbor;
  Polytope coupled_state_set;  // rows over [x_self; x_front]
  Matrix Qx;                   // augmented-state stage weight
  Matrix Qu;                   // [own input; neighbor input] stage weight
  int horizon = 8;
  int max_age = 4;             // worst-case information age
  double input_bound = 0.0;
  double neighbor_bound = 0.0;
  std::optional<TerminalIngredients> terminal;
};

class RobustController {
 public:
  explicit RobustController(RobustControllerConfig config,
                            Tolerances tol = default_tolerances());

  // Solve step `now` given the own state, the freshest neighbor broadcast,
  // its information age, and the predicted ages for slots now+1..now+H-1
  // (H-1 entries; pass max_age everywhere for the worst-case mode).
  SolveResult solve_step(int now, const Vector& own_state,
                         const ControllerMessage& neighbor_msg, int age,
                         const std::vector<int>& predicted_age);

  // Broadcast for this step; valid after solve_step.
  ControllerMessage make_message(int now, const Vector& own_state) const;

  const RobustControllerConfig& config() const { return config_; }
  const AugmentedModel& model() const { return model_; }
  const InputBand& band() const { return band_; }

 private:
  SolveResult fallback_result(int now, const NeighborData& nbr,
                              const Vector& xhat);

  RobustControllerConfig config_;
  Tolerances tol_;
  AugmentedModel model_;
  PredictionModel pred_;
  InputBand band_;
  std::optional<SolveResult> prev_;
  std::vector<double> prev_nominal_;  // neighbor nominal used previously
  Vector prev_states_;                // previous nominal state prediction
  int prev_window_start_ = 0;         // absolute slot of the first window col
};

// Reference-tracking controller for the lead subsystem: no neighbor, plain
// horizon tracking of a supplied reference trajectory, a constant published
// envelope, and the same shifted-band consistency constraint on its own plan.
struct TrackingControllerConfig {
  SubsystemModel self;
  Matrix Q;                          // tracking-error stage weight
  double qu = 0.1;                   // input-deviation stage weight
  double u_ref = 0.0;                // reference feedforward input
  Vector terminal_gain;              // undelayed gain for the terminal cost
  // Per-replan movement budget: each re-plan moves a surviving slot by at
  // most this much, and the published envelope for slot now+l is l times it.
  double published_halfwidth = 0.0;
  int horizon = 8;
};

class TrackingController {
 public:
  explicit TrackingController(TrackingControllerConfig config,
                              Tolerances tol = default_tolerances());

  // reference_states supplies r_{now+l} for l = 0..H (H+1 entries).
  SolveResult solve_step(int now, const Vector& state,
                         const std::vector<Vector>& reference_states);

  ControllerMessage make_message(int now, const Vector& state) const;

  const TrackingControllerConfig& config() const { return config_; }

 private:
  TrackingControllerConfig config_;
  Tolerances tol_;
  PredictionModel pred_;
  Matrix terminal_cost_;
  InputBand band_;
  double input_bound_ = 0.0;
  std::optional<SolveResult> prev_;
};

}  // namespace aoidmpc
