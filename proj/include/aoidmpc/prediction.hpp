// Copyright 2026
// SPDX-License-Identifier: Apache-2.0
//
// Coupled-subsystem models and stacked horizon prediction with explicit
// neighbor-deviation channels, plus the information-age bookkeeping needed to
// estimate neighbor states from stale broadcasts and to decide which
// disturbance-feedback entries are causally admissible.

#pragma once

#include <vector>

#include "aoidmpc/linalg.hpp"
#include "aoidmpc/polytope.hpp"

namespace aoidmpc {

// One subsystem: local linear dynamics, local input set, and the ids of the
// subsystems whose state it couples to through constraints and cost.
struct SubsystemModel {
  int id = 0;
  Matrix A;
  Matrix B;
  Polytope input_set;          // over the local input (may have zero rows)
  std::vector<int> neighbors;  // ids of coupled subsystems

  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }
};

// Block-diagonal augmentation of a subsystem with its neighbors.  The
// augmented state stacks [x_self; x_nbr_1; ...]; the own input enters through
// B, the neighbors' *nominal* inputs through B1 and their *deviations* from
// the communicated plans through B2 (B1 == B2 by construction).
struct AugmentedModel {
  Matrix A;   // blkdiag(A_self, A_nbr...)
  Matrix B;   // [B_self; 0; ...]
  Matrix B1;  // [0; blkdiag(B_nbr...)]
  Matrix B2;  // equal to B1
  Polytope coupled_state_set;  // rows over the augmented state (may be empty)
  int self_nx = 0;
  int self_nu = 0;

  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }
  int nu_nbr() const { return static_cast<int>(B1.cols()); }
};

AugmentedModel build_augmented_model(const SubsystemModel& self,
                                     const std::vector<SubsystemModel>& neighbors,
                                     const Polytope& coupled_state_set);

// Stacked prediction over l = 1..H:
//   xs = A_t x0 + B_t us + B1_t un + B2_t dn
// where xs stacks the predicted augmented states, us the own inputs over
// slots 0..H-1, and un / dn the neighbor nominal inputs / deviations over the
// same slots.  Block (l, m) of B_t is A^(l-1-m) B for m < l and zero
// otherwise; B1_t and B2_t replace B by B1.
struct PredictionModel {
  Matrix A_t;
  Matrix B_t;
  Matrix B1_t;
  Matrix B2_t;
  int H = 0;
  int nx = 0;
  int nu = 0;
  int nu_nbr = 0;
};

PredictionModel build_prediction(const AugmentedModel& model, int horizon);

// Deviation-to-state map when the newest neighbor broadcast is `age` steps
// old.  Deviations live on slots k-age+1 .. k+H-1 (age-1+H block columns);
// the final H block columns equal B2_t of build_prediction, and the leading
// age-1 columns propagate deviations that happened after the broadcast but
// before now, i.e. block (l, m) = A^(l-1-m) B2 with m counted from -(age-1).
Matrix deviation_image(const AugmentedModel& model, int horizon, int age);

// Roll a neighbor state forward from its last broadcast using the inputs the
// neighbor committed to: x_k = A^age x_bcast + sum A^(age-1-r) B plan[r].
// `plan` holds the broadcast inputs from the broadcast step onward and must
// cover at least `age` entries.
Vector estimate_neighbor_state(const Vector& broadcast_state, const Matrix& A,
                               const Matrix& B, const std::vector<Vector>& plan,
                               int age);

// Which disturbance-feedback entries are causally admissible.  Row n
// (n = 0..H-1) is the own input at k+n; column m (m = 0..W-1, W = age-1+H)
// is the neighbor deviation at slot k-age+1+m.  Entry (n, m) is free iff the
// deviation is forecast to be known when the input is applied:
//   n >= 1 and  m <= n + age - 1 - predicted_age[n-1],
// with predicted_age[l-1] the forecast information age at k+l.  The first row
// is always pinned to zero so the committed first input never depends on
// information that arrives later.
struct FeedbackMask {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> free;
  int age = 1;

  int horizon() const { return static_cast<int>(free.rows()); }
  int window() const { return static_cast<int>(free.cols()); }
  int count_free() const;
};

FeedbackMask build_feedback_mask(const std::vector<int>& predicted_age, int age,
                                 int horizon);

}  // namespace aoidmpc
