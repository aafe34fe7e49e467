// Copyright 2026
// SPDX-License-Identifier: Apache-2.0

#include "aoidmpc/prediction.hpp"

#include <stdexcept>
#include <string>

namespace aoidmpc {

AugmentedModel build_augmented_model(const SubsystemModel& self,
                                     const std::vector<SubsystemModel>& neighbors,
                                     const Polytope& coupled_state_set) {
  if (self.A.rows() != self.A.cols() || self.B.rows() != self.A.rows()) {
    throw std::invalid_argument("subsystem dynamics dimensions are inconsistent");
  }
  int nx = self.nx();
  int nu_nbr = 0;
  for (const auto& nbr : neighbors) {
    if (nbr.A.rows() != nbr.A.cols() || nbr.B.rows() != nbr.A.rows()) {
      throw std::invalid_argument("subsystem dynamics dimensions are inconsistent");
    }
    nx += nbr.nx();
    nu_nbr += nbr.nu();
  }

  AugmentedModel m;
  m.self_nx = self.nx();
  m.self_nu = self.nu();
  m.A = Matrix::Zero(nx, nx);
  m.B = Matrix::Zero(nx, self.nu());
  m.B1 = Matrix::Zero(nx, nu_nbr);
  m.A.topLeftCorner(self.nx(), self.nx()) = self.A;
  m.B.topRows(self.nx()) = self.B;
  int row = self.nx();
  int col = 0;
  for (const auto& nbr : neighbors) {
    m.A.block(row, row, nbr.nx(), nbr.nx()) = nbr.A;
    m.B1.block(row, col, nbr.nx(), nbr.nu()) = nbr.B;
    row += nbr.nx();
    col += nbr.nu();
  }
  m.B2 = m.B1;
  if (coupled_state_set.num_rows() > 0 && coupled_state_set.dim() != nx) {
    throw std::invalid_argument("coupled state set dimension mismatch");
  }
  m.coupled_state_set = coupled_state_set;
  return m;
}

namespace {

// Stacks block (l, m) = A^(l-1-m) * Bcol for l = 1..H, m = 0..H-1, m < l.
Matrix stack_input_map(const Matrix& A, const Matrix& Bcol, int horizon) {
  const int nx = static_cast<int>(A.rows());
  const int nb = static_cast<int>(Bcol.cols());
  Matrix out = Matrix::Zero(horizon * nx, horizon * nb);
  if (nb == 0) return out;
  // Fill along sub-diagonals: power p contributes A^p B at (l, m) with
  // l - 1 - m = p.
  Matrix powB = Bcol;
  for (int p = 0; p < horizon; ++p) {
    for (int m = 0; m + p + 1 <= horizon; ++m) {
      out.block((m + p) * nx, m * nb, nx, nb) = powB;
    }
    if (p + 1 < horizon) powB = A * powB;
  }
  return out;
}

}  // namespace

PredictionModel build_prediction(const AugmentedModel& model, int horizon) {
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  PredictionModel p;
  p.H = horizon;
  p.nx = model.nx();
  p.nu = model.nu();
  p.nu_nbr = model.nu_nbr();
  p.A_t = Matrix::Zero(horizon * p.nx, p.nx);
  Matrix powA = model.A;
  for (int l = 1; l <= horizon; ++l) {
    p.A_t.middleRows((l - 1) * p.nx, p.nx) = powA;
    if (l < horizon) powA = model.A * powA;
  }
  p.B_t = stack_input_map(model.A, model.B, horizon);
  p.B1_t = stack_input_map(model.A, model.B1, horizon);
  p.B2_t = p.B1_t;
  return p;
}

Matrix deviation_image(const AugmentedModel& model, int horizon, int age) {
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  if (age < 1) throw std::invalid_argument("information age must be at least 1");
  const int nx = model.nx();
  const int nb = model.nu_nbr();
  const int window = age - 1 + horizon;
  Matrix out = Matrix::Zero(horizon * nx, window * nb);
  if (nb == 0) return out;
  // Window column m corresponds to the deviation at slot now-age+1+m; block
  // row l (1-based) is the state at now+l, so the propagation power is
  // l - 1 - (m - (age - 1)) = l + age - 2 - m, nonnegative iff m <= l+age-2.
  std::vector<Matrix> powB(horizon + age - 1);
  powB[0] = model.B2;
  for (size_t i = 1; i < powB.size(); ++i) powB[i] = model.A * powB[i - 1];
  for (int l = 1; l <= horizon; ++l) {
    for (int m = 0; m < window; ++m) {
      const int p = l + age - 2 - m;
      if (p < 0) continue;
      out.block((l - 1) * nx, m * nb, nx, nb) = powB[static_cast<size_t>(p)];
    }
  }
  return out;
}

Vector estimate_neighbor_state(const Vector& broadcast_state, const Matrix& A,
                               const Matrix& B, const std::vector<Vector>& plan,
                               int age) {
  if (age < 0) throw std::invalid_argument("information age must be nonnegative");
  if (static_cast<int>(plan.size()) < age) {
    throw std::invalid_argument(
        "neighbor plan does not cover the aged interval: have " +
        std::to_string(plan.size()) + " inputs, need " + std::to_string(age));
  }
  Vector x = broadcast_state;
  for (int r = 0; r < age; ++r) {
    if (plan[static_cast<size_t>(r)].size() != B.cols()) {
      throw std::invalid_argument("neighbor plan input dimension mismatch");
    }
    x = A * x + B * plan[static_cast<size_t>(r)];
  }
  return x;
}

int FeedbackMask::count_free() const {
  int n = 0;
  for (Eigen::Index r = 0; r < free.rows(); ++r) {
    for (Eigen::Index c = 0; c < free.cols(); ++c) {
      if (free(r, c)) ++n;
    }
  }
  return n;
}

FeedbackMask build_feedback_mask(const std::vector<int>& predicted_age, int age,
                                 int horizon) {
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  if (age < 1) throw std::invalid_argument("information age must be at least 1");
  if (static_cast<int>(predicted_age.size()) != horizon - 1) {
    throw std::invalid_argument("predicted ages must cover slots 1..H-1");
  }
  FeedbackMask mask;
  mask.age = age;
  const int window = age - 1 + horizon;
  mask.free.setConstant(horizon, window, false);
  for (int n = 1; n < horizon; ++n) {
    const int a_pred = predicted_age[static_cast<size_t>(n - 1)];
    if (a_pred < 1) throw std::invalid_argument("predicted age must be at least 1");
    const int last = n + age - 1 - a_pred;  // inclusive window column bound
    for (int m = 0; m <= last && m < window; ++m) mask.free(n, m) = true;
  }
  return mask;
}

}  // namespace aoidmpc
