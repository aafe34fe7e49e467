// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Interior-point solver specialized for robustly tightened MPC programs of
// the shape
//
//   min  0.5 x'Hx + g'x + 0.5*reg*|L|^2
//   s.t.                a_r' x <= b_r                       (plain rows)
//        c_r' x + sum_m d_{r,m} L_{r,m} <= b_r              (tightened rows)
//        L_{r,m} >= +/- (mu_{r,m}' x + mu0_{r,m})           (epigraph pairs)
//
// where x are the few "core" decision variables (nominal inputs and free
// feedback entries) and L are the nonnegative epigraph auxiliaries bounding
// the absolute row sensitivities |mu' x + mu0|. This is exactly the dense
// QP produced by box-deviation support-function tightening, but the Newton
// normal matrix is block sparse: the L-block is diagonal-plus-rank-1 per
// tightened row, so each interior-point step eliminates every L-group by a
// Sherman-Morrison Schur complement and solves only a core-sized system.
//
// A unit test flattens random instances of this structure into plain
// QpProblem form and cross-checks this solver against solve_qp, so the
// specialized path never becomes the only route to an answer.

#pragma once

#include <vector>

#include "aoidmpc/linalg.hpp"
#include "aoidmpc/qp.hpp"
#include "aoidmpc/tolerances.hpp"

namespace aoidmpc {

// Sparse row over the core variables.
struct SparseVec {
  std::vector<std::pair<int, double>> nz;  // (core index, coefficient)

  double dot(const Vector& x) const {
    double s = 0.0;
    for (const auto& [i, v] : nz) s += v * x[i];
    return s;
  }
  void add_to(Vector& out, double scale) const {
    for (const auto& [i, v] : nz) out[i] += scale * v;
  }
};

struct StructuredQp {
  int n_core = 0;
  Matrix H;  // n_core x n_core, symmetric PSD (caller regularizes)
  Vector g;
  double aux_reg = 1e-9;  // quadratic regularization on the L variables

  struct PlainRow {
    SparseVec a;
    double b = 0.0;
  };
  struct TightRow {
    SparseVec c;
    double b = 0.0;
    std::vector<double> d;        // positive deviation halfwidths, one per slot
    std::vector<SparseVec> mu;    // per-slot sensitivity rows (affine part in x)
    std::vector<double> mu0;      // per-slot sensitivity offsets
  };

  std::vector<PlainRow> plain;
  std::vector<TightRow> tight;

  int num_aux() const {
    int n = 0;
    for (const auto& t : tight) n += static_cast<int>(t.d.size());
    return n;
  }
  int num_rows() const { return static_cast<int>(plain.size() + tight.size()) + 2 * num_aux(); }
};

struct StructuredSolution {
  Vector x;                      // core variables
  std::vector<Vector> aux;       // L values per tightened row
  QpStatus status = QpStatus::max_iterations;
  double objective = 0.0;        // core objective (excluding aux regularization)
  double kkt_residual = 0.0;     // max of stationarity/primal/complementarity
  int iterations = 0;
};

StructuredSolution solve_structured_qp(const StructuredQp& p,
                                       const Tolerances& tol = default_tolerances());

// Expands the structured program into an equivalent dense QpProblem with
// variable order [core; L-groups in row order]. Used by the cross-check test
// and as the fallback path when the structured iteration fails to converge.
QpProblem flatten_structured_qp(const StructuredQp& p);

}  // namespace aoidmpc
