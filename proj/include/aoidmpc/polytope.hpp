// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Halfspace-representation polytopes {x : C x <= b} and their support
// functions. Axis-aligned boxes carry their (center, halfwidth) description so
// the support function can use the closed form sum(|d_i| * halfwidth_i) +
// <d, center>; general polytopes go through an LP.

#pragma once

#include <optional>

#include "aoidmpc/linalg.hpp"
#include "aoidmpc/qp.hpp"
#include "aoidmpc/tolerances.hpp"

namespace aoidmpc {

struct BoxDescription {
  Vector center;
  Vector halfwidth;  // >= 0 componentwise
};

struct Polytope {
  Matrix C;  // rows = halfspaces
  Vector b;
  std::optional<BoxDescription> box;  // set iff constructed via make_box

  int dim() const { return static_cast<int>(C.cols()); }
  int num_rows() const { return static_cast<int>(C.rows()); }

  // Membership with slack tolerance.
  bool contains(const Vector& x, double slack = 0.0) const {
    if (num_rows() == 0) return true;
    return ((C * x - b).array() <= slack).all();
  }
};

// Axis-aligned box |x_i - center_i| <= halfwidth_i as 2n halfspaces
// (row order: +e_1, -e_1, +e_2, -e_2, ...). Halfwidths must be >= 0.
Polytope make_box(const Vector& center, const Vector& halfwidth);

// Feasibility of {x : Cx <= b} via a phase-1 solve.
bool is_nonempty(const Polytope& poly, const Tolerances& tol = default_tolerances());

// max over poly of <direction, x>. Uses the closed form for boxes, an LP
// otherwise. Throws std::runtime_error("unbounded support") when the polytope
// is unbounded in the given direction, and std::runtime_error on an empty
// polytope.
double support_function(const Polytope& poly, const Vector& direction,
                        const Tolerances& tol = default_tolerances());

}  // namespace aoidmpc
