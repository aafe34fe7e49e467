// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "aoidmpc/polytope.hpp"

#include <stdexcept>

namespace aoidmpc {

Polytope make_box(const Vector& center, const Vector& halfwidth) {
  if (center.size() != halfwidth.size())
    throw std::invalid_argument("make_box: dimension mismatch");
  if ((halfwidth.array() < 0.0).any())
    throw std::invalid_argument("make_box: negative halfwidth");
  const int n = static_cast<int>(center.size());
  Polytope p;
  p.C = Matrix::Zero(2 * n, n);
  p.b = Vector::Zero(2 * n);
  for (int i = 0; i < n; ++i) {
    p.C(2 * i, i) = 1.0;
    p.b[2 * i] = center[i] + halfwidth[i];
    p.C(2 * i + 1, i) = -1.0;
    p.b[2 * i + 1] = -(center[i] - halfwidth[i]);
  }
  p.box = BoxDescription{center, halfwidth};
  return p;
}

bool is_nonempty(const Polytope& poly, const Tolerances& tol) {
  if (poly.num_rows() == 0) return true;
  if (poly.box.has_value()) return true;  // boxes always contain their center
  // Feasibility via maximizing the zero direction: solve_max_lp runs the
  // phase-1 machinery internally and throws on an empty set.
  try {
    (void)solve_max_lp(poly.C, poly.b, Vector::Zero(poly.dim()), tol);
    return true;
  } catch (const std::runtime_error&) {
    return false;
  }
}

double support_function(const Polytope& poly, const Vector& direction, const Tolerances& tol) {
  if (direction.size() != poly.dim())
    throw std::invalid_argument("support_function: direction dimension mismatch");
  if (poly.box.has_value()) {
    const auto& box = *poly.box;
    return direction.cwiseAbs().dot(box.halfwidth) + direction.dot(box.center);
  }
  const auto value = solve_max_lp(poly.C, poly.b, direction, tol);
  if (!value.has_value()) throw std::runtime_error("unbounded support");
  return *value;
}

}  // namespace aoidmpc
