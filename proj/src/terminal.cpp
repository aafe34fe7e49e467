// Copyright 2026
// SPDX-License-Identifier: Apache-2.0

#include "aoidmpc/terminal.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "aoidmpc/lyapunov.hpp"
#include "aoidmpc/qp.hpp"

namespace aoidmpc {

namespace {

double support_over(const Polytope& poly, const Vector& dir, const Tolerances& tol) {
  return support_function(poly, dir, tol);
}

// Largest effect of the neighbor deviation interval on a scalar row.
double interval_max(double coeff, double lo, double hi) {
  return std::max(coeff * lo, coeff * hi);
}

struct GrowOutcome {
  Polytope set;
  bool converged = false;
  bool collapsed = false;  // propagated bound crossed zero: seed too small
  int families = 0;
};

// Grows the maximal robustly invariant subset of the seed polytope under
// Z+ = A Z + B w, w in [lo, hi], by appending propagated seed-row families
//   (c' A^t) Z <= b_c - sum_{l<t} max_w (c' A^l B w)
// until a whole family is redundant.  The families are exactly the rows of
// Pre^t(seed), so redundancy of family t certifies invariance of the
// intersection so far.  Seed rows must come in (+c, -c) pairs with equal
// bounds; with a sign-symmetric deviation interval the grown set stays
// symmetric, so each pair costs a single support LP.  box_bound is any cheap
// superset of the seed (typically the seed box alone) used to skip LPs.
GrowOutcome grow_invariant_set(const Matrix& A, const Matrix& B,
                               const Polytope& seed, const Polytope& box_bound,
                               double lo, double hi,
                               const TerminalOptions& options,
                               const Tolerances& tol) {
  GrowOutcome out;
  const int dim = seed.dim();
  const int nseed = seed.num_rows();
  if (nseed % 2 != 0) throw std::logic_error("seed rows must be paired");
  for (int i = 0; i < nseed; i += 2) {
    if ((seed.C.row(i) + seed.C.row(i + 1)).norm() > 1e-12 ||
        std::abs(seed.b[i] - seed.b[i + 1]) > 1e-12) {
      throw std::logic_error("seed rows must be symmetric pairs");
    }
  }
  const bool symmetric =
      (lo == 0.0 && hi == 0.0) ||
      std::abs(lo + hi) <= 1e-14 * std::max(std::abs(lo), std::abs(hi));
  const int stride = symmetric ? 2 : 1;

  Matrix rowsC = seed.C;
  Vector rowsB = seed.b;
  Matrix famC = seed.C;  // seed directions times A^t
  Vector shrink = Vector::Zero(nseed);

  auto append_row = [&](const Vector& dir, double bound) {
    rowsC.conservativeResize(rowsC.rows() + 1, dim);
    rowsC.row(rowsC.rows() - 1) = dir.transpose();
    rowsB.conservativeResize(rowsB.size() + 1);
    rowsB[rowsB.size() - 1] = bound;
  };

  for (int t = 1; t <= options.max_iterations; ++t) {
    for (int i = 0; i < nseed; ++i) {
      const double coeff = (famC.row(i) * B)(0, 0);
      shrink[i] += interval_max(coeff, lo, hi);
    }
    famC = famC * A;

    bool all_redundant = true;
    for (int i = 0; i < nseed; i += stride) {
      const Vector dir = famC.row(i).transpose();
      const double bound = seed.b[i] - shrink[i];
      if (bound <= 0.0 || (symmetric && seed.b[i + 1] - shrink[i + 1] <= 0.0)) {
        out.collapsed = true;
        out.families = t;
        return out;
      }
      // Quick test against the seed box (a superset of the current set).
      if (support_over(box_bound, dir, tol) <= bound + tol.support) continue;
      Polytope current;
      current.C = rowsC;
      current.b = rowsB;
      if (support_over(current, dir, tol) <= bound + tol.support) continue;
      all_redundant = false;
      append_row(dir, bound);
      if (symmetric) append_row(-dir, seed.b[i + 1] - shrink[i + 1]);
    }
    if (all_redundant) {
      out.converged = true;
      out.families = t;
      break;
    }
  }
  if (!out.converged) return out;

  // Final redundancy pass: drop every row implied by the others (jointly by
  // mirror pairs when the set is symmetric).
  std::vector<int> keep;
  for (int i = 0; i < rowsC.rows(); i += stride) {
    Polytope others;
    others.C = Matrix::Zero(rowsC.rows() - stride, dim);
    others.b = Vector::Zero(rowsC.rows() - stride);
    int r = 0;
    for (int j = 0; j < rowsC.rows(); ++j) {
      if (j >= i && j < i + stride) continue;
      others.C.row(r) = rowsC.row(j);
      others.b[r] = rowsB[j];
      ++r;
    }
    const double sup = support_over(others, rowsC.row(i).transpose(), tol);
    if (sup > rowsB[i] + tol.support) {
      keep.push_back(i);
      if (symmetric) keep.push_back(i + 1);
    }
  }
  // Removing rows one at a time against the full complement can discard a
  // pair of mutually redundant rows; rebuild and verify, falling back to the
  // unpruned set if the pruned one lost a face.
  Polytope pruned;
  pruned.C = Matrix::Zero(static_cast<int>(keep.size()), dim);
  pruned.b = Vector::Zero(static_cast<int>(keep.size()));
  for (int i = 0; i < static_cast<int>(keep.size()); ++i) {
    pruned.C.row(i) = rowsC.row(keep[i]);
    pruned.b[i] = rowsB[keep[i]];
  }
  bool prune_ok = true;
  for (int i = 0; i < rowsC.rows() && prune_ok; ++i) {
    if (support_over(pruned, rowsC.row(i).transpose(), tol) > rowsB[i] + 10 * tol.support)
      prune_ok = false;
  }
  if (prune_ok && pruned.num_rows() > 0) {
    out.set = pruned;
  } else {
    out.set.C = rowsC;
    out.set.b = rowsB;
  }
  return out;
}

Vector own_gain_direction(const TerminalIngredients& t) {
  Vector dir = Vector::Zero(t.dim());
  dir.head(t.nz) = t.K_rel;
  return dir;
}

}  // namespace

TerminalIngredients lift_terminal_dynamics(const TerminalSpec& spec) {
  const int nz = static_cast<int>(spec.A.rows());
  if (spec.A.cols() != nz || spec.B.rows() != nz || spec.B.cols() != 1) {
    throw std::invalid_argument("terminal dynamics must be square with one input");
  }
  if (spec.K_rel.size() != nz) {
    throw std::invalid_argument("terminal gain dimension mismatch");
  }
  if (spec.delay < 0) throw std::invalid_argument("terminal delay must be nonnegative");
  if (spec.Qx_rel.rows() != nz || spec.Qx_rel.cols() != nz) {
    throw std::invalid_argument("terminal stage weight dimension mismatch");
  }

  TerminalIngredients t;
  t.nz = nz;
  t.delay = spec.delay;
  t.K_rel = spec.K_rel;
  t.u_ff = spec.u_ff;
  t.input_bound = spec.input_bound;
  t.dev_lo = spec.dev_lo;
  t.dev_hi = spec.dev_hi;

  const int dim = (spec.delay + 1) * nz;
  t.A_rel = Matrix::Zero(dim, dim);
  for (int blk = 0; blk < spec.delay; ++blk) {
    t.A_rel.block(blk * nz, (blk + 1) * nz, nz, nz) = Matrix::Identity(nz, nz);
  }
  t.A_rel.block(spec.delay * nz, spec.delay * nz, nz, nz) = spec.A;
  // The own input in the terminal phase is u_ff + K_rel z_{k-delay}; it
  // enters the relative state negatively (z = x_front - x_self).
  t.A_rel.block(spec.delay * nz, 0, nz, nz) -= spec.B * spec.K_rel.transpose();
  t.B_rel = Matrix::Zero(dim, 1);
  t.B_rel.block(spec.delay * nz, 0, nz, 1) = spec.B;

  t.Q_rel = Matrix::Zero(dim, dim);
  t.Q_rel.topLeftCorner(nz, nz) =
      spec.K_rel * spec.qu_own * spec.K_rel.transpose();
  t.Q_rel.bottomRightCorner(nz, nz) = spec.Qx_rel;

  t.P_rel = solve_discrete_lyapunov(t.A_rel, t.Q_rel);
  return t;
}

TerminalIngredients synthesize_terminal(const TerminalSpec& spec,
                                        const TerminalOptions& options,
                                        const Tolerances& tol) {
  TerminalIngredients t = lift_terminal_dynamics(spec);
  if (options.seed_halfwidth.size() != t.nz) {
    throw std::invalid_argument("terminal seed halfwidth must match the relative state");
  }
  if (options.seed_halfwidth.minCoeff() <= 0.0) {
    throw std::invalid_argument("terminal seed halfwidth must be positive");
  }

  // Neighbor deviation interval actually possible in the terminal phase.
  const double lo = spec.dev_lo;
  const double hi = spec.dev_hi;
  if (lo > hi) throw std::invalid_argument("terminal deviation interval is empty");

  // Input admissibility is built into the seed: the terminal input is
  // u_ff + K z_{k-delay}, so |K z| <= input_bound - |u_ff| keeps every
  // terminal input inside the box for either feedforward sign.
  double budget = spec.input_bound - std::abs(spec.u_ff);
  if (budget <= 0.0) {
    throw std::runtime_error(
        "terminal synthesis failed: terminal input admissibility");
  }
  if (options.input_dev_cap > 0.0) {
    // Tighter own-input rows than admissibility alone requires; the cap
    // bounds the radius the next vehicle in a chain has to absorb.
    budget = std::min(budget, options.input_dev_cap);
  }

  Vector half = Vector::Zero(t.dim());
  for (int blk = 0; blk <= t.delay; ++blk) {
    half.segment(blk * t.nz, t.nz) = options.seed_halfwidth;
  }
  const Polytope box = make_box(Vector::Zero(t.dim()), half);
  Vector kdir = Vector::Zero(t.dim());
  kdir.head(t.nz) = t.K_rel;

  Polytope seed;
  seed.C = Matrix::Zero(box.num_rows() + 2, t.dim());
  seed.b = Vector::Zero(box.num_rows() + 2);
  seed.C.topRows(box.num_rows()) = box.C;
  seed.b.head(box.num_rows()) = box.b;
  seed.C.row(box.num_rows()) = kdir.transpose();
  seed.C.row(box.num_rows() + 1) = -kdir.transpose();
  seed.b[box.num_rows()] = budget;
  seed.b[box.num_rows() + 1] = budget;

  const GrowOutcome grown =
      grow_invariant_set(t.A_rel, t.B_rel, seed, box, lo, hi, options, tol);
  if (!grown.converged || grown.collapsed) {
    // The maximal invariant subset of this seed is empty (or the iteration
    // cap was hit); only a larger seed box can change the outcome.
    throw std::runtime_error(
        "terminal synthesis failed: terminal set robust invariance");
  }
  t.set_rel = grown.set;
  const double up = support_over(t.set_rel, kdir, tol);
  const double dn = support_over(t.set_rel, Vector(-kdir), tol);
  t.own_dev_radius = std::max(up, dn);
  verify_terminal(t, tol);
  return t;
}

std::vector<TerminalCheck> check_terminal(const TerminalIngredients& t,
                                          const Tolerances& tol) {
  std::vector<TerminalCheck> checks;

  // 1. Robust invariance: for every face, the worst successor stays inside.
  {
    TerminalCheck c;
    c.name = "terminal set robust invariance";
    double worst = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < t.set_rel.num_rows(); ++i) {
      const Vector dir = (t.set_rel.C.row(i) * t.A_rel).transpose();
      const double wterm =
          interval_max((t.set_rel.C.row(i) * t.B_rel)(0, 0), t.dev_lo, t.dev_hi);
      const double sup = support_over(t.set_rel, dir, tol);
      worst = std::max(worst, sup + wterm - t.set_rel.b[i]);
    }
    c.worst = worst;
    c.pass = worst <= tol.support;
    checks.push_back(c);
  }

  // 2. Terminal input admissibility: |u_ff + K_rel z_{k-delay}| within bound.
  {
    TerminalCheck c;
    c.name = "terminal input admissibility";
    const Vector kdir = own_gain_direction(t);
    const double up =
        support_over(t.set_rel, kdir, tol) - (t.input_bound - t.u_ff);
    const double dn =
        support_over(t.set_rel, Vector(-kdir), tol) - (t.input_bound + t.u_ff);
    c.worst = std::max(up, dn);
    c.pass = c.worst <= tol.support;
    checks.push_back(c);
  }

  // 3. Lyapunov decrease of the terminal cost along the autonomous lift.
  {
    TerminalCheck c;
    c.name = "terminal cost decrease";
    const Matrix resid =
        t.A_rel.transpose() * t.P_rel * t.A_rel - t.P_rel + t.Q_rel;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(resid));
    c.worst = es.eigenvalues().maxCoeff();
    c.pass = c.worst <= 1e-8;
    checks.push_back(c);
  }

  // 4. The cost vanishes exactly on the consensus subspace (zero relative
  //    state in every delayed block maps to zero cost in full coordinates).
  {
    TerminalCheck c;
    c.name = "terminal cost consensus alignment";
    // Full-coordinate block [x_self; x_front]; consensus directions have
    // x_self == x_front in every block and must be P-neutral.  In relative
    // coordinates these map to Z = 0, so equivalently P_rel composed with the
    // relative-coordinate map S annihilates them; verify through S.
    const int nfull = 2 * t.nz * (t.delay + 1);
    Matrix S = Matrix::Zero(t.dim(), nfull);
    for (int blk = 0; blk <= t.delay; ++blk) {
      S.block(blk * t.nz, blk * 2 * t.nz, t.nz, t.nz) =
          -Matrix::Identity(t.nz, t.nz);
      S.block(blk * t.nz, blk * 2 * t.nz + t.nz, t.nz, t.nz) =
          Matrix::Identity(t.nz, t.nz);
    }
    const Matrix P_full = S.transpose() * t.P_rel * S;
    double worst = 0.0;
    for (int blk = 0; blk <= t.delay; ++blk) {
      for (int j = 0; j < t.nz; ++j) {
        Vector basis = Vector::Zero(nfull);
        basis[blk * 2 * t.nz + j] = 1.0;
        basis[blk * 2 * t.nz + t.nz + j] = 1.0;
        worst = std::max(worst, std::abs(basis.dot(P_full * basis)));
      }
    }
    c.worst = worst;
    c.pass = worst <= 1e-10;
    checks.push_back(c);
  }

  return checks;
}

void verify_terminal(const TerminalIngredients& t, const Tolerances& tol) {
  for (const auto& c : check_terminal(t, tol)) {
    if (!c.pass) {
      throw std::runtime_error("terminal verification failed: " + c.name);
    }
  }
}

Matrix tracking_terminal_cost(const Matrix& A, const Matrix& B, const Vector& K,
                              const Matrix& Q, double qu, const Tolerances& tol) {
  if (A.rows() != A.cols() || B.rows() != A.rows() || B.cols() != 1 ||
      K.size() != A.rows()) {
    throw std::invalid_argument("tracking terminal cost dimension mismatch");
  }
  const Matrix Acl = A - B * K.transpose();
  const Matrix Qt = Q + K * qu * K.transpose();
  return solve_discrete_lyapunov(Acl, Qt, tol);
}

}  // namespace aoidmpc
