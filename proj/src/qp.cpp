// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "aoidmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace aoidmpc {
namespace {

double inf_norm_or_zero(const Vector& v) { return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0; }

// Largest step alpha in (0, 1] keeping v + alpha*dv strictly positive.
double max_positive_step(const Vector& v, const Vector& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  }
  return alpha;
}

struct CoreResult {
  Vector x;
  Vector lambda;
  QpStatus status = QpStatus::max_iterations;
  bool unbounded = false;
};

// Mehrotra predictor-corrector on: min 0.5 x'Hx + g'x s.t. Cx <= b.
CoreResult ipm(const Matrix& H, const Vector& g, const Matrix& C, const Vector& b,
               const Tolerances& tol, int max_iters) {
  const int n = static_cast<int>(g.size());
  const int m = static_cast<int>(b.size());
  CoreResult res;
  res.lambda = Vector::Zero(m);

  const double h_scale = H.size() > 0 ? H.cwiseAbs().maxCoeff() : 0.0;
  const double b_scale = 1.0 + inf_norm_or_zero(b);

  if (m == 0) {
    // Unconstrained minimum of a PSD form; detect directions of unboundedness
    // (g with a component outside range(H)).
    const double delta = 1e-12 * (1.0 + h_scale);
    Eigen::LDLT<Matrix> ldlt((H + delta * Matrix::Identity(n, n)).eval());
    res.x = ldlt.solve(-g);
    const double stat = inf_norm_or_zero(H * res.x + g);
    if (stat <= 1e-7 * (1.0 + inf_norm_or_zero(g))) {
      res.status = QpStatus::optimal;
    } else {
      res.unbounded = true;
    }
    return res;
  }

  // Starting point: regularized unconstrained minimizer (origin for LPs),
  // slacks clamped away from zero, unit multipliers.
  Vector x = Vector::Zero(n);
  if (h_scale > 0.0) {
    const double delta0 = 1e-8 * (1.0 + h_scale);
    x = Eigen::LDLT<Matrix>((H + delta0 * Matrix::Identity(n, n)).eval()).solve(-g);
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e8 * b_scale) x.setZero();
  }
  Vector s = (b - C * x).cwiseMax(1.0);
  Vector lambda = Vector::Ones(m);

  const double g_scale = 1.0 + inf_norm_or_zero(g);

  for (int iter = 0; iter < max_iters; ++iter) {
    const Vector cx = C * x;
    const Vector r_d = H * x + g + C.transpose() * lambda;
    const Vector r_p = cx + s - b;
    const double mu = s.dot(lambda) / m;

    const double rd_norm = inf_norm_or_zero(r_d);
    const double rp_norm = inf_norm_or_zero(r_p);
    const double stat_scale = g_scale + inf_norm_or_zero(H * x) + inf_norm_or_zero(C.transpose() * lambda);
    if (rd_norm <= tol.qp_kkt * stat_scale && rp_norm <= tol.qp_kkt * b_scale &&
        mu <= tol.qp_mu * b_scale) {
      res.status = QpStatus::optimal;
      break;
    }

    const Vector w = (lambda.array() / s.array()).cwiseMax(1e-16).cwiseMin(1e16).matrix();
    Matrix M = H + C.transpose() * w.asDiagonal() * C;
    double delta = 1e-13 * (1.0 + M.cwiseAbs().maxCoeff());
    M.diagonal().array() += delta;
    Eigen::LDLT<Matrix> ldlt(M);
    for (int bump = 0; bump < 6 && ldlt.info() != Eigen::Success; ++bump) {
      delta *= 100.0;
      Matrix M2 = M;
      M2.diagonal().array() += delta;
      ldlt.compute(M2);
    }

    // Affine-scaling (predictor) direction.
    const Vector rhs_aff = -r_d + C.transpose() * (lambda - w.cwiseProduct(r_p));
    const Vector dx_aff = ldlt.solve(rhs_aff);
    const Vector ds_aff = -r_p - C * dx_aff;
    const Vector dl_aff = -lambda - w.cwiseProduct(ds_aff);

    const double ap_aff = max_positive_step(s, ds_aff);
    const double ad_aff = max_positive_step(lambda, dl_aff);
    const double mu_aff = (s + ap_aff * ds_aff).dot(lambda + ad_aff * dl_aff) / m;
    const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 1e-8, 0.99);

    // Corrector direction (reuses the factorization).
    const Vector t = lambda - (sigma * mu) * s.cwiseInverse()
                     + ds_aff.cwiseProduct(dl_aff).cwiseQuotient(s);
    const Vector rhs = -r_d + C.transpose() * (t - w.cwiseProduct(r_p));
    const Vector dx = ldlt.solve(rhs);
    const Vector ds = -r_p - C * dx;
    const Vector dl = -t - w.cwiseProduct(ds);

    const double boundary = mu > 1e-6 ? 0.995 : 0.9995;
    const double ap = std::min(1.0, boundary * max_positive_step(s, ds));
    const double ad = std::min(1.0, boundary * max_positive_step(lambda, dl));

    x += ap * dx;
    s += ap * ds;
    lambda += ad * dl;

    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > tol.qp_unbounded_scale * b_scale) {
      res.unbounded = true;
      break;
    }
  }

  res.x = x;
  res.lambda = lambda;
  return res;
}

// Active-set polish: re-solve the equality-constrained QP on the detected
// active rows for high-accuracy primal/dual values. Accepted only when it
// improves the worst KKT residual without breaking feasibility.
void polish(const Matrix& H, const Vector& g, const Matrix& C, const Vector& b, CoreResult& r,
            const Tolerances&) {
  const int n = static_cast<int>(g.size());
  const int m = static_cast<int>(b.size());
  if (m == 0) return;

  std::vector<int> active;
  const Vector slack = b - C * r.x;
  for (int i = 0; i < m; ++i) {
    if (r.lambda[i] > std::max(slack[i], 1e-11)) active.push_back(i);
  }
  const int a = static_cast<int>(active.size());

  Matrix kkt = Matrix::Zero(n + a, n + a);
  kkt.topLeftCorner(n, n) = H;
  Vector rhs(n + a);
  rhs.head(n) = -g;
  for (int i = 0; i < a; ++i) {
    kkt.block(n + i, 0, 1, n) = C.row(active[i]);
    kkt.block(0, n + i, n, 1) = C.row(active[i]).transpose();
    rhs[n + i] = b[active[i]];
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(kkt);
  const Vector sol = cod.solve(rhs);
  if (!sol.allFinite()) return;

  Vector x_new = sol.head(n);
  Vector lambda_new = Vector::Zero(m);
  for (int i = 0; i < a; ++i) lambda_new[active[i]] = sol[n + i];

  const double b_scale = 1.0 + inf_norm_or_zero(b);
  if (lambda_new.size() > 0 && lambda_new.minCoeff() < -1e-9) return;
  const Vector viol = C * x_new - b;
  if (viol.size() > 0 && viol.maxCoeff() > 1e-9 * b_scale) return;

  auto worst_residual = [&](const Vector& x, const Vector& lam) {
    const double stat = inf_norm_or_zero(H * x + g + C.transpose() * lam);
    const Vector sl = b - C * x;
    const double prim = sl.size() > 0 ? std::max(0.0, (-sl).maxCoeff()) : 0.0;
    const double comp = sl.size() > 0 ? lam.cwiseProduct(sl).cwiseAbs().maxCoeff() : 0.0;
    return std::max({stat, prim, comp});
  };
  if (worst_residual(x_new, lambda_new.cwiseMax(0.0)) <= worst_residual(r.x, r.lambda)) {
    r.x = x_new;
    r.lambda = lambda_new.cwiseMax(0.0);
  }
}

// Primal active-set crossover for pure LPs: from a feasible point, walk along
// projected objective directions, adding blocking rows and dropping rows with
// negative multipliers under Bland's lowest-index rule until the KKT
// conditions hold.  Interior-point iterations can stall on a non-optimal
// degenerate face when many rows are near-parallel; this finishes the job
// exactly.  Returns false when the start is infeasible or the step limit is
// reached (the caller keeps the stalled iterate).
bool lp_active_set(const Vector& g, const Matrix& C, const Vector& b, CoreResult& r) {
  const int n = static_cast<int>(g.size());
  const int m = static_cast<int>(b.size());
  if (m == 0 || r.x.size() != n || !r.x.allFinite()) return false;
  const double b_scale = 1.0 + inf_norm_or_zero(b);
  const double g_norm = inf_norm_or_zero(g);
  Vector x = r.x;
  Vector slack = b - C * x;
  if (slack.minCoeff() < -1e-9 * b_scale) return false;

  std::vector<int> work;
  auto in_work = [&](int i) {
    return std::find(work.begin(), work.end(), i) != work.end();
  };
  // Seed the working set with currently tight, linearly independent rows.
  Matrix Wt(n, 0);
  auto try_add = [&](int i) {
    Matrix cand(n, Wt.cols() + 1);
    if (Wt.cols() > 0) cand.leftCols(Wt.cols()) = Wt;
    cand.col(Wt.cols()) = C.row(i).transpose();
    Eigen::ColPivHouseholderQR<Matrix> qr(cand);
    if (qr.rank() == cand.cols()) {
      Wt = cand;
      work.push_back(i);
      return true;
    }
    return false;
  };
  for (int i = 0; i < m; ++i) {
    if (static_cast<int>(work.size()) >= n) break;
    if (slack[i] <= 1e-9 * b_scale) try_add(i);
  }

  const int max_steps = 50 * (n + m);
  for (int step = 0; step < max_steps; ++step) {
    // Projected steepest-descent direction in the null space of the working
    // rows.
    Vector d = -g;
    if (Wt.cols() > 0) {
      Eigen::HouseholderQR<Matrix> qr(Wt);
      Matrix Q = qr.householderQ() * Matrix::Identity(n, Wt.cols());
      d -= Q * (Q.transpose() * d);
    }
    if (inf_norm_or_zero(d) <= 1e-11 * (1.0 + g_norm)) {
      // Stationary on this face: check multiplier signs.
      Vector lam = Vector::Zero(static_cast<int>(work.size()));
      if (Wt.cols() > 0) {
        lam = Wt.colPivHouseholderQr().solve(-g);
      }
      int drop = -1;
      for (size_t j = 0; j < work.size(); ++j) {
        if (lam[static_cast<int>(j)] < -1e-10 * (1.0 + g_norm)) {
          if (drop < 0 || work[j] < work[static_cast<size_t>(drop)]) drop = static_cast<int>(j);
        }
      }
      if (drop < 0) {
        r.x = x;
        r.lambda = Vector::Zero(m);
        for (size_t j = 0; j < work.size(); ++j) {
          r.lambda[work[j]] = std::max(0.0, lam[static_cast<int>(j)]);
        }
        r.status = QpStatus::optimal;
        r.unbounded = false;
        return true;
      }
      work.erase(work.begin() + drop);
      Matrix Wn(n, Wt.cols() - 1);
      int c = 0;
      for (int j = 0; j < Wt.cols(); ++j) {
        if (j == drop) continue;
        Wn.col(c++) = Wt.col(j);
      }
      Wt = Wn;
      continue;
    }

    // March to the nearest blocking row (lowest index on ties).
    slack = b - C * x;
    double alpha = std::numeric_limits<double>::infinity();
    int block = -1;
    for (int i = 0; i < m; ++i) {
      if (in_work(i)) continue;
      const double cd = C.row(i).dot(d);
      if (cd <= 1e-12 * (1.0 + C.row(i).norm() * d.norm())) continue;
      const double a = std::max(0.0, slack[i]) / cd;
      if (a < alpha - 1e-12 || (a < alpha + 1e-12 && (block < 0 || i < block))) {
        alpha = a;
        block = i;
      }
    }
    if (block < 0) {
      r.unbounded = true;
      r.status = QpStatus::max_iterations;
      r.x = x;
      return true;
    }
    x += alpha * d;
    if (!try_add(block)) {
      // Dependent blocking row: swap it in for a dependent partner by
      // dropping the first working row that keeps it independent.
      bool swapped = false;
      for (size_t j = 0; j < work.size() && !swapped; ++j) {
        std::vector<int> wsave = work;
        Matrix Wsave = Wt;
        work.erase(work.begin() + static_cast<long>(j));
        Matrix Wn(n, Wt.cols() - 1);
        int c = 0;
        for (int col = 0; col < Wt.cols(); ++col) {
          if (col == static_cast<int>(j)) continue;
          Wn.col(c++) = Wt.col(col);
        }
        Wt = Wn;
        if (try_add(block)) {
          swapped = true;
        } else {
          work = wsave;
          Wt = Wsave;
        }
      }
      if (!swapped) return false;
    }
  }
  return false;
}

// Residual-based acceptance for iterates that stalled short of the iteration
// limit's internal test: on dual-degenerate problems (many near-parallel
// rows) the multipliers oscillate while the point itself is optimal, so the
// returned pair is judged by the same scaled KKT thresholds instead.
bool residuals_acceptable(const Matrix& H, const Vector& g, const Matrix& C, const Vector& b,
                          const CoreResult& r, const Tolerances& tol) {
  if (r.x.size() != g.size() || r.lambda.size() != b.size()) return false;
  if (!r.x.allFinite() || !r.lambda.allFinite()) return false;
  const double b_scale = 1.0 + inf_norm_or_zero(b);
  if (r.lambda.size() > 0 && r.lambda.minCoeff() < -tol.qp_kkt) return false;
  const Vector s = b - C * r.x;
  if (s.size() > 0 && s.minCoeff() < -tol.qp_kkt * b_scale) return false;
  const Vector r_d = H * r.x + g + (C.rows() > 0 ? Vector(C.transpose() * r.lambda)
                                                 : Vector(Vector::Zero(g.size())));
  const double stat_scale = 1.0 + inf_norm_or_zero(g) + inf_norm_or_zero(H * r.x) +
                            (C.rows() > 0 ? inf_norm_or_zero(C.transpose() * r.lambda) : 0.0);
  if (inf_norm_or_zero(r_d) > tol.qp_kkt * stat_scale) return false;
  const double comp =
      s.size() > 0 ? r.lambda.cwiseProduct(s).cwiseAbs().maxCoeff() : 0.0;
  return comp <= tol.qp_mu * b_scale * 10.0;
}

// Phase-1: minimal total constraint violation min 1't s.t. Cx - t <= b, t >= 0.
double phase1_min_violation(const Matrix& C, const Vector& b, const Tolerances& tol, Vector* x_out) {
  const int n = static_cast<int>(C.cols());
  const int m = static_cast<int>(b.size());
  Matrix Cp = Matrix::Zero(2 * m, n + m);
  Vector bp(2 * m);
  Cp.topLeftCorner(m, n) = C;
  Cp.block(0, n, m, m) = -Matrix::Identity(m, m);
  Cp.block(m, n, m, m) = -Matrix::Identity(m, m);
  bp.head(m) = b;
  bp.tail(m).setZero();
  Vector gp = Vector::Zero(n + m);
  gp.tail(m).setOnes();

  CoreResult r = ipm(Matrix::Zero(n + m, n + m), gp, Cp, bp, tol, 2 * tol.qp_max_iters);
  if (r.status != QpStatus::optimal && r.x.allFinite()) {
    // A stalled phase-1 must not misclassify feasibility: repair the iterate
    // into the relaxed feasible set and finish with the exact crossover.
    Vector viol = Cp.topLeftCorner(m, n) * r.x.head(n) - bp.head(m);
    for (int i = 0; i < m; ++i) r.x[n + i] = std::max(0.0, viol[i]);
    lp_active_set(gp, Cp, bp, r);
  }
  if (x_out != nullptr) *x_out = r.x.head(n);
  // The phase-1 LP is always feasible and bounded below by zero; its optimum
  // is the certificate value.
  return std::max(0.0, r.x.tail(m).sum());
}

}  // namespace

QpSolution solve_qp(const QpProblem& p, const Tolerances& tol) {
  const int n = p.num_vars();
  if (p.H.rows() != n || p.H.cols() != n) throw std::invalid_argument("solve_qp: H dimension mismatch");
  if (p.C_ineq.rows() != p.b_ineq.size() || (p.C_ineq.rows() > 0 && p.C_ineq.cols() != n))
    throw std::invalid_argument("solve_qp: inequality dimension mismatch");
  if (p.C_eq.rows() != p.b_eq.size() || (p.C_eq.rows() > 0 && p.C_eq.cols() != n))
    throw std::invalid_argument("solve_qp: equality dimension mismatch");
  if (!all_finite(p.H) || !all_finite(p.g) || !all_finite(p.C_ineq) || !all_finite(p.b_ineq) ||
      !all_finite(p.C_eq) || !all_finite(p.b_eq))
    throw std::invalid_argument("solve_qp: non-finite entries");

  const Matrix H = symmetrize(p.H);
  QpSolution out;
  out.nu_eq = Vector::Zero(p.C_eq.rows());

  // Equality constraints are eliminated through a kernel basis so the
  // interior-point core only ever sees inequalities.
  Vector x_part = Vector::Zero(n);
  Matrix Z = Matrix::Identity(n, n);
  const bool has_eq = p.C_eq.rows() > 0;
  if (has_eq) {
    x_part = p.C_eq.colPivHouseholderQr().solve(p.b_eq);
    const double eq_resid = inf_norm_or_zero(p.C_eq * x_part - p.b_eq);
    if (eq_resid > 1e-8 * (1.0 + inf_norm_or_zero(p.b_eq))) {
      out.status = QpStatus::infeasible;
      out.infeasibility_certificate = eq_resid;
      out.x = x_part;
      out.lambda_ineq = Vector::Zero(p.C_ineq.rows());
      return out;
    }
    Eigen::FullPivLU<Matrix> lu(p.C_eq);
    Z = lu.kernel();
    if (lu.dimensionOfKernel() == 0) Z = Matrix::Zero(n, 0);
  }

  const Matrix Hr = Z.cols() > 0 ? symmetrize(Z.transpose() * H * Z) : Matrix::Zero(0, 0);
  const Vector gr = Z.cols() > 0 ? Vector(Z.transpose() * (p.g + H * x_part)) : Vector::Zero(0);
  const Matrix Cr = p.C_ineq.rows() > 0 && Z.cols() > 0 ? Matrix(p.C_ineq * Z)
                                                        : Matrix::Zero(p.C_ineq.rows(), Z.cols());
  const Vector br = p.b_ineq - p.C_ineq * x_part;

  CoreResult core;
  if (Z.cols() == 0) {
    // Equalities pin the point completely.
    core.x = Vector::Zero(0);
    core.lambda = Vector::Zero(p.C_ineq.rows());
    const double viol = br.size() > 0 ? std::max(0.0, (-br).maxCoeff()) : 0.0;
    core.status = viol <= tol.qp_feas * (1.0 + inf_norm_or_zero(p.b_ineq)) ? QpStatus::optimal
                                                                           : QpStatus::infeasible;
    if (core.status == QpStatus::infeasible) out.infeasibility_certificate = viol;
  } else {
    core = ipm(Hr, gr, Cr, br, tol, tol.qp_max_iters);
    const bool pure_lp = Hr.size() == 0 || Hr.cwiseAbs().maxCoeff() == 0.0;
    if (!core.unbounded && Cr.rows() > 0) {
      // The polish is attempted even on a stalled iterate: dual-degenerate
      // problems converge in the primal long before the multipliers settle,
      // and the snapped point is accepted on its own verified residuals.
      polish(Hr, gr, Cr, br, core, tol);
      if (core.status != QpStatus::optimal && residuals_acceptable(Hr, gr, Cr, br, core, tol)) {
        core.status = QpStatus::optimal;
      }
      if (core.status != QpStatus::optimal && pure_lp) {
        // Interior-point iterations can stall on a degenerate non-optimal
        // face of an LP; the active-set crossover finishes combinatorially.
        lp_active_set(gr, Cr, br, core);
      }
    }
    if (core.status != QpStatus::optimal && !core.unbounded && Cr.rows() > 0) {
      // Certify infeasibility (or rule it out and retry) with phase-1.
      const double min_viol = phase1_min_violation(Cr, br, tol, nullptr);
      if (min_viol > tol.qp_feas * (1.0 + inf_norm_or_zero(br))) {
        core.status = QpStatus::infeasible;
        out.infeasibility_certificate = min_viol;
      } else {
        core = ipm(Hr, gr, Cr, br, tol, 3 * tol.qp_max_iters);
        polish(Hr, gr, Cr, br, core, tol);
        if (core.status != QpStatus::optimal && !core.unbounded &&
            residuals_acceptable(Hr, gr, Cr, br, core, tol)) {
          core.status = QpStatus::optimal;
        }
      }
    }
  }

  out.status = core.status;
  out.unbounded = core.unbounded;
  out.x = x_part;
  if (Z.cols() > 0) out.x += Z * core.x;
  out.lambda_ineq = core.lambda;
  if (has_eq) {
    const Vector grad = H * out.x + p.g +
                        (p.C_ineq.rows() > 0 ? Vector(p.C_ineq.transpose() * out.lambda_ineq)
                                             : Vector(Vector::Zero(n)));
    out.nu_eq = p.C_eq.transpose().colPivHouseholderQr().solve(-grad);
  }
  out.objective = 0.5 * out.x.dot(H * out.x) + p.g.dot(out.x);

  // KKT residuals at the returned point.
  Vector grad = H * out.x + p.g;
  if (p.C_ineq.rows() > 0) grad += p.C_ineq.transpose() * out.lambda_ineq;
  if (has_eq) grad += p.C_eq.transpose() * out.nu_eq;
  out.kkt_stationarity = inf_norm_or_zero(grad);
  double prim = 0.0;
  if (p.C_ineq.rows() > 0) prim = std::max(prim, (p.C_ineq * out.x - p.b_ineq).maxCoeff());
  prim = std::max(prim, 0.0);
  if (has_eq) prim = std::max(prim, inf_norm_or_zero(p.C_eq * out.x - p.b_eq));
  out.kkt_primal = prim;
  out.kkt_dual = out.lambda_ineq.size() > 0 ? std::max(0.0, -out.lambda_ineq.minCoeff()) : 0.0;
  out.kkt_complementarity =
      p.C_ineq.rows() > 0
          ? out.lambda_ineq.cwiseProduct(p.b_ineq - p.C_ineq * out.x).cwiseAbs().maxCoeff()
          : 0.0;
  return out;
}

std::optional<double> solve_max_lp(const Matrix& C, const Vector& b, const Vector& direction,
                                   const Tolerances& tol) {
  QpProblem lp;
  const int n = static_cast<int>(direction.size());
  lp.H = Matrix::Zero(n, n);
  lp.g = -direction;
  lp.C_ineq = C;
  lp.b_ineq = b;
  lp.C_eq = Matrix::Zero(0, n);
  lp.b_eq = Vector::Zero(0);
  const QpSolution sol = solve_qp(lp, tol);
  if (sol.unbounded) return std::nullopt;
  if (sol.status == QpStatus::infeasible) throw std::runtime_error("empty polytope");
  if (sol.status != QpStatus::optimal) throw std::runtime_error("support LP did not converge");
  return direction.dot(sol.x);
}

}  // namespace aoidmpc
