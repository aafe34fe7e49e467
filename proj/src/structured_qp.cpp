// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "aoidmpc/structured_qp.hpp"

#include <algorithm>
#include <cmath>

namespace aoidmpc {
namespace {

struct RowRef {
  // One inequality row over the stacked variables (x, L). Kinds:
  //   plain:  a'x <= b
  //   tight:  c'x + d'L_g <= b
  //   aux+ :  mu'x - L_{g,m} <= -mu0
  //   aux- : -mu'x - L_{g,m} <=  mu0
  enum Kind { plain, tight, aux_plus, aux_minus } kind;
  int group = -1;  // tight/aux rows: group index
  int slot = -1;   // aux rows: slot within group
};

double max_positive_step(const Vector& v, const Vector& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  return alpha;
}

}  // namespace

QpProblem flatten_structured_qp(const StructuredQp& p) {
  const int n = p.n_core;
  const int q = p.num_aux();
  const int nv = n + q;

  // Aux variable offsets per group.
  std::vector<int> offset(p.tight.size());
  int acc = n;
  for (size_t g = 0; g < p.tight.size(); ++g) {
    offset[g] = acc;
    acc += static_cast<int>(p.tight[g].d.size());
  }

  QpProblem out;
  out.H = Matrix::Zero(nv, nv);
  out.H.topLeftCorner(n, n) = p.H;
  out.H.bottomRightCorner(q, q) = p.aux_reg * Matrix::Identity(q, q);
  out.g = Vector::Zero(nv);
  out.g.head(n) = p.g;

  int rows = static_cast<int>(p.plain.size() + p.tight.size()) + 2 * q;
  out.C_ineq = Matrix::Zero(rows, nv);
  out.b_ineq = Vector::Zero(rows);
  out.C_eq = Matrix::Zero(0, nv);
  out.b_eq = Vector::Zero(0);

  int r = 0;
  for (const auto& row : p.plain) {
    for (const auto& [i, v] : row.a.nz) out.C_ineq(r, i) += v;
    out.b_ineq[r] = row.b;
    ++r;
  }
  for (size_t g = 0; g < p.tight.size(); ++g) {
    const auto& t = p.tight[g];
    for (const auto& [i, v] : t.c.nz) out.C_ineq(r, i) += v;
    for (size_t m = 0; m < t.d.size(); ++m) out.C_ineq(r, offset[g] + static_cast<int>(m)) = t.d[m];
    out.b_ineq[r] = t.b;
    ++r;
  }
  for (size_t g = 0; g < p.tight.size(); ++g) {
    const auto& t = p.tight[g];
    for (size_t m = 0; m < t.d.size(); ++m) {
      const int col = offset[g] + static_cast<int>(m);
      for (const auto& [i, v] : t.mu[m].nz) out.C_ineq(r, i) += v;
      out.C_ineq(r, col) = -1.0;
      out.b_ineq[r] = -t.mu0[m];
      ++r;
      for (const auto& [i, v] : t.mu[m].nz) out.C_ineq(r, i) -= v;
      out.C_ineq(r, col) = -1.0;
      out.b_ineq[r] = t.mu0[m];
      ++r;
    }
  }
  return out;
}

StructuredSolution solve_structured_qp(const StructuredQp& p, const Tolerances& tol) {
  const int n = p.n_core;
  const int G = static_cast<int>(p.tight.size());
  const int P = static_cast<int>(p.plain.size());
  const int q = p.num_aux();

  // Row layout: [plain rows][tight rows][aux pairs grouped by (g, m)].
  std::vector<RowRef> rows;
  rows.reserve(P + G + 2 * q);
  for (int r = 0; r < P; ++r) rows.push_back({RowRef::plain, -1, -1});
  for (int g = 0; g < G; ++g) rows.push_back({RowRef::tight, g, -1});
  std::vector<int> aux_row_start(G);  // first aux row index of each group
  {
    int r = P + G;
    for (int g = 0; g < G; ++g) {
      aux_row_start[g] = r;
      for (size_t m = 0; m < p.tight[g].d.size(); ++m) {
        rows.push_back({RowRef::aux_plus, g, static_cast<int>(m)});
        rows.push_back({RowRef::aux_minus, g, static_cast<int>(m)});
        r += 2;
      }
    }
  }
  const int R = static_cast<int>(rows.size());

  std::vector<int> aux_offset(G);  // L-vector offset of each group
  {
    int acc = 0;
    for (int g = 0; g < G; ++g) {
      aux_offset[g] = acc;
      acc += static_cast<int>(p.tight[g].d.size());
    }
  }

  StructuredSolution out;
  out.x = Vector::Zero(n);
  if (R == 0) {
    Eigen::LDLT<Matrix> ldlt(p.H);
    out.x = ldlt.solve(-p.g);
    out.status = QpStatus::optimal;
    out.objective = 0.5 * out.x.dot(p.H * out.x) + p.g.dot(out.x);
    return out;
  }

  // Primal iterate z = (x, L); row value, offset helpers.
  Vector x = Vector::Zero(n);
  Vector L = Vector::Zero(q);
  for (int g = 0; g < G; ++g)
    for (size_t m = 0; m < p.tight[g].d.size(); ++m)
      L[aux_offset[g] + static_cast<int>(m)] = std::abs(p.tight[g].mu0[m]) + 1.0;

  auto row_value = [&](int r) -> double {
    const RowRef& ref = rows[r];
    switch (ref.kind) {
      case RowRef::plain:
        return p.plain[r].a.dot(x);
      case RowRef::tight: {
        const auto& t = p.tight[ref.group];
        double v = t.c.dot(x);
        for (size_t m = 0; m < t.d.size(); ++m)
          v += t.d[m] * L[aux_offset[ref.group] + static_cast<int>(m)];
        return v;
      }
      case RowRef::aux_plus: {
        const auto& t = p.tight[ref.group];
        return t.mu[ref.slot].dot(x) - L[aux_offset[ref.group] + ref.slot];
      }
      case RowRef::aux_minus: {
        const auto& t = p.tight[ref.group];
        return -t.mu[ref.slot].dot(x) - L[aux_offset[ref.group] + ref.slot];
      }
    }
    return 0.0;
  };
  auto row_offset = [&](int r) -> double {
    const RowRef& ref = rows[r];
    switch (ref.kind) {
      case RowRef::plain: return p.plain[r].b;
      case RowRef::tight: return p.tight[ref.group].b;
      case RowRef::aux_plus: return -p.tight[ref.group].mu0[ref.slot];
      case RowRef::aux_minus: return p.tight[ref.group].mu0[ref.slot];
    }
    return 0.0;
  };

  Vector b(R);
  for (int r = 0; r < R; ++r) b[r] = row_offset(r);
  const double b_scale = 1.0 + b.cwiseAbs().maxCoeff();
  const double g_scale = 1.0 + (p.g.size() > 0 ? p.g.cwiseAbs().maxCoeff() : 0.0);

  Vector s(R), lambda = Vector::Ones(R);
  for (int r = 0; r < R; ++r) s[r] = std::max(b[r] - row_value(r), 1.0);

  // Scatter of A' * vec over the stacked variables, accumulated row-wise.
  auto accumulate_AT = [&](const Vector& coeff, Vector& into_x, Vector& into_L) {
    into_x.setZero();
    into_L.setZero();
    for (int r = 0; r < R; ++r) {
      const double cr = coeff[r];
      if (cr == 0.0) continue;
      const RowRef& ref = rows[r];
      switch (ref.kind) {
        case RowRef::plain:
          p.plain[r].a.add_to(into_x, cr);
          break;
        case RowRef::tight: {
          const auto& t = p.tight[ref.group];
          t.c.add_to(into_x, cr);
          for (size_t m = 0; m < t.d.size(); ++m)
            into_L[aux_offset[ref.group] + static_cast<int>(m)] += cr * t.d[m];
          break;
        }
        case RowRef::aux_plus: {
          const auto& t = p.tight[ref.group];
          t.mu[ref.slot].add_to(into_x, cr);
          into_L[aux_offset[ref.group] + ref.slot] -= cr;
          break;
        }
        case RowRef::aux_minus: {
          const auto& t = p.tight[ref.group];
          t.mu[ref.slot].add_to(into_x, -cr);
          into_L[aux_offset[ref.group] + ref.slot] -= cr;
          break;
        }
      }
    }
  };
  // A * (dx, dL) per row.
  auto row_apply = [&](int r, const Vector& dx, const Vector& dL) -> double {
    const RowRef& ref = rows[r];
    switch (ref.kind) {
      case RowRef::plain:
        return p.plain[r].a.dot(dx);
      case RowRef::tight: {
        const auto& t = p.tight[ref.group];
        double v = t.c.dot(dx);
        for (size_t m = 0; m < t.d.size(); ++m)
          v += t.d[m] * dL[aux_offset[ref.group] + static_cast<int>(m)];
        return v;
      }
      case RowRef::aux_plus: {
        const auto& t = p.tight[ref.group];
        return t.mu[ref.slot].dot(dx) - dL[aux_offset[ref.group] + ref.slot];
      }
      case RowRef::aux_minus: {
        const auto& t = p.tight[ref.group];
        return -t.mu[ref.slot].dot(dx) - dL[aux_offset[ref.group] + ref.slot];
      }
    }
    return 0.0;
  };

  Vector rx(n), rL(q), rhs_x(n), rhs_L(q);
  Matrix M_xx(n, n);
  Vector r_p(R), w(R), pi(R);

  // Factorization state shared between the predictor and corrector solves.
  Eigen::LDLT<Matrix> ldlt;
  std::vector<Vector> dDinv_cache;
  std::vector<double> denom_cache;
  std::vector<Matrix> Ug_cache;

  // Newton solve of the reduced normal equations for a given per-row weight w
  // and rhs coefficient pi: returns (dx, dL).
  auto newton_solve = [&](const Vector& weights, const Vector& coeff, Vector& dx, Vector& dL,
                          bool refactor) {
    accumulate_AT(coeff, rhs_x, rhs_L);
    rhs_x += rx;  // rx, rL hold -r_d contributions assembled by the caller
    rhs_L += rL;

    if (refactor) {
      M_xx = p.H;
      Ug_cache.assign(G, Matrix());
      dDinv_cache.assign(G, Vector());
      denom_cache.assign(G, 0.0);
      for (int r = 0; r < P; ++r) {
        const double wr = weights[r];
        const auto& a = p.plain[r].a.nz;
        for (const auto& [i, vi] : a)
          for (const auto& [j, vj] : a) M_xx(i, j) += wr * vi * vj;
      }
      for (int g = 0; g < G; ++g) {
        const auto& t = p.tight[g];
        const int S = static_cast<int>(t.d.size());
        const double wT = weights[P + g];
        for (const auto& [i, vi] : t.c.nz)
          for (const auto& [j, vj] : t.c.nz) M_xx(i, j) += wT * vi * vj;
        Matrix U = Matrix::Zero(n, S);
        Vector D(S);
        for (int m = 0; m < S; ++m) {
          const double wp = weights[aux_row_start[g] + 2 * m];
          const double wm = weights[aux_row_start[g] + 2 * m + 1];
          const auto& mu = t.mu[m].nz;
          const double wsum = wp + wm;
          for (const auto& [i, vi] : mu)
            for (const auto& [j, vj] : mu) M_xx(i, j) += wsum * vi * vj;
          for (const auto& [i, vi] : mu) U(i, m) -= (wp - wm) * vi;
          for (const auto& [i, vi] : t.c.nz) U(i, m) += wT * t.d[m] * vi;
          D[m] = p.aux_reg + wsum;
        }
        // Schur elimination of the group block D + wT * d d'.
        Vector Dinv = D.cwiseInverse();
        Vector dvec = Eigen::Map<const Vector>(t.d.data(), S);
        Vector Dinv_d = Dinv.cwiseProduct(dvec);
        const double denom = 1.0 + wT * dvec.dot(Dinv_d);
        // M_xx -= U * Ginv * U' with Ginv = Dinv - (wT/denom) Dinv_d Dinv_d'.
        Matrix UDinv = U * Dinv.asDiagonal();
        M_xx.noalias() -= UDinv * U.transpose();
        Vector UDd = U * Dinv_d;
        M_xx.noalias() += (wT / denom) * (UDd * UDd.transpose());
        Ug_cache[g] = std::move(U);
        dDinv_cache[g] = std::move(Dinv);
        denom_cache[g] = denom;
      }
      M_xx = symmetrize(M_xx);
      double delta = 1e-13 * (1.0 + M_xx.cwiseAbs().maxCoeff());
      M_xx.diagonal().array() += delta;
      ldlt.compute(M_xx);
      for (int bump = 0; bump < 6 && ldlt.info() != Eigen::Success; ++bump) {
        delta *= 100.0;
        M_xx.diagonal().array() += delta;
        ldlt.compute(M_xx);
      }
    }

    // Reduce rhs, solve core, back-substitute the group blocks.
    Vector rhs_red = rhs_x;
    std::vector<Vector> ginv_rL(G);
    for (int g = 0; g < G; ++g) {
      const auto& t = p.tight[g];
      const int S = static_cast<int>(t.d.size());
      const Vector rLg = rhs_L.segment(aux_offset[g], S);
      const Vector& Dinv = dDinv_cache[g];
      const double wT = weights[P + g];
      Vector dvec = Eigen::Map<const Vector>(t.d.data(), S);
      Vector Dinv_d = Dinv.cwiseProduct(dvec);
      Vector tmp = Dinv.cwiseProduct(rLg);
      tmp -= (wT * dvec.dot(tmp) / denom_cache[g]) * Dinv_d;
      ginv_rL[g] = tmp;
      rhs_red.noalias() -= Ug_cache[g] * tmp;
    }
    dx = ldlt.solve(rhs_red);
    dL.resize(q);
    for (int g = 0; g < G; ++g) {
      const auto& t = p.tight[g];
      const int S = static_cast<int>(t.d.size());
      const Vector rLg = rhs_L.segment(aux_offset[g], S) - Ug_cache[g].transpose() * dx;
      const Vector& Dinv = dDinv_cache[g];
      const double wT = weights[P + g];
      Vector dvec = Eigen::Map<const Vector>(t.d.data(), S);
      Vector Dinv_d = Dinv.cwiseProduct(dvec);
      Vector tmp = Dinv.cwiseProduct(rLg);
      tmp -= (wT * dvec.dot(tmp) / denom_cache[g]) * Dinv_d;
      dL.segment(aux_offset[g], S) = tmp;
    }
  };

  Vector dx(n), dL(q), dx_aff(n), dL_aff(q);
  Vector ds(R), dl(R), ds_aff(R), dl_aff(R);

  for (int iter = 0; iter < tol.qp_max_iters; ++iter) {
    out.iterations = iter + 1;
    // Residuals.
    Vector lam_coeff = lambda;
    accumulate_AT(lam_coeff, rx, rL);  // rx, rL = A' lambda
    Vector grad_x = p.H * x + p.g + rx;
    Vector grad_L = p.aux_reg * L + rL;
    for (int r = 0; r < R; ++r) r_p[r] = row_value(r) + s[r] - b[r];
    const double mu = s.dot(lambda) / R;

    const double rd_norm = std::max(grad_x.cwiseAbs().maxCoeff(),
                                    q > 0 ? grad_L.cwiseAbs().maxCoeff() : 0.0);
    const double rp_norm = r_p.cwiseAbs().maxCoeff();
    const double stat_scale =
        g_scale + rx.cwiseAbs().maxCoeff() + (q > 0 ? rL.cwiseAbs().maxCoeff() : 0.0);
    if (rd_norm <= 1e-10 * stat_scale && rp_norm <= 1e-10 * b_scale && mu <= tol.qp_mu) {
      out.status = QpStatus::optimal;
      break;
    }

    w = (lambda.array() / s.array()).cwiseMax(1e-16).cwiseMin(1e16).matrix();

    // Predictor. rx/rL carry -r_d; pi carries S^{-1} r_c - W r_p per row.
    rx = -grad_x;
    rL = -grad_L;
    for (int r = 0; r < R; ++r) pi[r] = lambda[r] - w[r] * r_p[r];
    newton_solve(w, pi, dx_aff, dL_aff, /*refactor=*/true);
    for (int r = 0; r < R; ++r) ds_aff[r] = -r_p[r] - row_apply(r, dx_aff, dL_aff);
    for (int r = 0; r < R; ++r) dl_aff[r] = -lambda[r] - w[r] * ds_aff[r];

    const double ap_aff = max_positive_step(s, ds_aff);
    const double ad_aff = max_positive_step(lambda, dl_aff);
    const double mu_aff = (s + ap_aff * ds_aff).dot(lambda + ad_aff * dl_aff) / R;
    const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 1e-8, 0.99);

    // Corrector (same factorization).
    for (int r = 0; r < R; ++r) {
      const double t_r = lambda[r] - sigma * mu / s[r] + ds_aff[r] * dl_aff[r] / s[r];
      pi[r] = t_r - w[r] * r_p[r];
    }
    newton_solve(w, pi, dx, dL, /*refactor=*/false);
    for (int r = 0; r < R; ++r) ds[r] = -r_p[r] - row_apply(r, dx, dL);
    for (int r = 0; r < R; ++r) {
      const double t_r = lambda[r] - sigma * mu / s[r] + ds_aff[r] * dl_aff[r] / s[r];
      dl[r] = -t_r - w[r] * ds[r];
    }

    const double boundary = mu > 1e-6 ? 0.995 : 0.9995;
    const double ap = std::min(1.0, boundary * max_positive_step(s, ds));
    const double ad = std::min(1.0, boundary * max_positive_step(lambda, dl));
    x += ap * dx;
    L += ap * dL;
    s += ap * ds;
    lambda += ad * dl;

    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > tol.qp_unbounded_scale * b_scale) break;
  }

  out.x = x;
  out.aux.resize(G);
  for (int g = 0; g < G; ++g)
    out.aux[g] = L.segment(aux_offset[g], static_cast<int>(p.tight[g].d.size()));
  out.objective = 0.5 * x.dot(p.H * x) + p.g.dot(x);

  // Final true KKT residuals.
  Vector lam_coeff = lambda;
  accumulate_AT(lam_coeff, rx, rL);
  const double stat = std::max((p.H * x + p.g + rx).cwiseAbs().maxCoeff(),
                               q > 0 ? (p.aux_reg * L + rL).cwiseAbs().maxCoeff() : 0.0);
  double prim = 0.0, comp = 0.0;
  for (int r = 0; r < R; ++r) {
    const double sl = b[r] - row_value(r);
    prim = std::max(prim, -sl);
    comp = std::max(comp, std::abs(lambda[r] * sl));
  }
  out.kkt_residual = std::max({stat, prim, comp});
  if (out.status == QpStatus::optimal && out.kkt_residual > tol.qp_kkt * b_scale)
    out.status = QpStatus::max_iterations;
  return out;
}

}  // namespace aoidmpc
