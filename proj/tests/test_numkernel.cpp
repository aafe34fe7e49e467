// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Numerical-kernel tests. Every nontrivial expected value is computed by an
// independent oracle implemented in this file:
//   - QP:      projected gradient with Dykstra projection onto the halfspaces
//   - support: vertex enumeration over all halfspace triples (3-var polytopes)
//   - Lyapunov: plain fixed-point iteration P <- A'PA + Q
// The structured solver is cross-checked against the dense solver on flattened
// instances, so neither path is ever the only route to an answer.

#include <cmath>
#include <vector>

#include "aoidmpc/linalg.hpp"
#include "aoidmpc/lyapunov.hpp"
#include "aoidmpc/polytope.hpp"
#include "aoidmpc/qp.hpp"
#include "aoidmpc/rng.hpp"
#include "aoidmpc/structured_qp.hpp"
#include "doctest.h"

using namespace aoidmpc;

namespace {

Matrix random_matrix(SeededRng& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * (2.0 * rng.uniform() - 1.0);
  return m;
}

Vector random_vector(SeededRng& rng, int n, double scale = 1.0) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * (2.0 * rng.uniform() - 1.0);
  return v;
}

// Dykstra's alternating-projection scheme onto the intersection of halfspaces.
Vector dykstra_project(const Vector& y, const Matrix& C, const Vector& b) {
  const int m = static_cast<int>(C.rows());
  if (m == 0) return y;
  Vector x = y;
  std::vector<Vector> corrections(m, Vector::Zero(y.size()));
  for (int cycle = 0; cycle < 20000; ++cycle) {
    double moved = 0.0;
    for (int i = 0; i < m; ++i) {
      const Vector z = x + corrections[i];
      const double viol = C.row(i).dot(z) - b[i];
      Vector x_new = z;
      if (viol > 0.0) x_new -= (viol / C.row(i).squaredNorm()) * C.row(i).transpose();
      corrections[i] = z - x_new;
      moved = std::max(moved, (x_new - x).cwiseAbs().maxCoeff());
      x = x_new;
    }
    const double worst = ((C * x - b).cwiseMax(0.0)).maxCoeff();
    if (worst <= 1e-13 && moved <= 1e-14) break;
  }
  return x;
}

// Projected-gradient oracle for strictly convex QPs.
Vector projected_gradient_oracle(const Matrix& H, const Vector& g, const Matrix& C,
                                 const Vector& b) {
  const double lip = Eigen::SelfAdjointEigenSolver<Matrix>(H, Eigen::EigenvaluesOnly)
                         .eigenvalues()
                         .maxCoeff();
  const double alpha = 1.0 / lip;
  Vector x = Vector::Zero(g.size());
  for (int iter = 0; iter < 200000; ++iter) {
    const Vector x_new = dykstra_project(x - alpha * (H * x + g), C, b);
    if ((x_new - x).cwiseAbs().maxCoeff() <= 1e-13) return x_new;
    x = x_new;
  }
  return x;
}

// Vertex-enumeration support oracle: solve every halfspace triple, keep
// feasible intersection points, maximize over them.
double vertex_support_oracle(const Matrix& C, const Vector& b, const Vector& d) {
  REQUIRE(C.cols() == 3);
  const int m = static_cast<int>(C.rows());
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      for (int k = j + 1; k < m; ++k) {
        Matrix A(3, 3);
        A.row(0) = C.row(i);
        A.row(1) = C.row(j);
        A.row(2) = C.row(k);
        Eigen::FullPivLU<Matrix> lu(A);
        if (!lu.isInvertible()) continue;
        Vector rhs(3);
        rhs << b[i], b[j], b[k];
        const Vector v = lu.solve(rhs);
        if (((C * v - b).array() <= 1e-9).all()) best = std::max(best, d.dot(v));
      }
  REQUIRE(std::isfinite(best));
  return best;
}

// Plain fixed-point Lyapunov oracle.
Matrix lyapunov_iteration_oracle(const Matrix& A, const Matrix& Q) {
  Matrix P = Q;
  for (int iter = 0; iter < 200000; ++iter) {
    const Matrix P_new = A.transpose() * P * A + Q;
    if ((P_new - P).cwiseAbs().maxCoeff() <= 1e-15 * (1.0 + P.cwiseAbs().maxCoeff())) return P_new;
    P = P_new;
  }
  return P;
}

QpProblem make_qp(const Matrix& H, const Vector& g, const Matrix& Ci, const Vector& bi) {
  QpProblem p;
  p.H = H;
  p.g = g;
  p.C_ineq = Ci;
  p.b_ineq = bi;
  p.C_eq = Matrix::Zero(0, g.size());
  p.b_eq = Vector::Zero(0);
  return p;
}

}  // namespace

TEST_CASE("qp: active scalar bound") {
  // min u^2 s.t. u >= 1  ->  u = 1, objective 1.
  Matrix H(1, 1), C(1, 1);
  H << 2.0;
  C << -1.0;
  Vector g = Vector::Zero(1), b(1);
  b << -1.0;
  const QpSolution sol = solve_qp(make_qp(H, g, C, b));
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(std::abs(sol.x[0] - 1.0) <= 1e-8);
  CHECK(std::abs(sol.objective - 1.0) <= 1e-8);
  CHECK(sol.kkt_stationarity <= 1e-8);
  CHECK(sol.kkt_primal <= 1e-8);
}

TEST_CASE("qp: unconstrained PSD minimum is the origin") {
  Matrix H = 2.0 * Matrix::Identity(3, 3);
  const QpSolution sol = solve_qp(make_qp(H, Vector::Zero(3), Matrix::Zero(0, 3), Vector::Zero(0)));
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.x.cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(std::abs(sol.objective) <= 1e-12);
}

TEST_CASE("qp: 200 random strictly convex instances match projected-gradient oracle") {
  SeededRng rng(0xABCD1234u);
  for (int instance = 0; instance < 200; ++instance) {
    const int n = 10, m = 5;
    const Matrix R = random_matrix(rng, n, n);
    const Matrix H = R.transpose() * R + Matrix::Identity(n, n);
    const Vector g = random_vector(rng, n, 2.0);
    const Matrix C = random_matrix(rng, m, n);
    const Vector x_feas = random_vector(rng, n);
    Vector b = C * x_feas;
    for (int i = 0; i < m; ++i) b[i] += 0.1 + rng.uniform();

    const QpSolution sol = solve_qp(make_qp(H, g, C, b));
    REQUIRE(sol.status == QpStatus::optimal);
    CHECK(sol.kkt_stationarity <= 1e-8 * (1.0 + g.cwiseAbs().maxCoeff()));
    CHECK(sol.kkt_primal <= 1e-8);
    CHECK(sol.kkt_dual <= 1e-8);
    CHECK(sol.kkt_complementarity <= 1e-6);

    const Vector oracle = projected_gradient_oracle(H, g, C, b);
    CHECK((sol.x - oracle).cwiseAbs().maxCoeff() <= 1e-6);
    const double obj_oracle = 0.5 * oracle.dot(H * oracle) + g.dot(oracle);
    CHECK(std::abs(sol.objective - obj_oracle) <= 1e-6 * (1.0 + std::abs(obj_oracle)));
  }
}

TEST_CASE("qp: infeasibility detected exactly when phase-1 optimum is positive") {
  SeededRng rng(0x5151AAu);
  for (int instance = 0; instance < 50; ++instance) {
    const int n = 4;
    const Matrix R = random_matrix(rng, n, n);
    const Matrix H = R.transpose() * R + Matrix::Identity(n, n);
    const Vector g = random_vector(rng, n);
    Matrix C = random_matrix(rng, 6, n);
    const Vector x_feas = random_vector(rng, n);
    Vector b = C * x_feas;
    for (int i = 0; i < 6; ++i) b[i] += 0.05 + rng.uniform();

    // Feasible twin.
    const QpSolution feas = solve_qp(make_qp(H, g, C, b));
    CHECK(feas.status == QpStatus::optimal);

    // Infeasible twin: append a halfspace contradicting row 0 by a known gap.
    const double gap = 0.5 + rng.uniform();
    Matrix C2(7, n);
    C2.topRows(6) = C;
    C2.row(6) = -C.row(0);
    Vector b2(7);
    b2.head(6) = b;
    b2[6] = -b[0] - gap;
    const QpSolution infeas = solve_qp(make_qp(H, g, C2, b2));
    CHECK(infeas.status == QpStatus::infeasible);
    CHECK(infeas.infeasibility_certificate > 0.0);
    // Minimal total violation of {r0 <= b0, r0 >= b0 + gap} is exactly gap.
    CHECK(infeas.infeasibility_certificate >= 0.5 * gap);
  }
}

TEST_CASE("qp: equality constraints via kernel elimination") {
  // min |x|^2 s.t. sum(x) = 3 -> x = (1,1,1).
  QpProblem p;
  p.H = 2.0 * Matrix::Identity(3, 3);
  p.g = Vector::Zero(3);
  p.C_ineq = Matrix::Zero(0, 3);
  p.b_ineq = Vector::Zero(0);
  p.C_eq = Matrix::Ones(1, 3);
  p.b_eq = Vector::Constant(1, 3.0);
  QpSolution sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK((sol.x - Vector::Ones(3)).cwiseAbs().maxCoeff() <= 1e-8);

  // Adding x0 <= 0.5 moves mass to the free coordinates: x = (0.5, 1.25, 1.25).
  p.C_ineq = Matrix::Zero(1, 3);
  p.C_ineq(0, 0) = 1.0;
  p.b_ineq = Vector::Constant(1, 0.5);
  sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::optimal);
  Vector expect(3);
  expect << 0.5, 1.25, 1.25;
  CHECK((sol.x - expect).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("qp: rejects dimension mismatch and non-finite input") {
  Matrix H(2, 2);
  H.setIdentity();
  QpProblem p = make_qp(H, Vector::Zero(3), Matrix::Zero(0, 3), Vector::Zero(0));
  CHECK_THROWS_AS(solve_qp(p), std::invalid_argument);
  QpProblem p2 = make_qp(H, Vector::Zero(2), Matrix::Zero(0, 2), Vector::Zero(0));
  p2.g[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(solve_qp(p2), std::invalid_argument);
}

TEST_CASE("support: box closed forms") {
  const Polytope box = make_box(Vector::Zero(2), Vector::Ones(2));
  Vector d(2);
  d << 1.0, 1.0;
  CHECK(support_function(box, d) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(support_function(box, Vector::Zero(2)) == doctest::Approx(0.0));
  // Closed form agrees with the LP route on the same geometry.
  Polytope general;
  general.C = box.C;
  general.b = box.b;
  CHECK(std::abs(support_function(general, d) - 2.0) <= 1e-9);
}

TEST_CASE("support: random polytopes match vertex-enumeration oracle") {
  SeededRng rng(0x770e11u);
  for (int instance = 0; instance < 30; ++instance) {
    // Bounded by construction: a box plus two random cuts (8 halfspaces).
    const Polytope box = make_box(random_vector(rng, 3, 0.5), Vector::Ones(3));
    Polytope poly;
    poly.C = Matrix(8, 3);
    poly.b = Vector(8);
    poly.C.topRows(6) = box.C;
    poly.b.head(6) = box.b;
    for (int r = 6; r < 8; ++r) {
      const Vector c = random_vector(rng, 3);
      poly.C.row(r) = c.transpose();
      // Keep the center feasible so the polytope stays nonempty.
      poly.b[r] = c.dot(box.box->center) + 0.2 + rng.uniform();
    }
    for (int k = 0; k < 5; ++k) {
      const Vector d = random_vector(rng, 3, 2.0);
      const double lp = support_function(poly, d);
      const double oracle = vertex_support_oracle(poly.C, poly.b, d);
      CHECK(std::abs(lp - oracle) <= 1e-9 * (1.0 + std::abs(oracle)));
    }
  }
}

TEST_CASE("support: sublinearity on random polytopes") {
  SeededRng rng(0x2468ACEu);
  const Polytope box = make_box(Vector::Zero(3), Vector::Ones(3));
  Polytope poly;
  poly.C = box.C;
  poly.b = box.b;
  for (int k = 0; k < 50; ++k) {
    const Vector d1 = random_vector(rng, 3, 2.0);
    const Vector d2 = random_vector(rng, 3, 2.0);
    const double h1 = support_function(poly, d1);
    const double h2 = support_function(poly, d2);
    const double h12 = support_function(poly, d1 + d2);
    CHECK(h12 <= h1 + h2 + 1e-9);
    const double lam = 2.0 * rng.uniform();
    CHECK(std::abs(support_function(poly, (lam * d1).eval()) - lam * h1) <= 1e-9 * (1.0 + lam * std::abs(h1)));
  }
}

TEST_CASE("support: unbounded direction is reported") {
  // A slab is unbounded along its free axis.
  Polytope slab;
  slab.C = Matrix(2, 2);
  slab.C << 1.0, 0.0, -1.0, 0.0;
  slab.b = Vector::Ones(2);
  Vector d(2);
  d << 0.0, 1.0;
  CHECK_THROWS_WITH_AS(support_function(slab, d), "unbounded support", std::runtime_error);
  d << 1.0, 0.0;
  CHECK(support_function(slab, d) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("polytope: nonempty check via phase-1") {
  Polytope p;
  p.C = Matrix(2, 1);
  p.C << 1.0, -1.0;
  p.b = Vector(2);
  p.b << 1.0, -2.0;  // x <= 1 and x >= 2
  CHECK_FALSE(is_nonempty(p));
  p.b << 1.0, 0.0;  // 0 <= x <= 1
  CHECK(is_nonempty(p));
}

TEST_CASE("lyapunov: trivial closed forms") {
  const Matrix P1 = solve_discrete_lyapunov(Matrix::Zero(3, 3), Matrix::Identity(3, 3));
  CHECK((P1 - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-12);

  Matrix a(1, 1), q(1, 1);
  a << 0.5;
  q << 1.0;
  const Matrix P2 = solve_discrete_lyapunov(a, q);
  CHECK(std::abs(P2(0, 0) - 4.0 / 3.0) <= 1e-12);
}

TEST_CASE("lyapunov: random stable systems match plain-iteration oracle") {
  SeededRng rng(0xFEEDF00Du);
  for (int instance = 0; instance < 20; ++instance) {
    const int n = 2 + static_cast<int>(rng.uniform() * 5);
    Matrix A = random_matrix(rng, n, n);
    A *= 0.9 / std::max(spectral_radius(A), 1e-6);
    const Matrix Rq = random_matrix(rng, n, n);
    const Matrix Q = Rq.transpose() * Rq;

    const Matrix P = solve_discrete_lyapunov(A, Q);
    // Contract: symmetry, residual bound, PSD.
    CHECK((P - P.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + P.cwiseAbs().maxCoeff()));
    const double resid = (A.transpose() * P * A - P + Q).norm();
    CHECK(resid <= 1e-9 * (1.0 + Q.norm()));
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(P, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() >=
          -1e-10);
    const Matrix oracle = lyapunov_iteration_oracle(A, Q);
    CHECK((P - oracle).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + oracle.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("lyapunov: non-Schur dynamics rejected by name") {
  CHECK_THROWS_WITH_AS(solve_discrete_lyapunov(Matrix::Identity(2, 2), Matrix::Identity(2, 2)),
                       "terminal dynamics not Schur-stable", std::runtime_error);
}

TEST_CASE("psd_shift: projects indefinite forms onto the PSD cone") {
  Matrix M(2, 2);
  M << 1.0, 0.0, 0.0, -2.0;
  const double shift = psd_shift(M);
  CHECK(shift == doctest::Approx(2.0 + 1e-9));
  const Matrix shifted = M + shift * Matrix::Identity(2, 2);
  CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(shifted, Eigen::EigenvaluesOnly)
            .eigenvalues()
            .minCoeff() >= 0.0);
}

TEST_CASE("rng: deterministic, stream-separated, correct Bernoulli edge cases") {
  SeededRng a(42), b(42), c(43);
  bool diverged = false;
  for (int i = 0; i < 1000; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    if (va != c.next_u64()) diverged = true;
  }
  CHECK(diverged);

  SeededRng d1 = SeededRng::derive(7, 1), d2 = SeededRng::derive(7, 2);
  CHECK(d1.next_u64() != d2.next_u64());

  SeededRng e(99);
  for (int i = 0; i < 100; ++i) {
    CHECK(e.bernoulli(1.0));
    CHECK_FALSE(e.bernoulli(0.0));
    const double u = e.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("structured solver matches dense solver on flattened instances") {
  SeededRng rng(0xC0FFEEu);
  for (int instance = 0; instance < 40; ++instance) {
    StructuredQp p;
    p.n_core = 6;
    const Matrix R = random_matrix(rng, 6, 6);
    p.H = R.transpose() * R + Matrix::Identity(6, 6);
    p.g = random_vector(rng, 6, 2.0);
    p.aux_reg = 1e-9;

    auto random_sparse = [&](int max_nnz) {
      SparseVec v;
      const int nnz = 1 + static_cast<int>(rng.uniform() * max_nnz);
      for (int k = 0; k < nnz; ++k)
        v.nz.emplace_back(static_cast<int>(rng.uniform() * 6), 2.0 * rng.uniform() - 1.0);
      return v;
    };

    for (int r = 0; r < 5; ++r) {
      StructuredQp::PlainRow row;
      row.a = random_sparse(3);
      row.b = 0.5 + rng.uniform();  // origin stays feasible
      p.plain.push_back(row);
    }
    for (int t = 0; t < 4; ++t) {
      StructuredQp::TightRow row;
      row.c = random_sparse(4);
      const int slots = 1 + static_cast<int>(rng.uniform() * 3);
      double bound_at_origin = 0.0;
      for (int m = 0; m < slots; ++m) {
        row.d.push_back(0.1 + rng.uniform());
        row.mu.push_back(random_sparse(3));
        row.mu0.push_back(2.0 * rng.uniform() - 1.0);
        bound_at_origin += row.d.back() * std::abs(row.mu0.back());
      }
      row.b = bound_at_origin + 0.5 + rng.uniform();  // feasible at the origin
      p.tight.push_back(row);
    }

    const StructuredSolution fast = solve_structured_qp(p);
    REQUIRE(fast.status == QpStatus::optimal);
    CHECK(fast.kkt_residual <= 1e-7);

    const QpSolution dense = solve_qp(flatten_structured_qp(p));
    REQUIRE(dense.status == QpStatus::optimal);
    CHECK((fast.x - dense.x.head(6)).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(std::abs(fast.objective -
                   (0.5 * dense.x.head(6).dot(p.H * dense.x.head(6)) + p.g.dot(dense.x.head(6)))) <=
          1e-6 * (1.0 + std::abs(fast.objective)));
  }
}
