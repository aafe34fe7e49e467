// Copyright 2026
// SPDX-License-Identifier: Apache-2.0

#include "aoidmpc/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace aoidmpc {

namespace {

constexpr double kCoeffTiny = 1e-14;   // drop negligible sparse coefficients
constexpr double kPinnedWidth = 1e-12; // band width treated as an equality

Vector to_vector(const std::vector<double>& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

// Relative-coordinate map for the terminal cost: stacks z = x_front - x_self
// over the delay+1 trailing prediction blocks.
Matrix terminal_relative_map(const TerminalIngredients& t, int nx) {
  const int blocks = t.delay + 1;
  Matrix S = Matrix::Zero(blocks * t.nz, blocks * nx);
  for (int blk = 0; blk < blocks; ++blk) {
    S.block(blk * t.nz, blk * nx, t.nz, t.nz) = -Matrix::Identity(t.nz, t.nz);
    S.block(blk * t.nz, blk * nx + t.nz, t.nz, t.nz) = Matrix::Identity(t.nz, t.nz);
  }
  return S;
}

// Nominal cost of a fixed plan: l=0 stage included, deviations at zero.
double nominal_plan_value(const PredictionModel& pred, const Vector& xhat,
                          const Vector& un, const Vector& plan, const Matrix& Qx,
                          const Matrix& Qu, const TerminalIngredients* terminal) {
  const int H = pred.H;
  const int nx = pred.nx;
  const Vector states = pred.A_t * xhat + pred.B_t * plan + pred.B1_t * un;
  double value = xhat.dot(Qx * xhat);
  for (int l = 1; l < H; ++l) {
    const Vector x = states.segment((l - 1) * nx, nx);
    value += x.dot(Qx * x);
  }
  for (int l = 0; l < H; ++l) {
    Vector u(2);
    u << plan[l], un[l];
    value += u.dot(Qu * u);
  }
  if (terminal != nullptr) {
    const int blocks = terminal->delay + 1;
    Vector xi(blocks * nx);
    for (int t = 0; t < blocks; ++t) {
      const int l = H - terminal->delay + t;  // block l in 1..H
      xi.segment(t * nx, nx) =
          (l == 0) ? xhat : states.segment((l - 1) * nx, nx);
    }
    const Matrix S = terminal_relative_map(*terminal, nx);
    const Vector z = S * xi;
    value += z.dot(terminal->P_rel * z);
  }
  return value;
}

}  // namespace

InputBand global_input_band(double input_bound, int horizon) {
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  if (input_bound < 0.0)
    throw std::invalid_argument("input bound must be nonnegative");
  InputBand band;
  band.lo = Vector::Constant(horizon, -input_bound);
  band.hi = Vector::Constant(horizon, input_bound);
  return band;
}

InputBand shift_input_constraint(const std::vector<double>& prev_plan,
                                 const std::vector<double>& prev_envelope,
                                 double input_bound) {
  const int H = static_cast<int>(prev_plan.size());
  if (H < 1) throw std::invalid_argument("previous plan must not be empty");
  if (static_cast<int>(prev_envelope.size()) != H - 1) {
    throw std::invalid_argument("envelope must cover the plan slots after the first");
  }
  InputBand band = global_input_band(input_bound, H);
  for (int m = 0; m + 1 < H; ++m) {
    const double center = prev_plan[static_cast<size_t>(m + 1)];
    const double gamma = prev_envelope[static_cast<size_t>(m)];
    if (gamma < 0.0) throw std::invalid_argument("envelope entries must be nonnegative");
    band.lo[m] = std::max(-input_bound, center - gamma);
    band.hi[m] = std::min(input_bound, center + gamma);
  }
  return band;
}

std::vector<double> compute_envelope(const Matrix& feedback,
                                     const Vector& dev_halfwidth) {
  const int H = static_cast<int>(feedback.rows());
  if (H < 1) throw std::invalid_argument("feedback must have at least one row");
  if (feedback.cols() != dev_halfwidth.size()) {
    throw std::invalid_argument("deviation halfwidths must match the feedback window");
  }
  std::vector<double> gamma(static_cast<size_t>(H - 1), 0.0);
  for (int l = 1; l < H; ++l) {
    double g = 0.0;
    for (Eigen::Index m = 0; m < feedback.cols(); ++m) {
      g += dev_halfwidth[m] * std::abs(feedback(l, m));
    }
    gamma[static_cast<size_t>(l - 1)] = g;
  }
  return gamma;
}

std::vector<double> shift_policy(const std::vector<double>& prev_plan,
                                 const Matrix& prev_feedback,
                                 const Vector& learned_deviation,
                                 double terminal_input) {
  const int H = static_cast<int>(prev_plan.size());
  if (H < 1) throw std::invalid_argument("previous plan must not be empty");
  if (prev_feedback.rows() != H ||
      prev_feedback.cols() != learned_deviation.size()) {
    throw std::invalid_argument("learned deviations must match the feedback window");
  }
  std::vector<double> plan(static_cast<size_t>(H), 0.0);
  for (int r = 0; r + 1 < H; ++r) {
    plan[static_cast<size_t>(r)] =
        prev_plan[static_cast<size_t>(r + 1)] +
        prev_feedback.row(r + 1).dot(learned_deviation);
  }
  plan[static_cast<size_t>(H - 1)] = terminal_input;
  return plan;
}

NeighborData derive_neighbor_data(const ControllerMessage& msg, int now,
                                  int horizon, const Matrix& A_nbr,
                                  const Matrix& B_nbr, double neighbor_bound) {
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  const int age = now - msg.step;
  if (age < 1) {
    throw std::invalid_argument("broadcast must predate the current step");
  }
  if (static_cast<int>(msg.plan.size()) != horizon ||
      static_cast<int>(msg.envelope.size()) != horizon - 1) {
    throw std::invalid_argument("broadcast plan and envelope must cover the horizon");
  }
  if (age > horizon) throw std::runtime_error("stale neighbor envelope");

  NeighborData nbr;
  nbr.age = age;
  std::vector<Vector> applied;
  applied.reserve(static_cast<size_t>(age));
  for (int r = 0; r < age; ++r) {
    Vector u(1);
    u << msg.plan[static_cast<size_t>(r)];
    applied.push_back(u);
  }
  nbr.est_state = estimate_neighbor_state(msg.state, A_nbr, B_nbr, applied, age);
  nbr.nominal.assign(static_cast<size_t>(horizon), 0.0);
  for (int r = 0; r < horizon; ++r) {
    if (age + r < horizon) nbr.nominal[static_cast<size_t>(r)] = msg.plan[static_cast<size_t>(age + r)];
  }
  const int window = age - 1 + horizon;
  nbr.dev_halfwidth = Vector::Zero(window);
  for (int m = 0; m < window; ++m) {
    // Window slot m is the absolute slot msg.step + 1 + m; the envelope
    // covers msg.step+1 .. msg.step+horizon-1, everything later is only
    // limited by the neighbor's global input bound.
    nbr.dev_halfwidth[m] =
        (m <= horizon - 2) ? msg.envelope[static_cast<size_t>(m)] : neighbor_bound;
  }
  return nbr;
}

AssembledQp assemble_robust_qp(const AugmentedModel& model,
                               const PredictionModel& pred,
                               const FeedbackMask& mask, const NeighborData& nbr,
                               const Vector& own_state, const InputBand& band,
                               const Matrix& Qx, const Matrix& Qu,
                               const TerminalIngredients* terminal) {
  const int H = pred.H;
  const int nx = pred.nx;
  if (model.nu() != 1 || model.nu_nbr() != 1) {
    throw std::invalid_argument(
        "robust program supports scalar own and neighbor inputs");
  }
  if (mask.horizon() != H) throw std::invalid_argument("mask horizon mismatch");
  const int W = mask.window();
  if (nbr.dev_halfwidth.size() != W) {
    throw std::invalid_argument("deviation halfwidths must match the mask window");
  }
  if (static_cast<int>(nbr.nominal.size()) != H) {
    throw std::invalid_argument("neighbor nominal plan must cover the horizon");
  }
  if (own_state.size() != model.self_nx ||
      nbr.est_state.size() != nx - model.self_nx) {
    throw std::invalid_argument("state dimension mismatch");
  }
  if (band.horizon() != H) throw std::invalid_argument("input band horizon mismatch");
  if (Qx.rows() != nx || Qx.cols() != nx || Qu.rows() != 2 || Qu.cols() != 2) {
    throw std::invalid_argument("stage weight dimension mismatch");
  }
  if (terminal != nullptr && H <= terminal->delay) {
    throw std::invalid_argument("horizon must exceed the terminal delay");
  }

  AssembledQp a;
  a.horizon = H;
  a.window = W;

  // Nominal-input slots pinned by a zero-width band are eliminated exactly.
  a.vmap.assign(static_cast<size_t>(H), -1);
  a.vfix.assign(static_cast<size_t>(H), 0.0);
  std::vector<int>& vmap = a.vmap;
  std::vector<double>& vfix = a.vfix;
  std::vector<bool> pinned(static_cast<size_t>(H), false);
  int n_free_v = 0;
  for (int n = 0; n < H; ++n) {
    if (band.hi[n] - band.lo[n] < kPinnedWidth) {
      pinned[static_cast<size_t>(n)] = true;
      vfix[static_cast<size_t>(n)] = 0.5 * (band.hi[n] + band.lo[n]);
    } else {
      vmap[static_cast<size_t>(n)] = n_free_v++;
    }
  }

  // Feedback entries become variables only where they can matter: the mask
  // admits them, the slot's deviation halfwidth is positive (a zero-width
  // deviation never excites the entry), and the own slot is not pinned (a
  // pinned realized input forces its feedback row to zero exactly).
  std::vector<std::vector<int>> fidx(
      static_cast<size_t>(H), std::vector<int>(static_cast<size_t>(W), -1));
  for (int n = 1; n < H; ++n) {
    if (pinned[static_cast<size_t>(n)]) continue;
    for (int m = 0; m < W; ++m) {
      if (!mask.free(n, m)) continue;
      if (nbr.dev_halfwidth[m] <= 0.0) continue;
      fidx[static_cast<size_t>(n)][static_cast<size_t>(m)] =
          n_free_v + static_cast<int>(a.free_entries.size());
      a.free_entries.emplace_back(n, m);
    }
  }
  const int ncore = n_free_v + static_cast<int>(a.free_entries.size());

  Vector xhat(nx);
  xhat << own_state, nbr.est_state;
  const Vector un = to_vector(nbr.nominal);
  // Fold the pinned nominal inputs into the constant drift.
  Vector vpin = Vector::Zero(H);
  for (int n = 0; n < H; ++n) {
    if (pinned[static_cast<size_t>(n)]) vpin[n] = vfix[static_cast<size_t>(n)];
  }
  const Vector c0 = pred.A_t * xhat + pred.B1_t * un + pred.B_t * vpin;

  StructuredQp& qp = a.qp;
  qp.n_core = ncore;
  qp.H = Matrix::Zero(ncore, ncore);
  qp.g = Vector::Zero(ncore);
  double cconst = xhat.dot(Qx * xhat);

  // Quadratic pieces routed through a reduced input map over the free slots.
  Matrix B_free = Matrix::Zero(H * nx, n_free_v);
  for (int n = 0; n < H; ++n) {
    const int j = vmap[static_cast<size_t>(n)];
    if (j >= 0) B_free.col(j) = pred.B_t.col(n);
  }
  auto add_quadratic = [&](const Matrix& weight, const Matrix& G, const Vector& c) {
    // (G v + c)' weight (G v + c) contributed to 0.5 v'Hv + g'v + const.
    qp.H.topLeftCorner(n_free_v, n_free_v) += 2.0 * G.transpose() * weight * G;
    qp.g.head(n_free_v) += 2.0 * G.transpose() * weight * c;
    cconst += c.dot(weight * c);
  };
  for (int l = 1; l < H; ++l) {
    add_quadratic(Qx, B_free.middleRows((l - 1) * nx, nx),
                  c0.segment((l - 1) * nx, nx));
  }
  const double qu_own = Qu(0, 0);
  const double qu_cross = Qu(0, 1) + Qu(1, 0);
  for (int l = 0; l < H; ++l) {
    const int j = vmap[static_cast<size_t>(l)];
    const double unl = un[l];
    if (j >= 0) {
      qp.H(j, j) += 2.0 * qu_own;
      qp.g[j] += qu_cross * unl;
    } else {
      const double vf = vfix[static_cast<size_t>(l)];
      cconst += qu_own * vf * vf + qu_cross * vf * unl;
    }
    cconst += Qu(1, 1) * unl * unl;
  }
  if (terminal != nullptr) {
    const int blocks = terminal->delay + 1;
    const Matrix S = terminal_relative_map(*terminal, nx);
    const Matrix P_full = S.transpose() * terminal->P_rel * S;
    Matrix G_xi = Matrix::Zero(blocks * nx, n_free_v);
    Vector c_xi = Vector::Zero(blocks * nx);
    for (int t = 0; t < blocks; ++t) {
      const int l = H - terminal->delay + t;
      G_xi.middleRows(t * nx, nx) = B_free.middleRows((l - 1) * nx, nx);
      c_xi.segment(t * nx, nx) = c0.segment((l - 1) * nx, nx);
    }
    add_quadratic(P_full, G_xi, c_xi);
  }
  qp.H = symmetrize(qp.H);
  a.cost_constant = cconst;

  const Matrix dimg = deviation_image(model, H, mask.age);

  // A functional w over the stacked states contributes one constraint row
  //   w' x_tilde <= rhs for every admissible deviation, tightened per window
  // slot by the envelope halfwidth times the worst response.
  auto add_state_row = [&](const Vector& wfull, double rhs) {
    const Vector coefv = pred.B_t.transpose() * wfull;  // per input slot
    double b = rhs - wfull.dot(c0);
    SparseVec core;
    for (int n = 0; n < H; ++n) {
      const int j = vmap[static_cast<size_t>(n)];
      if (j >= 0 && std::abs(coefv[n]) > kCoeffTiny) core.nz.emplace_back(j, coefv[n]);
    }
    StructuredQp::TightRow row;
    row.c = core;
    bool any_aux = false;
    for (int m = 0; m < W; ++m) {
      const double d = nbr.dev_halfwidth[m];
      if (d <= 0.0) continue;
      SparseVec mu;
      for (int n = 1; n < H; ++n) {
        const int j = fidx[static_cast<size_t>(n)][static_cast<size_t>(m)];
        if (j >= 0 && std::abs(coefv[n]) > kCoeffTiny) mu.nz.emplace_back(j, coefv[n]);
      }
      const double mu0 = wfull.dot(dimg.col(m));
      if (mu.nz.empty()) {
        b -= d * std::abs(mu0);  // constant worst case folds into the bound
        continue;
      }
      row.d.push_back(d);
      row.mu.push_back(mu);
      row.mu0.push_back(mu0);
      any_aux = true;
    }
    row.b = b;
    if (any_aux) {
      qp.tight.push_back(std::move(row));
    } else if (core.nz.empty()) {
      // Every decision coefficient vanished (fully pinned slots): the row is
      // the constant inequality 0 <= b.  Keep it only as a feasibility fact.
      const double roundoff = 1e-9 * (1.0 + std::abs(rhs) + std::abs(wfull.dot(c0)));
      if (b < -roundoff) a.constant_infeasible = true;
    } else {
      qp.plain.push_back(StructuredQp::PlainRow{core, b});
    }
  };

  if (model.coupled_state_set.num_rows() > 0) {
    if (model.coupled_state_set.dim() != nx) {
      throw std::invalid_argument("coupled state set dimension mismatch");
    }
    for (Eigen::Index r = 0; r < model.coupled_state_set.num_rows(); ++r) {
      for (int l = 1; l <= H; ++l) {
        Vector wfull = Vector::Zero(H * nx);
        wfull.segment((l - 1) * nx, nx) = model.coupled_state_set.C.row(r);
        add_state_row(wfull, model.coupled_state_set.b[r]);
      }
    }
  }
  if (terminal != nullptr) {
    const int nz = terminal->nz;
    for (Eigen::Index r = 0; r < terminal->set_rel.num_rows(); ++r) {
      const Vector crel = terminal->set_rel.C.row(r).transpose();
      Vector wfull = Vector::Zero(H * nx);
      for (int t = 0; t <= terminal->delay; ++t) {
        const int l = H - terminal->delay + t;
        const Vector ct = crel.segment(t * nz, nz);
        // z = x_front - x_self, with the own block stacked first.
        wfull.segment((l - 1) * nx, nz) -= ct;
        wfull.segment((l - 1) * nx + nz, nz) += ct;
      }
      add_state_row(wfull, terminal->set_rel.b[r]);
    }
  }

  // Own-input rows: realized input v_n + feedback must stay in the band.
  for (int n = 0; n < H; ++n) {
    std::vector<int> live;
    for (int m = 0; m < W; ++m) {
      if (nbr.dev_halfwidth[m] > 0.0 &&
          fidx[static_cast<size_t>(n)][static_cast<size_t>(m)] >= 0) {
        live.push_back(m);
      }
    }
    const int j = vmap[static_cast<size_t>(n)];
    const double base = (j >= 0) ? 0.0 : vfix[static_cast<size_t>(n)];
    for (int sign = 0; sign < 2; ++sign) {
      const double s = (sign == 0) ? 1.0 : -1.0;
      const double rhs = (sign == 0) ? band.hi[n] : -band.lo[n];
      SparseVec core;
      if (j >= 0) core.nz.emplace_back(j, s);
      const double b = rhs - s * base;
      if (live.empty()) {
        if (j >= 0) qp.plain.push_back(StructuredQp::PlainRow{core, b});
        continue;  // pinned slot with no feedback: satisfied identically
      }
      StructuredQp::TightRow row;
      row.c = core;
      row.b = b;
      for (int m : live) {
        SparseVec mu;
        mu.nz.emplace_back(fidx[static_cast<size_t>(n)][static_cast<size_t>(m)], 1.0);
        row.d.push_back(nbr.dev_halfwidth[m]);
        row.mu.push_back(mu);
        row.mu0.push_back(0.0);
      }
      qp.tight.push_back(std::move(row));
    }
  }

  return a;
}

RobustController::RobustController(RobustControllerConfig config, Tolerances tol)
    : config_(std::move(config)), tol_(tol) {
  if (config_.horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  if (config_.self.nu() != 1 || config_.neighbor.nu() != 1) {
    throw std::invalid_argument(
        "robust program supports scalar own and neighbor inputs");
  }
  if (config_.input_bound <= 0.0 || config_.neighbor_bound < 0.0) {
    throw std::invalid_argument("input bounds must be positive");
  }
  if (config_.terminal.has_value()) {
    if (config_.horizon <= config_.terminal->delay) {
      throw std::invalid_argument("horizon must exceed the terminal delay");
    }
    if (config_.self.nx() != config_.terminal->nz ||
        config_.neighbor.nx() != config_.terminal->nz) {
      throw std::invalid_argument(
          "terminal ingredients expect matching self and neighbor states");
    }
  }
  config_.Qx = symmetrize(config_.Qx);
  config_.Qu = symmetrize(config_.Qu);
  model_ = build_augmented_model(config_.self, {config_.neighbor},
                                 config_.coupled_state_set);
  pred_ = build_prediction(model_, config_.horizon);
  band_ = global_input_band(config_.input_bound, config_.horizon);
}

SolveResult RobustController::solve_step(int now, const Vector& own_state,
                                         const ControllerMessage& neighbor_msg,
                                         int age,
                                         const std::vector<int>& predicted_age) {
  const int H = config_.horizon;
  if (neighbor_msg.step + age != now) {
    throw std::invalid_argument("information age inconsistent with the broadcast step");
  }
  if (static_cast<int>(predicted_age.size()) != H - 1) {
    throw std::invalid_argument("predicted ages must cover slots 1..H-1");
  }
  NeighborData nbr =
      derive_neighbor_data(neighbor_msg, now, H, config_.neighbor.A,
                           config_.neighbor.B, config_.neighbor_bound);
  const FeedbackMask mask = build_feedback_mask(predicted_age, age, H);
  const TerminalIngredients* term =
      config_.terminal.has_value() ? &*config_.terminal : nullptr;
  AssembledQp aqp = assemble_robust_qp(model_, pred_, mask, nbr, own_state,
                                       band_, config_.Qx, config_.Qu, term);

  Vector xhat(model_.nx());
  xhat << own_state, nbr.est_state;

  Vector xcore;
  int iterations = 0;
  bool solved = false;
  bool infeasible = aqp.constant_infeasible;
  if (!infeasible) {
    StructuredSolution ssol = solve_structured_qp(aqp.qp, tol_);
    iterations = ssol.iterations;
    if (ssol.status == QpStatus::optimal) {
      xcore = ssol.x;
      solved = true;
    } else if (ssol.status == QpStatus::infeasible) {
      infeasible = true;
    } else {
      const QpProblem flat = flatten_structured_qp(aqp.qp);
      const QpSolution dsol = solve_qp(flat, tol_);
      if (dsol.status == QpStatus::optimal) {
        xcore = dsol.x.head(aqp.qp.n_core);
        solved = true;
      } else if (dsol.status == QpStatus::infeasible) {
        infeasible = true;
      } else {
        throw std::runtime_error("qp solver did not converge at step " +
                                 std::to_string(now));
      }
    }
  }

  SolveResult res;
  if (!solved && infeasible) {
    res = fallback_result(now, nbr, xhat);
  } else {
    res.fallback = false;
    res.status = QpStatus::optimal;
    res.qp_iterations = iterations;
    // Decode: reconstruct pinned slots and masked feedback entries.
    res.plan.assign(static_cast<size_t>(H), 0.0);
    int n_free_v = 0;
    for (int n = 0; n < H; ++n) {
      if (aqp.vmap[static_cast<size_t>(n)] >= 0) {
        res.plan[static_cast<size_t>(n)] = xcore[aqp.vmap[static_cast<size_t>(n)]];
        ++n_free_v;
      } else {
        res.plan[static_cast<size_t>(n)] = aqp.vfix[static_cast<size_t>(n)];
      }
    }
    res.feedback = Matrix::Zero(H, aqp.window);
    for (size_t f = 0; f < aqp.free_entries.size(); ++f) {
      const auto [n, m] = aqp.free_entries[f];
      res.feedback(n, m) = xcore[n_free_v + static_cast<int>(f)];
    }
    res.envelope = compute_envelope(res.feedback, nbr.dev_halfwidth);
    res.value = nominal_plan_value(pred_, xhat, to_vector(nbr.nominal),
                                   to_vector(res.plan), config_.Qx, config_.Qu,
                                   term);
  }

  // Bookkeeping for the next step: consistency band, fallback ingredients.
  band_ = shift_input_constraint(res.plan, res.envelope, config_.input_bound);
  prev_states_ = pred_.A_t * xhat + pred_.B_t * to_vector(res.plan) +
                 pred_.B1_t * to_vector(nbr.nominal);
  prev_nominal_ = nbr.nominal;
  prev_window_start_ = now - age + 1;
  prev_ = res;
  return res;
}

SolveResult RobustController::fallback_result(int now, const NeighborData& nbr,
                                              const Vector& xhat) {
  const int H = config_.horizon;
  if (!prev_.has_value()) {
    throw std::runtime_error("no feasible program at step " + std::to_string(now) +
                             " and no previous plan to shift");
  }
  const int prev_window = static_cast<int>(prev_->feedback.cols());
  const int prev_start = prev_window_start_;
  Vector learned = Vector::Zero(prev_window);
  for (int idx = 0; idx < prev_window; ++idx) {
    const int abs_slot = prev_start + idx;
    const int r_new = abs_slot - now;
    const int r_old = abs_slot - (now - 1);
    if (r_new >= 0 && r_new < H && r_old >= 0 && r_old < H) {
      learned[idx] = nbr.nominal[static_cast<size_t>(r_new)] -
                     prev_nominal_[static_cast<size_t>(r_old)];
    }
  }

  double terminal_input = 0.0;
  double terminal_radius = 0.0;
  if (config_.terminal.has_value()) {
    const TerminalIngredients& t = *config_.terminal;
    const int l = H - t.delay;  // predicted block holding x_{now+H-1-delay}
    const int nx = model_.nx();
    const Vector block = prev_states_.segment((l - 1) * nx, nx);
    const Vector z = block.segment(t.nz, t.nz) - block.head(t.nz);
    terminal_input = t.u_ff + t.K_rel.dot(z);
    terminal_radius = t.own_dev_radius;
  }
  terminal_input = std::clamp(terminal_input, -config_.input_bound,
                              config_.input_bound);

  SolveResult res;
  res.fallback = true;
  res.status = QpStatus::infeasible;
  res.qp_iterations = 0;
  res.plan = shift_policy(prev_->plan, prev_->feedback, learned, terminal_input);
  // Keep the published promises: the new plan must stay inside the band the
  // previous broadcast announced.
  for (int n = 0; n < H; ++n) {
    res.plan[static_cast<size_t>(n)] =
        std::clamp(res.plan[static_cast<size_t>(n)], band_.lo[n], band_.hi[n]);
  }
  // Shift the previous feedback one step: row r now answers for slot now+r,
  // which the previous solution handled in row r+1; window columns keep
  // their absolute slots (the window start is unchanged when no fresh
  // broadcast arrived, and deviations before the window are already known).
  const int W = nbr.age - 1 + H;
  const int cur_start = now - nbr.age + 1;
  res.feedback = Matrix::Zero(H, W);
  for (int r = 0; r + 1 < H; ++r) {
    for (int m = 0; m < W; ++m) {
      const int prev_col = cur_start + m - prev_start;
      if (prev_col >= 0 && prev_col < prev_window) {
        res.feedback(r, m) = prev_->feedback(r + 1, prev_col);
      }
    }
  }
  res.envelope = compute_envelope(res.feedback, nbr.dev_halfwidth);
  if (!res.envelope.empty()) {
    // The final slot applies the delayed terminal law; bound its response by
    // the terminal deviation radius around the published nominal.
    res.envelope[res.envelope.size() - 1] =
        std::min(2.0 * std::max(terminal_radius, 0.0), 2.0 * config_.input_bound);
  }
  // Value bookkeeping: evaluate the shifted plan on the current estimate
  // (informational only; the step is flagged regardless).
  const TerminalIngredients* term =
      config_.terminal.has_value() ? &*config_.terminal : nullptr;
  res.value = nominal_plan_value(pred_, xhat, to_vector(nbr.nominal),
                                 to_vector(res.plan), config_.Qx, config_.Qu,
                                 term);
  return res;
}

ControllerMessage RobustController::make_message(int now,
                                                 const Vector& own_state) const {
  if (!prev_.has_value()) {
    throw std::runtime_error("no solved plan available to broadcast");
  }
  ControllerMessage msg;
  msg.sender = config_.self.id;
  msg.step = now;
  msg.state = own_state;
  msg.plan = prev_->plan;
  msg.envelope = prev_->envelope;
  return msg;
}

TrackingController::TrackingController(TrackingControllerConfig config,
                                       Tolerances tol)
    : config_(std::move(config)), tol_(tol) {
  if (config_.horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  if (config_.self.nu() != 1) {
    throw std::invalid_argument("tracking program supports a scalar input");
  }
  if (config_.published_halfwidth < 0.0) {
    throw std::invalid_argument("published halfwidth must be nonnegative");
  }
  const double bound = [&] {
    // The input set is a box over one input; recover the bound from it.
    if (config_.self.input_set.box.has_value()) {
      return config_.self.input_set.box->halfwidth[0];
    }
    throw std::invalid_argument("tracking subsystem needs a box input set");
  }();
  input_bound_ = bound;
  const AugmentedModel solo =
      build_augmented_model(config_.self, {}, Polytope{});
  pred_ = build_prediction(solo, config_.horizon);
  terminal_cost_ = tracking_terminal_cost(config_.self.A, config_.self.B,
                                          config_.terminal_gain, config_.Q,
                                          config_.qu, tol_);
  band_ = global_input_band(input_bound_, config_.horizon);
}

SolveResult TrackingController::solve_step(
    int now, const Vector& state, const std::vector<Vector>& reference_states) {
  const int H = config_.horizon;
  const int nx = config_.self.nx();
  if (static_cast<int>(reference_states.size()) != H + 1) {
    throw std::invalid_argument("reference must cover slots 0..H");
  }
  if (state.size() != nx) throw std::invalid_argument("state dimension mismatch");

  // Free/pinned split on the band (zero-width slots are fixed exactly).
  std::vector<int> vmap(static_cast<size_t>(H), -1);
  Vector vpin = Vector::Zero(H);
  int n_free = 0;
  for (int n = 0; n < H; ++n) {
    if (band_.hi[n] - band_.lo[n] < kPinnedWidth) {
      vpin[n] = 0.5 * (band_.hi[n] + band_.lo[n]);
    } else {
      vmap[static_cast<size_t>(n)] = n_free++;
    }
  }

  const Vector c0 = pred_.A_t * state + pred_.B_t * vpin;
  Matrix B_free = Matrix::Zero(H * nx, n_free);
  for (int n = 0; n < H; ++n) {
    const int j = vmap[static_cast<size_t>(n)];
    if (j >= 0) B_free.col(j) = pred_.B_t.col(n);
  }

  Matrix Hm = Matrix::Zero(n_free, n_free);
  Vector g = Vector::Zero(n_free);
  auto add_quad = [&](const Matrix& weight, const Matrix& G, const Vector& c) {
    Hm += 2.0 * G.transpose() * weight * G;
    g += 2.0 * G.transpose() * weight * c;
  };
  for (int l = 1; l < H; ++l) {
    add_quad(config_.Q, B_free.middleRows((l - 1) * nx, nx),
             c0.segment((l - 1) * nx, nx) - reference_states[static_cast<size_t>(l)]);
  }
  add_quad(terminal_cost_, B_free.middleRows((H - 1) * nx, nx),
           c0.segment((H - 1) * nx, nx) - reference_states[static_cast<size_t>(H)]);
  for (int n = 0; n < H; ++n) {
    const int j = vmap[static_cast<size_t>(n)];
    if (j < 0) continue;
    Hm(j, j) += 2.0 * config_.qu;
    g[j] += -2.0 * config_.qu * config_.u_ref;
  }

  Vector v = vpin;
  int iterations = 0;
  if (n_free > 0) {
    QpProblem qp;
    qp.H = symmetrize(Hm);
    qp.g = g;
    qp.C_ineq = Matrix::Zero(2 * n_free, n_free);
    qp.b_ineq = Vector::Zero(2 * n_free);
    int r = 0;
    for (int n = 0; n < H; ++n) {
      const int j = vmap[static_cast<size_t>(n)];
      if (j < 0) continue;
      qp.C_ineq(r, j) = 1.0;
      qp.b_ineq[r++] = band_.hi[n];
      qp.C_ineq(r, j) = -1.0;
      qp.b_ineq[r++] = -band_.lo[n];
    }
    const QpSolution sol = solve_qp(qp, tol_);
    if (sol.status != QpStatus::optimal) {
      throw std::runtime_error("tracking program failed at step " +
                               std::to_string(now));
    }
    iterations = 0;
    for (int n = 0; n < H; ++n) {
      const int j = vmap[static_cast<size_t>(n)];
      if (j >= 0) v[n] = sol.x[j];
    }
  }

  SolveResult res;
  res.plan.assign(static_cast<size_t>(H), 0.0);
  for (int n = 0; n < H; ++n) res.plan[static_cast<size_t>(n)] = v[n];
  res.feedback = Matrix::Zero(H, 0);
  // Published promise for slot now+l: the plan entry may still move by the
  // per-replan budget once per remaining re-plan, so the sound halfwidth
  // ramps as l * budget.  A constant halfwidth would under-promise to any
  // receiver holding a message older than one step.
  res.envelope.assign(static_cast<size_t>(H - 1), 0.0);
  for (int l = 1; l < H; ++l) {
    res.envelope[static_cast<size_t>(l - 1)] =
        static_cast<double>(l) * config_.published_halfwidth;
  }
  res.qp_iterations = iterations;
  res.status = QpStatus::optimal;
  res.fallback = false;
  // Explicit value: tracking stages plus the terminal tracking cost.
  const Vector states = pred_.A_t * state + pred_.B_t * v;
  double value =
      (state - reference_states[0]).dot(config_.Q * (state - reference_states[0]));
  for (int l = 1; l < H; ++l) {
    const Vector e =
        states.segment((l - 1) * nx, nx) - reference_states[static_cast<size_t>(l)];
    value += e.dot(config_.Q * e);
  }
  {
    const Vector e =
        states.segment((H - 1) * nx, nx) - reference_states[static_cast<size_t>(H)];
    value += e.dot(terminal_cost_ * e);
  }
  for (int n = 0; n < H; ++n) {
    const double du = v[n] - config_.u_ref;
    value += config_.qu * du * du;
  }
  res.value = value;

  // The next re-plan may move each surviving slot by at most the per-replan
  // budget; shifting with the constant budget (not the published ramp) is
  // what keeps every outstanding ramp promise honored transitively.
  const std::vector<double> budget(static_cast<size_t>(H - 1),
                                   config_.published_halfwidth);
  band_ = shift_input_constraint(res.plan, budget, input_bound_);
  prev_ = res;
  return res;
}

ControllerMessage TrackingController::make_message(int now,
                                                   const Vector& state) const {
  if (!prev_.has_value()) {
    throw std::runtime_error("no solved plan available to broadcast");
  }
  ControllerMessage msg;
  msg.sender = config_.self.id;
  msg.step = now;
  msg.state = state;
  msg.plan = prev_->plan;
  msg.envelope = prev_->envelope;
  return msg;
}

}  // namespace aoidmpc
