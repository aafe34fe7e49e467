// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
//
// The co-simulation engine.  Each step runs five phases in a fixed order:
//   1. the network controller plans the broadcast schedule and issues
//      age forecasts for every weighted pair;
//   2. the scheduled broadcast is realized over the Markov channel, ages
//      update, and delivered messages replace the receivers' held data;
//   3. every vehicle estimates, solves its program, and publishes a fresh
//      message (state, plan, envelope);
//   4. the first planned input is applied to each plant;
//   5. the step is recorded.
// All randomness comes from two per-run streams (chain transitions and
// transmission outcomes), so a run is a pure function of (config, seed,
// mode) and the network side is bit-identical across mask modes.

#include "aoidmpc/cosim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

#include "aoidmpc/rng.hpp"

namespace aoidmpc {

namespace {

constexpr double kBoundTol = 1e-7;    // plant-constraint accounting tolerance
constexpr double kPromiseTol = 1e-9;  // envelope/consistency accounting tolerance

std::vector<std::pair<int, int>> weighted_pairs(const Matrix& w) {
  std::vector<std::pair<int, int>> pairs;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (w(i, j) > 0.0) pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  }
  return pairs;
}

SubsystemModel to_model(const VehicleConfig& v) {
  SubsystemModel m;
  m.id = v.id;
  m.A = v.A;
  m.B = v.B;
  m.input_set = make_box(Vector::Zero(1), Vector::Constant(1, v.input_bound));
  return m;
}

Matrix stack_state_weight(const Matrix& Q) {
  const Eigen::Index nx = Q.rows();
  Matrix Qx = Matrix::Zero(2 * nx, 2 * nx);
  Qx.topLeftCorner(nx, nx) = Q;
  Qx.topRightCorner(nx, nx) = -Q;
  Qx.bottomLeftCorner(nx, nx) = -Q;
  Qx.bottomRightCorner(nx, nx) = Q;
  return Qx;
}

Matrix difference_input_weight(double qu) {
  Matrix Qu(2, 2);
  Qu << qu, -qu, -qu, qu;
  return Qu;
}

// Corridor over [x_self; x_front]: gap_min <= front_pos - self_pos <= gap_max.
Polytope corridor_set(int nx, double gap_min, double gap_max) {
  Polytope p;
  p.C = Matrix::Zero(2, 2 * nx);
  p.b = Vector::Zero(2);
  p.C(0, 0) = 1.0;
  p.C(0, nx) = -1.0;
  p.b[0] = -gap_min;
  p.C(1, 0) = -1.0;
  p.C(1, nx) = 1.0;
  p.b[1] = gap_max;
  return p;
}

struct PendingForecast {
  int step = 0;
  Forecast fc;
};

}  // namespace

void validate_scenario(const ScenarioConfig& cfg) {
  const int n = static_cast<int>(cfg.vehicles.size());
  if (n < 1) throw std::invalid_argument("scenario requires at least one subsystem");
  const Eigen::Index nx = cfg.vehicles.front().A.rows();
  for (int i = 0; i < n; ++i) {
    const VehicleConfig& v = cfg.vehicles[static_cast<size_t>(i)];
    if (v.A.rows() != nx || v.A.cols() != nx || v.B.rows() != nx || v.B.cols() != 1 ||
        v.x0.size() != nx) {
      throw std::invalid_argument("subsystem dynamics dimensions are inconsistent");
    }
    if (v.input_bound < 0.0) {
      throw std::invalid_argument("input bound must be nonnegative");
    }
    if (v.follows < -1 || v.follows >= i) {
      throw std::invalid_argument("a subsystem must follow an earlier subsystem");
    }
    if (v.gain.size() != nx) {
      throw std::invalid_argument("feedback gain must match the state dimension");
    }
    if (v.follows >= 0) {
      if (v.terminal_seed.size() != nx || v.terminal_seed.minCoeff() <= 0.0) {
        throw std::invalid_argument("terminal seed must be a positive box");
      }
    } else {
      if (v.published_halfwidth < 0.0 || v.published_halfwidth > v.input_bound) {
        throw std::invalid_argument("published halfwidth must lie within the input bound");
      }
      if (std::abs(cfg.u_ref) > v.input_bound) {
        throw std::invalid_argument("reference input exceeds the lead input bound");
      }
    }
    // The bootstrap broadcast back-casts the initial state one step.
    if (std::abs(v.A.determinant()) < 1e-12) {
      throw std::invalid_argument("subsystem dynamics must be invertible");
    }
  }
  if (cfg.Q.rows() != nx || cfg.Q.cols() != nx) {
    throw std::invalid_argument("stage weight must match the state dimension");
  }
  if (cfg.qu <= 0.0) throw std::invalid_argument("input weight must be positive");
  if (cfg.x_ref0.size() != nx) {
    throw std::invalid_argument("reference seed must match the state dimension");
  }
  if (cfg.coupled_corridor && cfg.gap_max < cfg.gap_min) {
    throw std::invalid_argument("corridor bounds are inverted");
  }
  if (cfg.horizon < 1) throw std::invalid_argument("control horizon must be at least 1");
  if (cfg.network_horizon < 1) {
    throw std::invalid_argument("network horizon must be at least 1");
  }
  if (cfg.max_age < 1) throw std::invalid_argument("maximum age must be at least 1");
  if (cfg.horizon < cfg.max_age) {
    throw std::invalid_argument("control horizon must cover the maximum information age");
  }
  if (cfg.steps < cfg.horizon) {
    throw std::invalid_argument("run length must cover at least one horizon");
  }
  if (cfg.tau < 0.0 || cfg.tau >= 1.0) {
    throw std::invalid_argument("threshold must lie in [0, 1)");
  }
  validate_channel(cfg.chain);
  if (cfg.chain_initial_state < 0 || cfg.chain_initial_state >= cfg.chain.num_states()) {
    throw std::invalid_argument("initial channel state out of range");
  }
  if (cfg.w.rows() != n || cfg.w.cols() != n || cfg.w.minCoeff() < 0.0) {
    throw std::invalid_argument("pair weights must be a nonnegative square matrix");
  }
  const auto pairs = weighted_pairs(cfg.w);
  for (const auto& [i, j] : pairs) {
    if (cfg.vehicles[static_cast<size_t>(i)].follows != j) {
      throw std::invalid_argument("a weighted pair must match the following relation");
    }
  }
  for (int i = 0; i < n; ++i) {
    const int j = cfg.vehicles[static_cast<size_t>(i)].follows;
    if (j >= 0 && cfg.w(i, j) <= 0.0) {
      throw std::invalid_argument("every follower pair needs a positive weight");
    }
  }
  if (static_cast<int>(pairs.size()) > cfg.chain.num_links()) {
    throw std::invalid_argument("channel must provide an output column per weighted pair");
  }
  const EventConfig& ev = cfg.events;
  if (ev.setpoint_step >= 0 && ev.setpoint_offset.size() != nx) {
    throw std::invalid_argument("setpoint offset must match the state dimension");
  }
  if (ev.outage_from >= 0) {
    if (ev.outage_duration < 1) {
      throw std::invalid_argument("outage duration must be at least one step");
    }
    const bool linked = std::any_of(pairs.begin(), pairs.end(), [&](const auto& p) {
      return p.first == ev.outage_receiver && p.second == ev.outage_sender;
    });
    if (!linked) throw std::invalid_argument("outage link must be a weighted pair");
  }
  if (cfg.steps < 1) throw std::invalid_argument("run length must be positive");
}

ScenarioEngine::ScenarioEngine(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
  validate_scenario(cfg_);
  pairs_ = weighted_pairs(cfg_.w);
  terminals_.resize(cfg_.vehicles.size());
  // Terminal synthesis cascades front to back: each follower absorbs the
  // deviation radius its front vehicle publishes (the lead's per-replan
  // budget, or the previous follower's terminal radius).
  for (size_t i = 0; i < cfg_.vehicles.size(); ++i) {
    const VehicleConfig& v = cfg_.vehicles[i];
    if (v.follows < 0) continue;
    const VehicleConfig& front = cfg_.vehicles[static_cast<size_t>(v.follows)];
    double dev = 0.0;
    if (front.follows < 0) {
      dev = front.published_halfwidth;
    } else {
      dev = terminals_[static_cast<size_t>(v.follows)]->own_dev_radius;
    }
    TerminalSpec spec;
    spec.A = v.A;
    spec.B = v.B;
    spec.K_rel = v.gain;
    spec.delay = cfg_.max_age;
    spec.Qx_rel = cfg_.Q;
    spec.qu_own = cfg_.qu;
    spec.u_ff = cfg_.u_ref;
    spec.input_bound = v.input_bound;
    spec.dev_lo = -dev;
    spec.dev_hi = dev;
    TerminalOptions opt;
    opt.seed_halfwidth = v.terminal_seed;
    opt.input_dev_cap = v.input_dev_cap;
    TerminalIngredients t = synthesize_terminal(spec, opt);
    verify_terminal(t);
    terminals_[i] = std::move(t);
  }
}

RunResult ScenarioEngine::run(std::uint64_t seed, MaskMode mode) const {
  const ScenarioConfig& cfg = cfg_;
  const int n = static_cast<int>(cfg.vehicles.size());
  const int H = cfg.horizon;
  const int N = cfg.network_horizon;
  const Eigen::Index nx = cfg.vehicles.front().A.rows();

  SeededRng chain_rng = SeededRng::derive(seed, 0);
  SeededRng tx_rng = SeededRng::derive(seed, 1);

  // Network side.
  NetworkChannels net;
  net.chains = {cfg.chain};
  net.chain_of = Eigen::MatrixXi::Constant(n, n, -1);
  net.column_of = Eigen::MatrixXi::Constant(n, n, -1);
  for (size_t p = 0; p < pairs_.size(); ++p) {
    net.chain_of(pairs_[p].first, pairs_[p].second) = 0;
    net.column_of(pairs_[p].first, pairs_[p].second) = static_cast<int>(p);
  }
  net.beliefs = {unit_belief(cfg.chain.num_states(), cfg.chain_initial_state)};
  int chain_state = cfg.chain_initial_state;
  AoiState ages = fresh_aoi(n);
  const AdmissibleSet adm = single_broadcaster_set(n);
  SchedulePlan plan;

  // Control side: fresh controllers per run.
  std::vector<std::unique_ptr<TrackingController>> trackers(static_cast<size_t>(n));
  std::vector<std::unique_ptr<RobustController>> followers(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const VehicleConfig& v = cfg.vehicles[static_cast<size_t>(i)];
    if (v.follows < 0) {
      TrackingControllerConfig tc;
      tc.self = to_model(v);
      tc.Q = cfg.Q;
      tc.qu = cfg.qu;
      tc.u_ref = cfg.u_ref;
      tc.terminal_gain = v.gain;
      tc.published_halfwidth = v.published_halfwidth;
      tc.horizon = H;
      trackers[static_cast<size_t>(i)] = std::make_unique<TrackingController>(tc);
    } else {
      const VehicleConfig& front = cfg.vehicles[static_cast<size_t>(v.follows)];
      RobustControllerConfig rc;
      rc.self = to_model(v);
      rc.neighbor = to_model(front);
      rc.coupled_state_set = cfg.coupled_corridor
                                 ? corridor_set(static_cast<int>(nx), cfg.gap_min,
                                                cfg.gap_max)
                                 : Polytope{};
      rc.Qx = stack_state_weight(cfg.Q);
      rc.Qu = difference_input_weight(cfg.qu);
      rc.horizon = H;
      rc.max_age = cfg.max_age;
      rc.input_bound = v.input_bound;
      // Beyond the held plan's coverage the front vehicle is only limited by
      // its own input set.
      rc.neighbor_bound = front.input_bound;
      rc.terminal = terminals_[static_cast<size_t>(i)];
      followers[static_cast<size_t>(i)] = std::make_unique<RobustController>(rc);
    }
  }

  // Plants, reference, messages.
  std::vector<Vector> x;
  x.reserve(static_cast<size_t>(n));
  for (const auto& v : cfg.vehicles) x.push_back(v.x0);
  Vector ref = cfg.x_ref0;

  std::vector<ControllerMessage> latest(static_cast<size_t>(n));
  std::vector<ControllerMessage> held(static_cast<size_t>(n));
  std::vector<std::deque<ControllerMessage>> history(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const VehicleConfig& v = cfg.vehicles[static_cast<size_t>(i)];
    ControllerMessage synth;
    synth.sender = v.id;
    synth.step = -1;
    synth.state = v.A.inverse() * v.x0;
    synth.plan.assign(static_cast<size_t>(H), 0.0);
    // A zero plan with an input-bound envelope is the weakest sound promise:
    // whatever the vehicle actually applies stays inside it.
    synth.envelope.assign(static_cast<size_t>(H - 1), v.input_bound);
    latest[static_cast<size_t>(i)] = synth;
    history[static_cast<size_t>(i)].push_back(synth);
  }
  for (int i = 0; i < n; ++i) {
    const int j = cfg.vehicles[static_cast<size_t>(i)].follows;
    if (j >= 0) held[static_cast<size_t>(i)] = latest[static_cast<size_t>(j)];
  }

  std::deque<PendingForecast> pending;
  std::vector<bool> pair_delivered(pairs_.size(), false);
  RunResult out;
  out.trace.reserve(static_cast<size_t>(cfg.steps));

  for (int k = 0; k < cfg.steps; ++k) {
    // ---- Phase 1: schedule and forecasts.
    if (!plan.defined() || cfg.scheduler == SchedulerMode::greedy) {
      plan = greedy_schedule(ages, cfg.w, adm, net, N);
    } else {
      plan = commit_last_step(plan, ages, cfg.w, adm, net);
    }
    const Forecast fc = generate_forecasts(ages, cfg.w, plan, adm, net, cfg.tau,
                                           ForecastMode::robust, cfg.max_age);
    pending.push_back({k, fc});

    // ---- Phase 2: transmissions, age update, message delivery.
    const Eigen::VectorXi& v = adm.vectors[static_cast<size_t>(plan.choice[0])];
    Eigen::MatrixXi p = Eigen::MatrixXi::Zero(n, n);
    const EventConfig& ev = cfg.events;
    const bool outage_now = ev.outage_from >= 0 && k >= ev.outage_from &&
                            k < ev.outage_from + ev.outage_duration;
    for (size_t pi = 0; pi < pairs_.size(); ++pi) {
      const auto [recv, send] = pairs_[pi];
      if (v[send] != 1) continue;
      // A forced outage suppresses the Bernoulli draw entirely, but never on
      // a certain-success slot: those carry the scheduler's hard guarantee.
      const bool forced = outage_now && recv == ev.outage_receiver &&
                          send == ev.outage_sender &&
                          cfg.chain.q(chain_state, static_cast<int>(pi)) < 1.0;
      bool ok = false;
      if (!forced) {
        ok = draw_transmission(cfg.chain, chain_state, static_cast<int>(pi), tx_rng);
      }
      p(send, recv) = ok ? 1 : 0;
      if (ok) {
        held[static_cast<size_t>(recv)] = latest[static_cast<size_t>(send)];
        pair_delivered[pi] = true;
      }
    }
    ages = step_aoi(ages, v, p);
    chain_state = step_chain(cfg.chain, chain_state, chain_rng);
    net.beliefs[0] = propagate_belief(cfg.chain, net.beliefs[0], 1);

    // Bookkeeping invariant: the age recursion and the held messages agree
    // once a pair has seen its first delivery.  Until then the recursion,
    // whose baseline treats the pre-run data as already one step old, runs
    // exactly one step ahead of the bootstrap message's true age.
    for (size_t pi = 0; pi < pairs_.size(); ++pi) {
      const auto [recv, send] = pairs_[pi];
      const ControllerMessage& m = held[static_cast<size_t>(recv)];
      const int expected = pair_delivered[pi] ? k - m.step : k + 2;
      if (ages.age(recv, send) != expected) {
        throw std::logic_error("age bookkeeping diverged at step " + std::to_string(k));
      }
    }
    // Forecast reliability: every outstanding prediction is an upper bound.
    for (const PendingForecast& pf : pending) {
      const int offset = k - pf.step + 1;
      if (offset > N) continue;
      for (const auto& [recv, send] : pairs_) {
        if (ages.age(recv, send) > pf.fc.entry(recv, send, offset)) {
          ++out.forecast_violations;
        }
      }
    }
    while (!pending.empty() && k - pending.front().step + 1 >= N) pending.pop_front();

    // ---- Phase 3: solve and publish.
    std::vector<double> u(static_cast<size_t>(n), 0.0);
    std::vector<double> value(static_cast<size_t>(n), 0.0);
    std::vector<bool> fallback(static_cast<size_t>(n), false);
    for (int i = 0; i < n; ++i) {
      const VehicleConfig& vcfg = cfg.vehicles[static_cast<size_t>(i)];
      SolveResult res;
      try {
        if (vcfg.follows < 0) {
          std::vector<Vector> refs(static_cast<size_t>(H) + 1);
          Vector r = ref;
          const bool shifted = ev.setpoint_step >= 0 && k >= ev.setpoint_step;
          for (int l = 0; l <= H; ++l) {
            refs[static_cast<size_t>(l)] = shifted ? Vector(r + ev.setpoint_offset) : r;
            r = vcfg.A * r + vcfg.B * Vector::Constant(1, cfg.u_ref);
          }
          res = trackers[static_cast<size_t>(i)]->solve_step(k, x[static_cast<size_t>(i)],
                                                             refs);
        } else {
          // The controller works with the held message's true age; the
          // network-side recursion (recorded in the trace) upper-bounds it.
          const int age = k - held[static_cast<size_t>(i)].step;
          std::vector<int> predicted(static_cast<size_t>(H - 1), cfg.max_age);
          if (mode == MaskMode::forecast) {
            for (int l = 0; l < H - 1; ++l) {
              // Offset l+2 of the step-k forecast predicts the age at control
              // time k+l+1, which is when plan slot l+1 gets re-planned.
              const int entry = fc.entry(i, vcfg.follows, l + 2);
              predicted[static_cast<size_t>(l)] = entry;
              if (entry > cfg.max_age) ++out.mask_dominance_violations;
            }
          }
          res = followers[static_cast<size_t>(i)]->solve_step(
              k, x[static_cast<size_t>(i)], held[static_cast<size_t>(i)], age, predicted);
          if (res.fallback) ++out.infeasibility_flags;
        }
      } catch (const std::logic_error& e) {
        throw std::runtime_error("step " + std::to_string(k) + ": " + e.what());
      }
      u[static_cast<size_t>(i)] = res.plan[0];
      value[static_cast<size_t>(i)] = res.value;
      fallback[static_cast<size_t>(i)] = res.fallback;

      ControllerMessage msg =
          vcfg.follows < 0
              ? trackers[static_cast<size_t>(i)]->make_message(k, x[static_cast<size_t>(i)])
              : followers[static_cast<size_t>(i)]->make_message(k,
                                                                x[static_cast<size_t>(i)]);
      // Consistency chain: the fresh plan must respect the band the previous
      // message announced for the shared slots.
      const ControllerMessage& prev = history[static_cast<size_t>(i)].back();
      for (int l = 0; l + 1 < H; ++l) {
        const double drift = std::abs(msg.plan[static_cast<size_t>(l)] -
                                      prev.plan[static_cast<size_t>(l + 1)]);
        if (drift > prev.envelope[static_cast<size_t>(l)] + kPromiseTol) {
          ++out.consistency_violations;
        }
      }
      latest[static_cast<size_t>(i)] = msg;
      history[static_cast<size_t>(i)].push_back(std::move(msg));
      while (history[static_cast<size_t>(i)].front().step < k - (H - 1)) {
        history[static_cast<size_t>(i)].pop_front();
      }
    }

    // ---- Phase 4 bookkeeping on the pre-update states, then the plants.
    TraceRecord rec;
    rec.k = k;
    for (const auto& [recv, send] : pairs_) {
      rec.aoi.push_back(ages.age(recv, send));
      rec.forecast_aoi.push_back(fc.entry(recv, send, 1));
    }
    rec.sched = plan.choice[0];
    rec.x = x;
    rec.u = u;
    rec.value = value;
    rec.fallback = fallback;
    rec.span = n > 1 ? x.front()[0] - x.back()[0] : 0.0;
    if (ev.setpoint_step == k) rec.event = "setpoint";
    if (outage_now) rec.event = rec.event.empty() ? "outage" : rec.event + "+outage";
    out.trace.push_back(std::move(rec));

    for (int i = 0; i < n; ++i) {
      const VehicleConfig& vcfg = cfg.vehicles[static_cast<size_t>(i)];
      if (std::abs(u[static_cast<size_t>(i)]) > vcfg.input_bound + kBoundTol) {
        ++out.input_violations;
      }
      // Every published promise this input falls under must hold.
      for (const ControllerMessage& m : history[static_cast<size_t>(i)]) {
        const int r = k - m.step;
        if (r < 1 || r > H - 1) continue;
        const double dev =
            std::abs(u[static_cast<size_t>(i)] - m.plan[static_cast<size_t>(r)]);
        if (dev > m.envelope[static_cast<size_t>(r - 1)] + kPromiseTol) {
          ++out.envelope_violations;
        }
      }
      if (cfg.coupled_corridor && vcfg.follows >= 0) {
        const double gap =
            x[static_cast<size_t>(vcfg.follows)][0] - x[static_cast<size_t>(i)][0];
        if (gap < cfg.gap_min - kBoundTol || gap > cfg.gap_max + kBoundTol) {
          ++out.gap_violations;
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      const VehicleConfig& vcfg = cfg.vehicles[static_cast<size_t>(i)];
      x[static_cast<size_t>(i)] = vcfg.A * x[static_cast<size_t>(i)] +
                                  vcfg.B * Vector::Constant(1, u[static_cast<size_t>(i)]);
    }
    ref = cfg.vehicles.front().A * ref +
          cfg.vehicles.front().B * Vector::Constant(1, cfg.u_ref);
  }
  return out;
}

RunResult run_scenario(const ScenarioConfig& cfg) {
  return ScenarioEngine(cfg).run();
}

TraceMetrics compute_metrics(const ScenarioConfig& cfg,
                             const std::vector<TraceRecord>& trace) {
  if (trace.empty()) throw std::invalid_argument("metrics require a nonempty trace");
  TraceMetrics m;
  int event_step = 0;
  if (cfg.events.setpoint_step >= 0) event_step = cfg.events.setpoint_step;
  if (cfg.events.outage_from >= 0 &&
      (cfg.events.setpoint_step < 0 || cfg.events.outage_from < event_step)) {
    event_step = cfg.events.outage_from;
  }
  const int n = static_cast<int>(cfg.vehicles.size());
  m.max_abs_input.assign(static_cast<size_t>(n), 0.0);
  long age_samples = 0;
  double age_sum = 0.0;
  for (const TraceRecord& rec : trace) {
    if (rec.k >= event_step) {
      m.max_span_after_event = std::max(m.max_span_after_event, rec.span);
    }
    for (int a : rec.aoi) {
      m.max_aoi = std::max(m.max_aoi, a);
      age_sum += a;
      ++age_samples;
      if (static_cast<size_t>(a) >= m.aoi_histogram.size()) {
        m.aoi_histogram.resize(static_cast<size_t>(a) + 1, 0);
      }
      ++m.aoi_histogram[static_cast<size_t>(a)];
    }
    for (int i = 0; i < n; ++i) {
      m.max_abs_input[static_cast<size_t>(i)] =
          std::max(m.max_abs_input[static_cast<size_t>(i)],
                   std::abs(rec.u[static_cast<size_t>(i)]));
      const int j = cfg.vehicles[static_cast<size_t>(i)].follows;
      if (cfg.coupled_corridor && j >= 0) {
        const double gap = rec.x[static_cast<size_t>(j)][0] - rec.x[static_cast<size_t>(i)][0];
        const double viol = std::max(cfg.gap_min - gap, gap - cfg.gap_max);
        m.max_gap_violation = std::max(m.max_gap_violation, viol);
      }
    }
  }
  m.final_span = trace.back().span;
  m.mean_aoi = age_samples > 0 ? age_sum / static_cast<double>(age_samples) : 0.0;
  for (int i = 0; i < n; ++i) {
    if (m.max_abs_input[static_cast<size_t>(i)] >
        cfg.vehicles[static_cast<size_t>(i)].input_bound + kBoundTol) {
      m.input_bounds_ok = false;
    }
  }
  m.gap_bounds_ok = m.max_gap_violation <= kBoundTol;
  return m;
}

MonteCarloSummary run_monte_carlo(const ScenarioConfig& cfg, int n_seeds) {
  if (n_seeds < 1) throw std::invalid_argument("monte carlo requires at least one seed");
  const ScenarioEngine engine(cfg);
  MonteCarloSummary s;
  s.runs = n_seeds;
  double span_sum = 0.0;
  double age_sum = 0.0;
  for (int r = 0; r < n_seeds; ++r) {
    const RunResult run = engine.run(cfg.seed + static_cast<std::uint64_t>(r), cfg.mode);
    const TraceMetrics m = compute_metrics(cfg, run.trace);
    s.max_aoi = std::max(s.max_aoi, m.max_aoi);
    age_sum += m.mean_aoi;
    s.max_span = std::max(s.max_span, m.max_span_after_event);
    span_sum += m.max_span_after_event;
    s.per_seed_max_span.push_back(m.max_span_after_event);
    s.per_seed_max_aoi.push_back(m.max_aoi);
    s.constraint_violations += run.input_violations + run.gap_violations;
    s.infeasibility_flags += run.infeasibility_flags;
    s.forecast_violations += run.forecast_violations;
    s.envelope_violations += run.envelope_violations;
    s.consistency_violations += run.consistency_violations;
    s.mask_dominance_violations += run.mask_dominance_violations;
  }
  s.mean_max_span = span_sum / static_cast<double>(n_seeds);
  s.mean_aoi = age_sum / static_cast<double>(n_seeds);
  return s;
}

}  // namespace aoidmpc
