// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic co-simulation of the networked platoon: a predictive
// scheduler decides who broadcasts, a Markov-modulated channel decides what
// arrives, and every vehicle runs its model-predictive controller on the
// data it actually holds.  One engine advances both sides on a shared clock
// and records a trace; Monte-Carlo wrappers aggregate across seeds.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aoidmpc/channel.hpp"
#include "aoidmpc/controller.hpp"
#include "aoidmpc/linalg.hpp"
#include "aoidmpc/scheduler.hpp"
#include "aoidmpc/terminal.hpp"

namespace aoidmpc {

// One vehicle inside a scenario.  `follows < 0` marks the lead vehicle,
// which tracks the external reference and publishes a fixed-halfwidth
// envelope; every other vehicle runs the robust distributed controller
// against the vehicle it follows.
struct VehicleConfig {
  int id = 0;
  Matrix A;
  Matrix B;
  double input_bound = 0.0;
  Vector x0;
  int follows = -1;
  // Feedback gain: the tracking terminal gain for the lead, the delayed
  // relative gain for followers.
  Vector gain;
  // Terminal-set synthesis knobs (followers only).
  Vector terminal_seed;        // per-block seed box halfwidth
  double input_dev_cap = 0.0;  // optional cap on the published deviation radius
  // Lead only: constant halfwidth of the envelope it publishes.
  double published_halfwidth = 0.0;
};

// Time-indexed disturbances.  A negative step disables the event.
struct EventConfig {
  int setpoint_step = -1;
  Vector setpoint_offset;  // added to the lead's reference from that step on
  int outage_from = -1;
  int outage_duration = 0;
  int outage_receiver = -1;  // link held down, as a (receiver, sender) pair
  int outage_sender = -1;
};

enum class MaskMode { forecast, worstcase };
enum class SchedulerMode { greedy, last_step_commit };

struct ScenarioConfig {
  std::vector<VehicleConfig> vehicles;
  Matrix Q;          // per-vehicle tracking / relative stage weight
  double qu = 0.1;   // input stage weight (difference form for followers)
  double u_ref = 0.0;
  Vector x_ref0;     // reference trajectory seed; advances as r+ = A r + B u_ref
  bool coupled_corridor = true;  // enforce gap bounds between follower pairs
  double gap_min = 0.0;
  double gap_max = 200.0;
  MarkovChannel chain;
  int chain_initial_state = 0;
  Matrix w;  // pair weights, (receiver, sender); positive entries are links
  int horizon = 8;          // control horizon H
  int network_horizon = 8;  // scheduler horizon N
  int max_age = 4;          // guaranteed age bound; also the terminal-law delay
  double tau = 0.1;         // stochastic-forecast threshold (robust runs ignore it)
  MaskMode mode = MaskMode::forecast;
  SchedulerMode scheduler = SchedulerMode::last_step_commit;
  EventConfig events;
  int steps = 80;
  std::uint64_t seed = 0;
  double dt = 0.3;  // labeling only; the dynamics already embed the step
};

// Throws std::invalid_argument naming the violated requirement.
void validate_scenario(const ScenarioConfig& cfg);

// One row of the simulation trace, recorded at the end of each step.
struct TraceRecord {
  int k = 0;
  std::vector<int> aoi;           // realized age per weighted pair, at control time
  std::vector<int> forecast_aoi;  // the network's same-step prediction of that age
  int sched = 0;                  // admissible-vector index: 0 silent, i = vehicle i-1
  std::vector<Vector> x;          // per-vehicle state at the start of the step
  std::vector<double> u;          // per-vehicle applied input
  std::vector<double> value;      // per-vehicle optimal value V_k
  std::vector<bool> fallback;     // per-vehicle infeasibility flag
  double span = 0.0;              // front position minus last position
  std::string event;              // annotation: "", "setpoint", "outage"
};

// A finished run: the trace plus soundness counters.  Every counter is
// expected to stay zero; they are tallied here rather than asserted so the
// Monte-Carlo layer and the acceptance harness can report them.
struct RunResult {
  std::vector<TraceRecord> trace;
  long input_violations = 0;        // |u| beyond the bound by more than 1e-7
  long gap_violations = 0;          // corridor breached by more than 1e-7
  long infeasibility_flags = 0;     // controller fallbacks
  long forecast_violations = 0;     // realized age above a published forecast
  long envelope_violations = 0;     // applied input outside a published envelope
  long consistency_violations = 0;  // re-plan outside the previously shifted band
  long mask_dominance_violations = 0;  // forecast mask narrower than constant-age
};

struct TraceMetrics {
  double max_span_after_event = 0.0;
  double final_span = 0.0;
  std::vector<long> aoi_histogram;  // aoi_histogram[a] = count of (step, pair) at age a
  int max_aoi = 0;
  double mean_aoi = 0.0;
  std::vector<double> max_abs_input;  // per vehicle
  bool input_bounds_ok = true;
  bool gap_bounds_ok = true;
  double max_gap_violation = 0.0;
};

struct MonteCarloSummary {
  int runs = 0;
  int max_aoi = 0;
  double mean_aoi = 0.0;
  double max_span = 0.0;       // worst per-run max-span-after-event
  double mean_max_span = 0.0;  // mean of the per-run maxima
  long constraint_violations = 0;  // inputs + gaps
  long infeasibility_flags = 0;
  long forecast_violations = 0;
  long envelope_violations = 0;
  long consistency_violations = 0;
  long mask_dominance_violations = 0;
  std::vector<double> per_seed_max_span;
  std::vector<int> per_seed_max_aoi;
};

// Reusable engine: the constructor validates the scenario and runs the
// terminal-set synthesis cascade once; each run() then advances the full
// closed loop for cfg.steps steps.  Runs are independent and deterministic
// in (seed, mode).
class ScenarioEngine {
 public:
  explicit ScenarioEngine(ScenarioConfig cfg);

  RunResult run(std::uint64_t seed, MaskMode mode) const;
  RunResult run() const { return run(cfg_.seed, cfg_.mode); }

  const ScenarioConfig& config() const { return cfg_; }
  // Synthesized terminal ingredients, indexed like cfg.vehicles (empty for
  // the lead).
  const std::vector<std::optional<TerminalIngredients>>& terminals() const {
    return terminals_;
  }

 private:
  ScenarioConfig cfg_;
  std::vector<std::optional<TerminalIngredients>> terminals_;
  std::vector<std::pair<int, int>> pairs_;  // weighted (receiver, sender), row-major
};

// Single run with the config's own seed and mode.
RunResult run_scenario(const ScenarioConfig& cfg);

// n_seeds sequential runs seeded cfg.seed, cfg.seed+1, ...; all runs share
// one synthesis pass.
MonteCarloSummary run_monte_carlo(const ScenarioConfig& cfg, int n_seeds);

// Post-hoc metrics over a finished trace.
TraceMetrics compute_metrics(const ScenarioConfig& cfg,
                             const std::vector<TraceRecord>& trace);

}  // namespace aoidmpc
