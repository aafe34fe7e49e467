// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "aoidmpc/presets.hpp"

namespace aoidmpc {

namespace {

Matrix vehicle_A() {
  Matrix A(2, 2);
  A << 1.0, 0.3, 0.0, 1.0;
  return A;
}

Matrix vehicle_B() {
  Matrix B(2, 1);
  B << 0.045, 0.3;
  return B;
}

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

// Deterministic 8-state cyclic channel with two output links; success
// probabilities alternate between certain and lossy slots.
MarkovChannel cyclic_two_link_chain() {
  MarkovChannel chan;
  chan.T = Matrix::Zero(8, 8);
  for (int s = 0; s < 8; ++s) chan.T(s, (s + 1) % 8) = 1.0;
  chan.q = Matrix::Zero(8, 2);
  const double q0[8] = {1.0, 0.85, 0.85, 0.85, 1.0, 0.85, 1.0, 1.0};
  const double q1[8] = {1.0, 0.85, 1.0, 0.85, 0.85, 0.85, 1.0, 1.0};
  for (int s = 0; s < 8; ++s) {
    chan.q(s, 0) = q0[s];
    chan.q(s, 1) = q1[s];
  }
  return chan;
}

}  // namespace

ScenarioConfig platoon_scenario() {
  ScenarioConfig cfg;

  VehicleConfig s1;
  s1.id = 1;
  s1.A = vehicle_A();
  s1.B = vehicle_B();
  s1.input_bound = 1.98;
  s1.x0 = vec2(-13.0, 5.0);
  s1.follows = -1;
  s1.gain = vec2(0.03, 0.54);
  s1.published_halfwidth = 0.3 * 1.98;

  VehicleConfig s2;
  s2.id = 2;
  s2.A = vehicle_A();
  s2.B = vehicle_B();
  s2.input_bound = 3.0;
  s2.x0 = vec2(-20.0, 5.0);
  s2.follows = 0;
  s2.gain = vec2(0.03, 0.54);
  s2.terminal_seed = vec2(22.0, 3.0);
  s2.input_dev_cap = 1.4;  // keeps the rear vehicle's terminal budget solvent

  VehicleConfig s3;
  s3.id = 3;
  s3.A = vehicle_A();
  s3.B = vehicle_B();
  s3.input_bound = 5.0;
  s3.x0 = vec2(-25.0, 5.0);
  s3.follows = 1;
  s3.gain = vec2(0.06, 0.6);
  s3.terminal_seed = vec2(30.0, 8.0);

  cfg.vehicles = {s1, s2, s3};
  cfg.Q = Matrix::Zero(2, 2);
  cfg.Q(0, 0) = 5.0;
  cfg.Q(1, 1) = 1.0;
  cfg.qu = 0.1;
  cfg.u_ref = 1.0;
  cfg.x_ref0 = vec2(0.0, 5.0);
  cfg.coupled_corridor = true;
  cfg.gap_min = 0.0;
  cfg.gap_max = 200.0;
  cfg.chain = cyclic_two_link_chain();
  cfg.chain_initial_state = 1;
  cfg.w = Matrix::Zero(3, 3);
  cfg.w(1, 0) = 1.0;
  cfg.w(2, 1) = 1.0;
  cfg.horizon = 8;
  cfg.network_horizon = 8;
  cfg.max_age = 4;
  cfg.tau = 0.1;
  cfg.mode = MaskMode::forecast;
  cfg.scheduler = SchedulerMode::last_step_commit;
  cfg.events.setpoint_step = 20;
  cfg.events.setpoint_offset = vec2(-5.0, 0.0);
  cfg.events.outage_from = 59;
  cfg.events.outage_duration = 3;
  cfg.events.outage_receiver = 2;
  cfg.events.outage_sender = 1;
  cfg.steps = 80;
  cfg.seed = 0;
  cfg.dt = 0.3;
  return cfg;
}

ScenarioConfig nominal_scenario() {
  ScenarioConfig cfg;

  VehicleConfig lead;
  lead.id = 1;
  lead.A = vehicle_A();
  lead.B = vehicle_B();
  lead.input_bound = 0.0;  // parked: the weakest promise is already exact
  lead.x0 = vec2(0.0, 0.0);
  lead.follows = -1;
  lead.gain = vec2(0.03, 0.54);
  lead.published_halfwidth = 0.0;

  VehicleConfig follower;
  follower.id = 2;
  follower.A = vehicle_A();
  follower.B = vehicle_B();
  follower.input_bound = 3.0;
  follower.x0 = vec2(-7.0, 0.0);
  follower.follows = 0;
  follower.gain = vec2(0.03, 0.54);
  follower.terminal_seed = vec2(10.0, 2.8);

  cfg.vehicles = {lead, follower};
  cfg.Q = Matrix::Zero(2, 2);
  cfg.Q(0, 0) = 5.0;
  cfg.Q(1, 1) = 1.0;
  cfg.qu = 0.1;
  cfg.u_ref = 0.0;
  cfg.x_ref0 = vec2(0.0, 0.0);
  cfg.coupled_corridor = false;
  // Single-state channel that always delivers: ages stay pinned at one.
  cfg.chain.T = Matrix::Ones(1, 1);
  cfg.chain.q = Matrix::Ones(1, 1);
  cfg.chain_initial_state = 0;
  cfg.w = Matrix::Zero(2, 2);
  cfg.w(1, 0) = 1.0;
  cfg.horizon = 8;
  cfg.network_horizon = 8;
  cfg.max_age = 4;
  cfg.tau = 0.1;
  cfg.mode = MaskMode::forecast;
  cfg.scheduler = SchedulerMode::last_step_commit;
  cfg.steps = 80;
  cfg.seed = 0;
  cfg.dt = 0.3;
  return cfg;
}

}  // namespace aoidmpc
