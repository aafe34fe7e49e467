// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "aoidmpc/channel.hpp"
#include "aoidmpc/linalg.hpp"

namespace aoidmpc {

// age(i, j) = age, in steps, of agent j's data held by agent i. Entries are
// at least 1; the diagonal is unused and pinned to 1.
struct AoiState {
  Eigen::MatrixXi age;

  int size() const { return static_cast<int>(age.rows()); }
};

AoiState fresh_aoi(int n);  // all relevant ages = 1

// Binary broadcast vectors the network may apply in one slot. Always contains
// the all-zero vector (idling).
struct AdmissibleSet {
  std::vector<Eigen::VectorXi> vectors;

  int size() const { return static_cast<int>(vectors.size()); }
};

void validate_admissible_set(const AdmissibleSet& adm, int n);

// {0, e_1, ..., e_n}: at most one broadcaster per slot.
AdmissibleSet single_broadcaster_set(int n);

// Broadcast plan over the network horizon, stored as indices into the
// admissible set (index form keeps tie-breaking and traces deterministic).
struct SchedulePlan {
  std::vector<int> choice;

  int horizon() const { return static_cast<int>(choice.size()); }
  bool defined() const { return !choice.empty(); }
};

// Channel topology: for each ordered pair (receiver i, sender j) an optional
// link, realized as one output column of one shared-or-private Markov chain.
struct NetworkChannels {
  std::vector<MarkovChannel> chains;
  Eigen::MatrixXi chain_of;   // n x n, -1 where no link exists
  Eigen::MatrixXi column_of;  // n x n
  std::vector<Vector> beliefs;  // current state belief per chain

  int num_agents() const { return static_cast<int>(chain_of.rows()); }
};

void validate_network_channels(const NetworkChannels& net);

// One ordered pair's data-age recursion: age' = 1 + age (1 - v p).
double step_aoi(double age, double v, double p);

// Network-wide age update. v is the applied broadcast vector; p(j, i) is the
// realized transmission outcome of link j -> i (only read where v[j] = 1).
AoiState step_aoi(const AoiState& a, const Eigen::VectorXi& v, const Eigen::MatrixXi& p);

// Closed-form age after k steps via the signed power-set expansion
//   a_k = k + sum_{I subset of {0..k-1}} (-1)^|I| (a0 + min I) prod_{l in I} v_l p_l.
// Exact oracle companion to iterating step_aoi; refuses k > 20 (2^k terms).
double explicit_aoi(double a0, const std::vector<double>& v, const std::vector<double>& p);

// Exact expected accumulated weighted age over the plan horizon, by exhaustive
// enumeration of chain paths and transmission outcomes (value recursion with
// memoization). Refuses n > 4 or horizon > 8 — this is the oracle route.
double exact_objective(const AoiState& a, const Matrix& w, const SchedulePlan& plan,
                       const AdmissibleSet& adm, const NetworkChannels& net);

// Mean-distribution relaxation of exact_objective: per pair the recursion
// I_k = 1 + phi_{k-1} I_{k-1} with phi_m = 1 - v_m^j E[p at offset m], summed
// over k = 1..N and weighted. Exact whenever every chain has a single state.
double relaxed_objective(const AoiState& a, const Matrix& w, const SchedulePlan& plan,
                         const AdmissibleSet& adm, const NetworkChannels& net);

// N sequential minimizations of the relaxed objective: each round fixes the
// (slot, admissible-vector) pair that lowers the objective most, unfixed slots
// contributing no broadcast. Ties resolve to the lowest (slot, vector index).
SchedulePlan greedy_schedule(const AoiState& a, const Matrix& w, const AdmissibleSet& adm,
                             const NetworkChannels& net, int horizon);

// Carries the previous plan forward one slot and optimizes only the newly
// appended final slot. Requires a defined previous plan; the first planning
// step of a run bootstraps with greedy_schedule instead.
SchedulePlan commit_last_step(const SchedulePlan& prev, const AoiState& a, const Matrix& w,
                              const AdmissibleSet& adm, const NetworkChannels& net);

enum class ForecastMode { stochastic, robust };

// Predicted age trajectories the network controller hands to the subsystem
// controllers, one per weighted pair, offsets 1..N, with a constant fallback
// bound for offsets beyond the network horizon.
struct Forecast {
  struct PairForecast {
    int receiver = 0;
    int sender = 0;
    std::vector<int> entries;  // entries[l-1] = predicted age at offset l
  };
  std::vector<PairForecast> pairs;
  int fallback = 0;  // bound used for offsets beyond entries.size()

  // Predicted age at offset l >= 1 for pair (receiver, sender).
  int entry(int receiver, int sender, int l) const;
};

// Threshold-crossing forecasts: ages climb until the accumulated failure
// product of the planned broadcasts crosses the threshold, then a reset entry
// is emitted and the product restarts. Robust mode replaces the threshold by
// exact zero so only certain-success slots forecast resets.
Forecast generate_forecasts(const AoiState& a, const Matrix& w, const SchedulePlan& plan,
                            const AdmissibleSet& adm, const NetworkChannels& net, double tau,
                            ForecastMode mode, int fallback_age);

}  // namespace aoidmpc
