// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "aoidmpc/linalg.hpp"
#include "aoidmpc/rng.hpp"

namespace aoidmpc {

// Finite-state Markov chain whose states carry one success probability per
// link. Several links sharing one chain model correlated channel quality.
struct MarkovChannel {
  Matrix T;  // row-stochastic transition matrix, S x S
  Matrix q;  // per-state success probabilities, S x L, entries in [0, 1]

  int num_states() const { return static_cast<int>(T.rows()); }
  int num_links() const { return static_cast<int>(q.cols()); }
};

// Throws std::runtime_error("transition matrix row not stochastic") when a row
// of T has negative mass or does not sum to one, and std::invalid_argument for
// shape mismatches or success probabilities outside [0, 1].
void validate_channel(const MarkovChannel& chan);

// Samples the successor state of `state`, consuming exactly one uniform draw.
int step_chain(const MarkovChannel& chan, int state, SeededRng& rng);

// Bernoulli transmission outcome for `link` in `state`; one draw per call.
bool draw_transmission(const MarkovChannel& chan, int state, int link, SeededRng& rng);

// Unit belief concentrated on `state` (the fully observed case).
Vector unit_belief(int num_states, int state);

// Belief after `steps` transitions: sigma' = sigma T^steps.
Vector propagate_belief(const MarkovChannel& chan, const Vector& sigma, int steps);

// E[ prod_i q_{link_i}(X_{offset_i}) ] where X_0 is distributed as `sigma` and
// offsets count transitions from now. Offsets must be strictly increasing;
// offset 0 applies the factor to the current belief directly.
double product_expectation(const MarkovChannel& chan, const Vector& sigma,
                           const std::vector<std::pair<int, int>>& offset_link);

// E[ q_link(X_offset) ], i.e. product_expectation with a single factor.
double mean_success_at(const MarkovChannel& chan, const Vector& sigma, int offset, int link);

}  // namespace aoidmpc
