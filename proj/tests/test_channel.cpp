// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Channel tests. Joint expectations are checked against an independent oracle
// that enumerates every chain path of the required length and sums
// probability-weighted products — no shared code with the implementation.

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "aoidmpc/channel.hpp"
#include "aoidmpc/rng.hpp"
#include "doctest.h"

using namespace aoidmpc;

namespace {

// Exhaustive path-enumeration oracle for E[prod_i q_{link_i}(X_{offset_i})].
double path_enum_oracle(const MarkovChannel& chan, const Vector& sigma,
                        const std::vector<std::pair<int, int>>& offset_link) {
  const int s = chan.num_states();
  const int horizon = offset_link.empty() ? 0 : offset_link.back().first;
  double total = 0.0;
  // Depth-first over paths (x_0, ..., x_horizon).
  std::vector<int> path(static_cast<size_t>(horizon) + 1, 0);
  std::function<void(int, double)> recurse = [&](int t, double weight) {
    if (weight == 0.0) return;
    if (t == horizon + 1) {
      double prod = weight;
      for (const auto& [offset, link] : offset_link) prod *= chan.q(path[offset], link);
      total += prod;
      return;
    }
    for (int x = 0; x < s; ++x) {
      path[t] = x;
      const double w = (t == 0) ? sigma[x] : chan.T(path[t - 1], x);
      recurse(t + 1, weight * w);
    }
  };
  recurse(0, 1.0);
  return total;
}

MarkovChannel two_state_channel() {
  MarkovChannel chan;
  chan.T = Matrix(2, 2);
  chan.T << 0.9, 0.1, 0.3, 0.7;
  chan.q = Matrix(2, 2);
  chan.q << 1.0, 0.8, 0.2, 0.5;
  return chan;
}

MarkovChannel random_channel(SeededRng& rng, int states, int links) {
  MarkovChannel chan;
  chan.T = Matrix(states, states);
  chan.q = Matrix(states, links);
  for (int i = 0; i < states; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < states; ++j) {
      chan.T(i, j) = 0.05 + rng.uniform();
      row_sum += chan.T(i, j);
    }
    chan.T.row(i) /= row_sum;
    // Renormalization leaves rounding residue; pin the row sum exactly.
    chan.T(i, states - 1) += 1.0 - chan.T.row(i).sum();
    for (int l = 0; l < links; ++l) chan.q(i, l) = rng.uniform();
  }
  return chan;
}

}  // namespace

TEST_CASE("channel: validation accepts good chains and names bad rows") {
  MarkovChannel chan = two_state_channel();
  CHECK_NOTHROW(validate_channel(chan));

  MarkovChannel bad = chan;
  bad.T(0, 0) = 0.5;  // row 0 now sums to 0.6
  CHECK_THROWS_WITH_AS(validate_channel(bad), "transition matrix row not stochastic",
                       std::runtime_error);

  bad = chan;
  bad.T(1, 0) = -0.1;
  bad.T(1, 1) = 1.1;
  CHECK_THROWS_WITH_AS(validate_channel(bad), "transition matrix row not stochastic",
                       std::runtime_error);

  bad = chan;
  bad.q(0, 0) = 1.5;
  CHECK_THROWS_AS(validate_channel(bad), std::invalid_argument);
}

TEST_CASE("channel: deterministic cycle steps through its period") {
  // T(i, (i+1) mod 4) = 1 gives a deterministic 4-cycle.
  MarkovChannel chan;
  chan.T = Matrix::Zero(4, 4);
  for (int i = 0; i < 4; ++i) chan.T(i, (i + 1) % 4) = 1.0;
  chan.q = Matrix::Constant(4, 1, 0.5);
  validate_channel(chan);

  SeededRng rng(7);
  int state = 0;
  for (int k = 1; k <= 12; ++k) {
    state = step_chain(chan, state, rng);
    CHECK(state == k % 4);
  }
}

TEST_CASE("channel: step_chain matches transition row frequencies") {
  const MarkovChannel chan = two_state_channel();
  SeededRng rng(123456);
  const int draws = 20000;
  for (int s0 = 0; s0 < 2; ++s0) {
    int to_zero = 0;
    for (int k = 0; k < draws; ++k)
      if (step_chain(chan, s0, rng) == 0) ++to_zero;
    const double freq = static_cast<double>(to_zero) / draws;
    // Three-sigma band around the true row probability.
    const double p = chan.T(s0, 0);
    CHECK(std::abs(freq - p) <= 3.0 * std::sqrt(p * (1.0 - p) / draws));
  }
}

TEST_CASE("channel: transmission draws consume one uniform each and hit edge cases") {
  MarkovChannel chan;
  chan.T = Matrix::Ones(1, 1);
  chan.q = Matrix(1, 2);
  chan.q << 1.0, 0.0;
  SeededRng rng(9);
  for (int k = 0; k < 50; ++k) {
    CHECK(draw_transmission(chan, 0, 0, rng));        // q = 1 always succeeds
    CHECK_FALSE(draw_transmission(chan, 0, 1, rng));  // q = 0 never succeeds
  }
  // Stream position advanced exactly 100 draws: compare with a twin stream.
  SeededRng twin(9);
  for (int k = 0; k < 100; ++k) twin.uniform();
  CHECK(rng.next_u64() == twin.next_u64());
}

TEST_CASE("channel: single-state chain collapses products to powers") {
  MarkovChannel chan;
  chan.T = Matrix::Ones(1, 1);
  chan.q = Matrix(1, 1);
  chan.q << 0.7;
  const Vector sigma = unit_belief(1, 0);
  CHECK(mean_success_at(chan, sigma, 5, 0) == doctest::Approx(0.7).epsilon(1e-12));
  const double e = product_expectation(chan, sigma, {{0, 0}, {1, 0}, {2, 0}});
  CHECK(e == doctest::Approx(0.7 * 0.7 * 0.7).epsilon(1e-12));
}

TEST_CASE("channel: product expectations match the path-enumeration oracle") {
  SeededRng rng(0xBEEF01u);
  for (int instance = 0; instance < 25; ++instance) {
    const int states = 2 + static_cast<int>(rng.uniform() * 3);  // 2..4
    const int links = 1 + static_cast<int>(rng.uniform() * 2);   // 1..2
    const MarkovChannel chan = random_channel(rng, states, links);
    validate_channel(chan);

    // Random belief.
    Vector sigma(states);
    for (int i = 0; i < states; ++i) sigma[i] = 0.1 + rng.uniform();
    sigma /= sigma.sum();

    // Random strictly increasing offset/link lists, horizon <= 6.
    std::vector<std::pair<int, int>> factors;
    int offset = static_cast<int>(rng.uniform() * 2);  // may start at 0
    while (offset <= 6 && factors.size() < 4) {
      factors.emplace_back(offset, static_cast<int>(rng.uniform() * links));
      offset += 1 + static_cast<int>(rng.uniform() * 2);
    }
    REQUIRE(!factors.empty());

    const double fast = product_expectation(chan, sigma, factors);
    const double oracle = path_enum_oracle(chan, sigma, factors);
    CHECK(fast == doctest::Approx(oracle).epsilon(1e-12));

    // Single-factor route doubles as the mean_success_at oracle.
    const auto& [k0, l0] = factors.front();
    CHECK(mean_success_at(chan, sigma, k0, l0) ==
          doctest::Approx(path_enum_oracle(chan, sigma, {{k0, l0}})).epsilon(1e-12));
  }
}

TEST_CASE("channel: belief propagation matches chain powers and stays stochastic") {
  const MarkovChannel chan = two_state_channel();
  const Vector sigma0 = unit_belief(2, 1);
  Vector sigma = sigma0;
  for (int k = 1; k <= 6; ++k) {
    sigma = propagate_belief(chan, sigma, 1);
    const Vector direct = propagate_belief(chan, sigma0, k);
    CHECK((sigma - direct).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(sigma.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sigma.minCoeff() >= 0.0);
  }
}

TEST_CASE("channel: offset validation") {
  const MarkovChannel chan = two_state_channel();
  const Vector sigma = unit_belief(2, 0);
  CHECK_THROWS_AS(product_expectation(chan, sigma, {{2, 0}, {2, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(product_expectation(chan, sigma, {{3, 0}, {1, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(product_expectation(chan, sigma, {{-1, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(product_expectation(chan, sigma, {{0, 5}}), std::invalid_argument);
  CHECK(product_expectation(chan, sigma, {}) == doctest::Approx(1.0));
}
