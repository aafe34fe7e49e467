// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
#include "aoidmpc/channel.hpp"

#include <stdexcept>

namespace aoidmpc {

void validate_channel(const MarkovChannel& chan) {
  const int s = chan.num_states();
  if (s == 0 || chan.T.cols() != s) throw std::invalid_argument("transition matrix must be square");
  if (chan.q.rows() != s) throw std::invalid_argument("success matrix must have one row per state");
  if (chan.q.cols() < 1) throw std::invalid_argument("channel needs at least one link");
  for (int i = 0; i < s; ++i) {
    if (chan.T.row(i).minCoeff() < -1e-12 || std::abs(chan.T.row(i).sum() - 1.0) > 1e-12)
      throw std::runtime_error("transition matrix row not stochastic");
  }
  if (chan.q.minCoeff() < 0.0 || chan.q.maxCoeff() > 1.0)
    throw std::invalid_argument("success probabilities must lie in [0, 1]");
}

int step_chain(const MarkovChannel& chan, int state, SeededRng& rng) {
  const int s = chan.num_states();
  if (state < 0 || state >= s) throw std::invalid_argument("chain state out of range");
  const double u = rng.uniform();
  double acc = 0.0;
  for (int j = 0; j < s; ++j) {
    acc += chan.T(state, j);
    if (u < acc) return j;
  }
  return s - 1;  // guard against accumulated rounding in the row sum
}

bool draw_transmission(const MarkovChannel& chan, int state, int link, SeededRng& rng) {
  if (state < 0 || state >= chan.num_states()) throw std::invalid_argument("chain state out of range");
  if (link < 0 || link >= chan.num_links()) throw std::invalid_argument("link index out of range");
  return rng.bernoulli(chan.q(state, link));
}

Vector unit_belief(int num_states, int state) {
  if (state < 0 || state >= num_states) throw std::invalid_argument("chain state out of range");
  Vector sigma = Vector::Zero(num_states);
  sigma[state] = 1.0;
  return sigma;
}

Vector propagate_belief(const MarkovChannel& chan, const Vector& sigma, int steps) {
  if (sigma.size() != chan.num_states()) throw std::invalid_argument("belief dimension mismatch");
  if (steps < 0) throw std::invalid_argument("steps must be nonnegative");
  Eigen::RowVectorXd row = sigma.transpose();
  for (int k = 0; k < steps; ++k) row = row * chan.T;
  return row.transpose();
}

double product_expectation(const MarkovChannel& chan, const Vector& sigma,
                           const std::vector<std::pair<int, int>>& offset_link) {
  if (sigma.size() != chan.num_states()) throw std::invalid_argument("belief dimension mismatch");
  Eigen::RowVectorXd row = sigma.transpose();
  int time_at = 0;       // chain time the current row refers to
  int last_offset = -1;  // previous factor's offset, for strictness
  for (const auto& [offset, link] : offset_link) {
    if (offset < 0 || offset <= last_offset)
      throw std::invalid_argument("offsets must be strictly increasing");
    if (link < 0 || link >= chan.num_links()) throw std::invalid_argument("link index out of range");
    for (int k = time_at; k < offset; ++k) row = row * chan.T;
    time_at = offset;
    row = row.cwiseProduct(chan.q.col(link).transpose());
    last_offset = offset;
  }
  return row.sum();
}

double mean_success_at(const MarkovChannel& chan, const Vector& sigma, int offset, int link) {
  return product_expectation(chan, sigma, {{offset, link}});
}

}  // namespace aoidmpc
