// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
#include "aoidmpc/scheduler.hpp"

#include <functional>
#include <limits>
#include <map>
#include <stdexcept>

namespace aoidmpc {

namespace {

struct WeightedPair {
  int receiver = 0;
  int sender = 0;
  double weight = 0.0;
  int chain = 0;
  int column = 0;
};

std::vector<WeightedPair> collect_weighted_pairs(const Matrix& w, const NetworkChannels& net) {
  const int n = static_cast<int>(w.rows());
  if (w.cols() != n) throw std::invalid_argument("weight matrix must be square");
  if (net.chain_of.rows() != n || net.chain_of.cols() != n)
    throw std::invalid_argument("channel topology does not match weight matrix");
  std::vector<WeightedPair> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j || w(i, j) == 0.0) continue;
      if (w(i, j) < 0.0) throw std::invalid_argument("weights must be nonnegative");
      const int c = net.chain_of(i, j);
      if (c < 0) throw std::invalid_argument("weighted pair has no channel");
      pairs.push_back({i, j, w(i, j), c, net.column_of(i, j)});
    }
  return pairs;
}

const Eigen::VectorXi& resolve_slot(const SchedulePlan& plan, const AdmissibleSet& adm, int m) {
  const int c = plan.choice[m];
  if (c < 0 || c >= adm.size()) throw std::invalid_argument("plan slot outside admissible set");
  return adm.vectors[c];
}

// Mean success probability per pair and horizon offset, computed once per
// planning call: qbar(p, m) = belief_m . q_col where belief_m = belief T^m.
struct SuccessTable {
  std::vector<WeightedPair> pairs;
  Matrix qbar;  // pairs x horizon
};

SuccessTable build_success_table(const Matrix& w, const NetworkChannels& net, int horizon) {
  SuccessTable table;
  table.pairs = collect_weighted_pairs(w, net);
  table.qbar = Matrix::Zero(static_cast<int>(table.pairs.size()), horizon);
  // Belief rollout per chain, shared across pairs on the same chain.
  std::vector<std::vector<Eigen::RowVectorXd>> rows(net.chains.size());
  for (const auto& p : table.pairs) {
    auto& r = rows[p.chain];
    if (r.empty()) {
      r.resize(horizon);
      if (horizon > 0) r[0] = net.beliefs[p.chain].transpose();
      for (int m = 1; m < horizon; ++m) r[m] = r[m - 1] * net.chains[p.chain].T;
    }
  }
  for (size_t p = 0; p < table.pairs.size(); ++p) {
    const auto& pr = table.pairs[p];
    for (int m = 0; m < horizon; ++m)
      table.qbar(static_cast<int>(p), m) = rows[pr.chain][m] * net.chains[pr.chain].q.col(pr.column);
  }
  return table;
}

// Relaxed objective over a partially fixed plan: choice[m] = -1 means the
// slot is not yet fixed and contributes no broadcast (phi = 1).
double eval_relaxed(const SuccessTable& table, const AoiState& a, const std::vector<int>& choice,
                    const AdmissibleSet& adm) {
  const int horizon = static_cast<int>(choice.size());
  double total = 0.0;
  for (size_t p = 0; p < table.pairs.size(); ++p) {
    const auto& pr = table.pairs[p];
    double predicted = a.age(pr.receiver, pr.sender);
    double acc = 0.0;
    for (int k = 1; k <= horizon; ++k) {
      const int c = choice[k - 1];
      double phi = 1.0;
      if (c >= 0) {
        if (c >= adm.size()) throw std::invalid_argument("plan slot outside admissible set");
        if (adm.vectors[c][pr.sender] != 0) phi = 1.0 - table.qbar(static_cast<int>(p), k - 1);
      }
      predicted = 1.0 + predicted * phi;
      acc += predicted;
    }
    total += pr.weight * acc;
  }
  return total;
}

}  // namespace

AoiState fresh_aoi(int n) {
  AoiState a;
  a.age = Eigen::MatrixXi::Ones(n, n);
  return a;
}

void validate_admissible_set(const AdmissibleSet& adm, int n) {
  if (adm.vectors.empty()) throw std::invalid_argument("admissible set must be nonempty");
  bool has_zero = false;
  for (const auto& v : adm.vectors) {
    if (v.size() != n) throw std::invalid_argument("admissible vector dimension mismatch");
    if ((v.array() != 0).count() == 0) has_zero = true;
    for (int i = 0; i < n; ++i)
      if (v[i] != 0 && v[i] != 1) throw std::invalid_argument("admissible vectors must be binary");
  }
  if (!has_zero) throw std::invalid_argument("admissible set must contain the all-zero vector");
}

AdmissibleSet single_broadcaster_set(int n) {
  AdmissibleSet adm;
  adm.vectors.push_back(Eigen::VectorXi::Zero(n));
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXi e = Eigen::VectorXi::Zero(n);
    e[j] = 1;
    adm.vectors.push_back(e);
  }
  return adm;
}

void validate_network_channels(const NetworkChannels& net) {
  const int n = net.num_agents();
  if (net.chain_of.cols() != n || net.column_of.rows() != n || net.column_of.cols() != n)
    throw std::invalid_argument("channel topology matrices must be square and consistent");
  if (net.beliefs.size() != net.chains.size())
    throw std::invalid_argument("one belief per chain required");
  for (size_t c = 0; c < net.chains.size(); ++c) {
    validate_channel(net.chains[c]);
    if (net.beliefs[c].size() != net.chains[c].num_states())
      throw std::invalid_argument("belief dimension mismatch");
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int c = net.chain_of(i, j);
      if (c < -1 || c >= static_cast<int>(net.chains.size()))
        throw std::invalid_argument("chain index out of range");
      if (c >= 0 && (net.column_of(i, j) < 0 || net.column_of(i, j) >= net.chains[c].num_links()))
        throw std::invalid_argument("chain column out of range");
    }
}

double step_aoi(double age, double v, double p) { return 1.0 + age * (1.0 - v * p); }

AoiState step_aoi(const AoiState& a, const Eigen::VectorXi& v, const Eigen::MatrixXi& p) {
  const int n = a.size();
  if (v.size() != n || p.rows() != n || p.cols() != n)
    throw std::invalid_argument("broadcast/realization dimension mismatch");
  AoiState out = a;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        out.age(i, j) = 1;
        continue;
      }
      const bool delivered = v[j] != 0 && p(j, i) != 0;
      out.age(i, j) = delivered ? 1 : a.age(i, j) + 1;
    }
  return out;
}

double explicit_aoi(double a0, const std::vector<double>& v, const std::vector<double>& p) {
  if (v.size() != p.size()) throw std::invalid_argument("sequence length mismatch");
  const int k = static_cast<int>(v.size());
  if (k > 20) throw std::invalid_argument("explicit age expansion limited to 20 steps");
  if (k == 0) return a0;
  double sum = 0.0;
  for (unsigned mask = 0; mask < (1u << k); ++mask) {
    double prod = 1.0;
    int min_elem = 0;  // min of the empty set reads as 0
    bool first = true;
    for (int l = 0; l < k; ++l) {
      if (mask & (1u << l)) {
        if (first) {
          min_elem = l;
          first = false;
        }
        prod *= v[l] * p[l];
      }
    }
    const int sign = (__builtin_popcount(mask) % 2 == 0) ? 1 : -1;
    sum += sign * (a0 + min_elem) * prod;
  }
  return k + sum;
}

double exact_objective(const AoiState& a, const Matrix& w, const SchedulePlan& plan,
                       const AdmissibleSet& adm, const NetworkChannels& net) {
  const int n = a.size();
  const int horizon = plan.horizon();
  if (n > 4 || horizon > 8)
    throw std::invalid_argument("exact objective limited to 4 agents and horizon 8");
  validate_admissible_set(adm, n);
  const std::vector<WeightedPair> pairs = collect_weighted_pairs(w, net);
  if (pairs.empty() || horizon == 0) return 0.0;
  for (int m = 0; m < horizon; ++m) resolve_slot(plan, adm, m);

  // Chains actually referenced, remapped to compact slots.
  std::vector<int> used;
  std::vector<int> slot_of_chain(net.chains.size(), -1);
  for (const auto& p : pairs)
    if (slot_of_chain[p.chain] < 0) {
      slot_of_chain[p.chain] = static_cast<int>(used.size());
      used.push_back(p.chain);
    }
  const int nc = static_cast<int>(used.size());

  // Value recursion: expected future weighted age sum given step, joint chain
  // states, and current ages of the weighted pairs.
  std::map<std::vector<int>, double> memo;
  std::function<double(int, const std::vector<int>&, const std::vector<int>&)> value =
      [&](int m, const std::vector<int>& states, const std::vector<int>& ages) -> double {
    if (m == horizon) return 0.0;
    std::vector<int> key;
    key.reserve(1 + states.size() + ages.size());
    key.push_back(m);
    key.insert(key.end(), states.begin(), states.end());
    key.insert(key.end(), ages.begin(), ages.end());
    if (const auto it = memo.find(key); it != memo.end()) return it->second;

    const Eigen::VectorXi& v = adm.vectors[plan.choice[m]];
    std::vector<int> active;  // indices into `pairs` with a broadcasting sender
    for (size_t p = 0; p < pairs.size(); ++p)
      if (v[pairs[p].sender] != 0) active.push_back(static_cast<int>(p));

    double total = 0.0;
    for (unsigned mask = 0; mask < (1u << active.size()); ++mask) {
      double prob = 1.0;
      std::vector<int> next_ages = ages;
      for (size_t p = 0; p < pairs.size(); ++p) next_ages[p] = ages[p] + 1;
      for (size_t idx = 0; idx < active.size(); ++idx) {
        const auto& pr = pairs[active[idx]];
        const double q = net.chains[pr.chain].q(states[slot_of_chain[pr.chain]], pr.column);
        if (mask & (1u << idx)) {
          prob *= q;
          next_ages[active[idx]] = 1;
        } else {
          prob *= 1.0 - q;
        }
      }
      if (prob == 0.0) continue;
      double stage = 0.0;
      for (size_t p = 0; p < pairs.size(); ++p) stage += pairs[p].weight * next_ages[p];

      // Expectation over the joint successor chain state (chains independent).
      std::function<double(int, std::vector<int>&)> successors = [&](int c, std::vector<int>& ns) -> double {
        if (c == nc) return value(m + 1, ns, next_ages);
        double acc = 0.0;
        const Matrix& T = net.chains[used[c]].T;
        for (int s = 0; s < T.cols(); ++s) {
          const double t = T(states[c], s);
          if (t == 0.0) continue;
          ns[c] = s;
          acc += t * successors(c + 1, ns);
        }
        return acc;
      };
      std::vector<int> ns(nc, 0);
      total += prob * (stage + successors(0, ns));
    }
    memo.emplace(std::move(key), total);
    return total;
  };

  // Expectation over the initial joint chain state drawn from the beliefs.
  std::vector<int> ages0(pairs.size());
  for (size_t p = 0; p < pairs.size(); ++p) ages0[p] = a.age(pairs[p].receiver, pairs[p].sender);
  std::function<double(int, std::vector<int>&, double)> initial = [&](int c, std::vector<int>& st,
                                                                      double weight) -> double {
    if (c == nc) return weight * value(0, st, ages0);
    double acc = 0.0;
    const Vector& sigma = net.beliefs[used[c]];
    for (int s = 0; s < sigma.size(); ++s) {
      if (sigma[s] == 0.0) continue;
      st[c] = s;
      acc += initial(c + 1, st, weight * sigma[s]);
    }
    return acc;
  };
  std::vector<int> st(nc, 0);
  return initial(0, st, 1.0);
}

double relaxed_objective(const AoiState& a, const Matrix& w, const SchedulePlan& plan,
                         const AdmissibleSet& adm, const NetworkChannels& net) {
  validate_admissible_set(adm, a.size());
  for (int m = 0; m < plan.horizon(); ++m) resolve_slot(plan, adm, m);
  const SuccessTable table = build_success_table(w, net, plan.horizon());
  return eval_relaxed(table, a, plan.choice, adm);
}

SchedulePlan greedy_schedule(const AoiState& a, const Matrix& w, const AdmissibleSet& adm,
                             const NetworkChannels& net, int horizon) {
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  validate_admissible_set(adm, a.size());
  const SuccessTable table = build_success_table(w, net, horizon);

  SchedulePlan plan;
  plan.choice.assign(horizon, -1);
  for (int round = 0; round < horizon; ++round) {
    double best = std::numeric_limits<double>::infinity();
    int best_slot = -1, best_vec = -1;
    for (int slot = 0; slot < horizon; ++slot) {
      if (plan.choice[slot] >= 0) continue;
      for (int vi = 0; vi < adm.size(); ++vi) {
        plan.choice[slot] = vi;
        const double val = eval_relaxed(table, a, plan.choice, adm);
        plan.choice[slot] = -1;
        if (val < best) {  // strict: first minimum wins the (slot, vector) tie
          best = val;
          best_slot = slot;
          best_vec = vi;
        }
      }
    }
    plan.choice[best_slot] = best_vec;
  }
  return plan;
}

SchedulePlan commit_last_step(const SchedulePlan& prev, const AoiState& a, const Matrix& w,
                              const AdmissibleSet& adm, const NetworkChannels& net) {
  if (!prev.defined()) throw std::invalid_argument("previous plan undefined; bootstrap with greedy");
  const int horizon = prev.horizon();
  validate_admissible_set(adm, a.size());
  const SuccessTable table = build_success_table(w, net, horizon);

  SchedulePlan plan;
  plan.choice.assign(horizon, -1);
  for (int m = 0; m + 1 < horizon; ++m) plan.choice[m] = prev.choice[m + 1];

  double best = std::numeric_limits<double>::infinity();
  int best_vec = 0;
  for (int vi = 0; vi < adm.size(); ++vi) {
    plan.choice[horizon - 1] = vi;
    const double val = eval_relaxed(table, a, plan.choice, adm);
    if (val < best) {
      best = val;
      best_vec = vi;
    }
  }
  plan.choice[horizon - 1] = best_vec;
  return plan;
}

int Forecast::entry(int receiver, int sender, int l) const {
  if (l < 1) throw std::invalid_argument("forecast offsets start at 1");
  for (const auto& p : pairs) {
    if (p.receiver == receiver && p.sender == sender) {
      if (l <= static_cast<int>(p.entries.size())) return p.entries[l - 1];
      return fallback;
    }
  }
  throw std::invalid_argument("no forecast for the requested pair");
}

Forecast generate_forecasts(const AoiState& a, const Matrix& w, const SchedulePlan& plan,
                            const AdmissibleSet& adm, const NetworkChannels& net, double tau,
                            ForecastMode mode, int fallback_age) {
  if (tau < 0.0 || tau >= 1.0) throw std::invalid_argument("threshold must lie in [0, 1)");
  validate_admissible_set(adm, a.size());
  const int horizon = plan.horizon();
  for (int m = 0; m < horizon; ++m) resolve_slot(plan, adm, m);
  const SuccessTable table = build_success_table(w, net, horizon);

  Forecast fc;
  fc.fallback = fallback_age;
  for (size_t p = 0; p < table.pairs.size(); ++p) {
    const auto& pr = table.pairs[p];
    Forecast::PairForecast out;
    out.receiver = pr.receiver;
    out.sender = pr.sender;
    out.entries.assign(horizon, 0);

    // The failure product over offsets 0..h-1 covers receptions through slot
    // h-1, so a crossing at h places the reset entry AT offset h: the first
    // certain/assumed success slot is h-1 and its data is fresh at k+h. This
    // keeps every entry an upper bound on the realized age (the crossing slot
    // is exactly the first zero/threshold factor), which the reliability
    // property requires; after a reset the product restarts at 1.
    int prev = a.age(pr.receiver, pr.sender);
    double failure = 1.0;
    int first_attempt = 0;  // k_f within the current window; 0 = none yet
    for (int h = 1; h <= horizon; ++h) {
      double phi = 1.0;
      if (adm.vectors[plan.choice[h - 1]][pr.sender] != 0)
        phi = 1.0 - table.qbar(static_cast<int>(p), h - 1);
      failure *= phi;
      if (first_attempt == 0 && failure < 1.0) first_attempt = h;
      const bool crossing = (mode == ForecastMode::robust) ? (failure == 0.0) : (failure < tau);
      if (crossing) {
        out.entries[h - 1] = h - first_attempt + 1;
        failure = 1.0;
        first_attempt = 0;
      } else {
        out.entries[h - 1] = prev + 1;
      }
      prev = out.entries[h - 1];
    }
    fc.pairs.push_back(std::move(out));
  }
  return fc;
}

}  // namespace aoidmpc
