#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dac/common.hpp"
#include "dac/rng.hpp"

namespace dac {

// One transition tuple (s, a, s') with a the joint action.
struct TransitionSample {
  int s = 0;
  std::vector<int> action;  // one entry per agent
  int s_next = 0;
};

// Finite networked multi-agent MDP over a shared global state. Transition
// rows are stored sparsely (one row per (state, joint action) pair); reward
// tables are dense. Immutable after construction.
class TabularMAMDP {
 public:
  TabularMAMDP(int n_agents, int n_states, std::vector<int> action_counts,
               std::vector<long> row_ptr, std::vector<int> next_state,
               std::vector<double> prob, Mat rewards, double gamma, double r_max,
               Vec init_dist)
      : n_agents_(n_agents),
        n_states_(n_states),
        action_counts_(std::move(action_counts)),
        row_ptr_(std::move(row_ptr)),
        next_state_(std::move(next_state)),
        prob_(std::move(prob)),
        rewards_(std::move(rewards)),
        gamma_(gamma),
        r_max_(r_max),
        init_dist_(std::move(init_dist)) {
    if (n_agents_ < 1 || n_states_ < 1) throw ConfigError("mdp: empty state or agent set");
    if (int(action_counts_.size()) != n_agents_)
      throw ConfigError("mdp: one action count per agent required");
    n_joint_ = 1;
    for (int c : action_counts_) {
      if (c < 1) throw ConfigError("mdp: action count must be positive");
      if (n_joint_ > (1L << 40) / c) throw CapacityError("mdp: joint action space too large");
      n_joint_ *= c;
    }
    if (gamma_ < 0.0 || gamma_ >= 1.0) throw ConfigError("mdp: gamma must lie in [0,1)");
    if (r_max_ <= 0.0) throw ConfigError("mdp: r_max must be positive");
    validate();
  }

  int n_agents() const { return n_agents_; }
  int n_states() const { return n_states_; }
  const std::vector<int>& action_counts() const { return action_counts_; }
  long n_joint_actions() const { return n_joint_; }
  double gamma() const { return gamma_; }
  double r_max() const { return r_max_; }
  const Vec& init_dist() const { return init_dist_; }
  long n_pairs() const { return long(n_states_) * n_joint_; }

  // Mixed-radix encoding of a joint action; agent 0 is the most significant.
  long encode_action(const std::vector<int>& a) const {
    long ja = 0;
    for (int i = 0; i < n_agents_; ++i) {
      if (a[std::size_t(i)] < 0 || a[std::size_t(i)] >= action_counts_[std::size_t(i)])
        throw ContractError("mdp: action index out of range");
      ja = ja * action_counts_[std::size_t(i)] + a[std::size_t(i)];
    }
    return ja;
  }

  std::vector<int> decode_action(long ja) const {
    std::vector<int> a(static_cast<std::size_t>(n_agents_));
    for (int i = n_agents_ - 1; i >= 0; --i) {
      a[std::size_t(i)] = int(ja % action_counts_[std::size_t(i)]);
      ja /= action_counts_[std::size_t(i)];
    }
    return a;
  }

  long pair_index(int s, long ja) const { return long(s) * n_joint_ + ja; }

  // Sparse transition row access.
  struct RowView {
    const int* next;
    const double* p;
    long nnz;
  };
  RowView row(int s, long ja) const {
    check_indices(s, ja);
    long r = pair_index(s, ja);
    long b = row_ptr_[std::size_t(r)], e = row_ptr_[std::size_t(r) + 1];
    return {next_state_.data() + b, prob_.data() + b, e - b};
  }

  double transition_prob(int s, long ja, int s_next) const {
    RowView rv = row(s, ja);
    for (long k = 0; k < rv.nnz; ++k)
      if (rv.next[k] == s_next) return rv.p[k];
    return 0.0;
  }

  // sum_{s'} P(s'|s,a) * v(s')
  double expected_next(int s, long ja, const Vec& v) const {
    RowView rv = row(s, ja);
    double acc = 0.0;
    for (long k = 0; k < rv.nnz; ++k) acc += rv.p[k] * v[rv.next[k]];
    return acc;
  }

  double reward(int agent, int s, long ja) const {
    return rewards_(agent, pair_index(s, ja));
  }

  // (1/N) sum_i r^i(s,a). Diagnostic/oracle use only; agents never see it.
  double mean_reward(int s, long ja) const {
    double acc = 0.0;
    for (int i = 0; i < n_agents_; ++i) acc += rewards_(i, pair_index(s, ja));
    return acc / double(n_agents_);
  }

  int sample_next(int s, long ja, Rng& rng) const {
    RowView rv = row(s, ja);
    double u = rng.uniform();
    double acc = 0.0;
    for (long k = 0; k + 1 < rv.nnz; ++k) {
      acc += rv.p[k];
      if (u < acc) return rv.next[k];
    }
    return rv.next[rv.nnz - 1];
  }

  int sample_initial(Rng& rng) const { return rng.categorical(init_dist_); }

 private:
  void check_indices(int s, long ja) const {
    if (s < 0 || s >= n_states_) throw ContractError("mdp: state index out of range");
    if (ja < 0 || ja >= n_joint_) throw ContractError("mdp: joint action index out of range");
  }

  void validate() const {
    if (long(row_ptr_.size()) != n_pairs() + 1)
      throw ConfigError("mdp: transition row table has wrong shape");
    for (long r = 0; r < n_pairs(); ++r) {
      double sum = 0.0;
      for (long k = row_ptr_[std::size_t(r)]; k < row_ptr_[std::size_t(r) + 1]; ++k) {
        if (prob_[std::size_t(k)] < 0.0)
          throw ConfigError("mdp: negative transition probability");
        if (next_state_[std::size_t(k)] < 0 || next_state_[std::size_t(k)] >= n_states_)
          throw ConfigError("mdp: transition target out of range");
        sum += prob_[std::size_t(k)];
      }
      if (std::abs(sum - 1.0) > 1e-12)
        throw ConfigError("mdp: transition row does not sum to 1");
    }
    if (rewards_.rows() != n_agents_ || rewards_.cols() != n_pairs())
      throw ConfigError("mdp: reward table has wrong shape");
    if (rewards_.cwiseAbs().maxCoeff() > r_max_ + 1e-12)
      throw AssumptionError("mdp: a local reward exceeds r_max");
    if (init_dist_.size() != n_states_ || init_dist_.minCoeff() < 0.0 ||
        std::abs(init_dist_.sum() - 1.0) > 1e-12)
      throw ConfigError("mdp: initial distribution is not a probability vector");
  }

  int n_agents_, n_states_;
  std::vector<int> action_counts_;
  long n_joint_ = 1;
  std::vector<long> row_ptr_;
  std::vector<int> next_state_;
  std::vector<double> prob_;
  Mat rewards_;  // n_agents x (n_states * n_joint)
  double gamma_, r_max_;
  Vec init_dist_;
};

// Builder used by the generators below and by JSON loading.
class MdpBuilder {
 public:
  MdpBuilder(int n_agents, int n_states, std::vector<int> action_counts, double gamma,
             double r_max)
      : n_agents_(n_agents),
        n_states_(n_states),
        action_counts_(std::move(action_counts)),
        gamma_(gamma),
        r_max_(r_max) {
    n_joint_ = 1;
    for (int c : action_counts_) n_joint_ *= c;
    rewards_ = Mat::Zero(n_agents_, long(n_states_) * n_joint_);
    init_dist_ = Vec::Constant(n_states_, 1.0 / double(n_states_));
    row_ptr_.assign(std::size_t(long(n_states_) * n_joint_) + 1, 0);
  }

  long n_joint() const { return n_joint_; }

  // Rows must be appended in row-major (s, ja) order.
  void add_row(const std::vector<std::pair<int, double>>& entries) {
    for (auto [sn, p] : entries) {
      next_state_.push_back(sn);
      prob_.push_back(p);
    }
    ++rows_added_;
    row_ptr_[std::size_t(rows_added_)] = long(next_state_.size());
  }

  void set_reward(int agent, int s, long ja, double r) {
    rewards_(agent, long(s) * n_joint_ + ja) = r;
  }

  void set_init_dist(Vec d) { init_dist_ = std::move(d); }

  TabularMAMDP build() {
    return TabularMAMDP(n_agents_, n_states_, action_counts_, std::move(row_ptr_),
                        std::move(next_state_), std::move(prob_), std::move(rewards_),
                        gamma_, r_max_, std::move(init_dist_));
  }

 private:
  int n_agents_, n_states_;
  std::vector<int> action_counts_;
  long n_joint_;
  double gamma_, r_max_;
  std::vector<long> row_ptr_;
  std::vector<int> next_state_;
  std::vector<double> prob_;
  Mat rewards_;
  Vec init_dist_;
  long rows_added_ = 0;
};

// Random test-bed MDP. Each transition row is Dirichlet-style (normalized
// exponential draws) with every entry floored at 1e-3 and renormalized, which
// makes the chain irreducible and aperiodic under any policy. Rewards are
// uniform in [-r_max, r_max]. Deterministic given the seed.
inline TabularMAMDP make_random_mamdp(int n_agents, int n_states,
                                      const std::vector<int>& action_counts,
                                      std::uint64_t seed, double r_max,
                                      double gamma = 0.95) {
  if (n_states < 2) throw ConfigError("make_random_mamdp: need at least 2 states");
  if (int(action_counts.size()) != n_agents)
    throw ConfigError("make_random_mamdp: one action count per agent required");
  for (int c : action_counts)
    if (c < 2) throw ConfigError("make_random_mamdp: need at least 2 actions per agent");
  if (r_max <= 0.0) throw ConfigError("make_random_mamdp: r_max must be positive");

  MdpBuilder b(n_agents, n_states, action_counts, gamma, r_max);
  Rng rng(seed);
  const double floor = 1e-3;
  for (int s = 0; s < n_states; ++s) {
    for (long ja = 0; ja < b.n_joint(); ++ja) {
      std::vector<double> p(static_cast<std::size_t>(n_states));
      double sum = 0.0;
      for (auto& x : p) {
        x = -std::log(1.0 - rng.uniform());  // Exp(1)
        sum += x;
      }
      for (auto& x : p) x = std::max(x / sum, floor);
      sum = std::accumulate(p.begin(), p.end(), 0.0);
      std::vector<std::pair<int, double>> row;
      row.reserve(p.size());
      for (int sn = 0; sn < n_states; ++sn) row.push_back({sn, p[std::size_t(sn)] / sum});
      b.add_row(row);
    }
  }
  for (int s = 0; s < n_states; ++s)
    for (long ja = 0; ja < b.n_joint(); ++ja)
      for (int i = 0; i < n_agents; ++i)
        b.set_reward(i, s, ja, rng.uniform(-r_max, r_max));
  return b.build();
}

// Cooperative navigation on a square grid: N agents, N landmarks, actions
// stay/up/down/left/right with boundary clamping, deterministic moves. Agent i
// is rewarded by the negative Manhattan distance to landmark i (scaled) and
// penalized per co-located other agent, all evaluated at the current state.
struct NavGridSpec {
  int side = 3;
  int n_agents = 1;
  std::vector<int> landmarks;  // cell index r*side+c per agent; empty -> spread
  double collision_penalty = 0.5;
  double dist_scale = 0.1;
  double gamma = 0.95;
  double r_max = 0.0;        // 0 -> natural bound, no clipping
  long state_cap = 1000000;  // tabular compilation cap on (side^2)^N

  std::vector<int> resolved_landmarks() const {
    if (!landmarks.empty()) return landmarks;
    int cells = side * side;
    std::vector<int> lm(static_cast<std::size_t>(n_agents));
    if (n_agents == 1) {
      lm[0] = (cells - 1) / 2;
    } else {
      for (int i = 0; i < n_agents; ++i)
        lm[std::size_t(i)] = int(long(i) * (cells - 1) / (n_agents - 1));
    }
    return lm;
  }
};

namespace navgrid {

inline int clamp_move(int cell, int action, int side) {
  int r = cell / side, c = cell % side;
  switch (action) {
    case 1: r = std::max(0, r - 1); break;         // up
    case 2: r = std::min(side - 1, r + 1); break;  // down
    case 3: c = std::max(0, c - 1); break;         // left
    case 4: c = std::min(side - 1, c + 1); break;  // right
    default: break;                                // stay
  }
  return r * side + c;
}

inline int manhattan(int a, int b, int side) {
  return std::abs(a / side - b / side) + std::abs(a % side - b % side);
}

// Reward of agent i at a joint cell configuration.
inline double reward_at(const NavGridSpec& spec, const std::vector<int>& cells,
                        const std::vector<int>& lm, int agent) {
  double r = -double(manhattan(cells[std::size_t(agent)], lm[std::size_t(agent)],
                               spec.side)) *
             spec.dist_scale;
  int collisions = 0;
  for (int j = 0; j < spec.n_agents; ++j)
    if (j != agent && cells[std::size_t(j)] == cells[std::size_t(agent)]) ++collisions;
  r -= spec.collision_penalty * double(collisions);
  if (spec.r_max > 0.0) r = std::clamp(r, -spec.r_max, spec.r_max);
  return r;
}

// Direct step without tabular compilation; usable beyond the state cap.
inline std::pair<std::vector<int>, std::vector<double>> step(
    const NavGridSpec& spec, const std::vector<int>& cells,
    const std::vector<int>& actions) {
  auto lm = spec.resolved_landmarks();
  std::vector<double> rewards(static_cast<std::size_t>(spec.n_agents));
  for (int i = 0; i < spec.n_agents; ++i) rewards[std::size_t(i)] = reward_at(spec, cells, lm, i);
  std::vector<int> next(static_cast<std::size_t>(spec.n_agents));
  for (int i = 0; i < spec.n_agents; ++i)
    next[std::size_t(i)] = clamp_move(cells[std::size_t(i)], actions[std::size_t(i)], spec.side);
  return {next, rewards};
}

}  // namespace navgrid

// Compile the navigation grid into a tabular MDP whose states enumerate joint
// agent positions (agent 0 most significant).
inline TabularMAMDP compile_nav_grid(const NavGridSpec& spec) {
  if (spec.side < 1 || spec.n_agents < 1) throw ConfigError("nav grid: empty spec");
  auto lm = spec.resolved_landmarks();
  if (int(lm.size()) != spec.n_agents)
    throw ConfigError("nav grid: landmark count must equal agent count");
  const long cells = long(spec.side) * spec.side;
  for (int c : lm)
    if (c < 0 || c >= cells) throw ConfigError("nav grid: landmark cell out of range");

  double n_states_f = std::pow(double(cells), double(spec.n_agents));
  if (n_states_f > double(spec.state_cap))
    throw CapacityError(
        "nav grid: joint state count exceeds the tabular cap; use the direct "
        "navgrid::step interface instead");
  long n_states = 1;
  for (int i = 0; i < spec.n_agents; ++i) n_states *= cells;

  double natural_bound =
      2.0 * double(spec.side - 1) * spec.dist_scale +
      spec.collision_penalty * double(spec.n_agents - 1);
  double r_max = spec.r_max > 0.0 ? spec.r_max : std::max(natural_bound, 1e-9);

  std::vector<int> action_counts(std::size_t(spec.n_agents), 5);
  MdpBuilder b(spec.n_agents, int(n_states), action_counts, spec.gamma, r_max);

  std::vector<int> pos(static_cast<std::size_t>(spec.n_agents));
  auto decode_state = [&](long s) {
    for (int i = spec.n_agents - 1; i >= 0; --i) {
      pos[std::size_t(i)] = int(s % cells);
      s /= cells;
    }
  };
  for (long s = 0; s < n_states; ++s) {
    decode_state(s);
    for (long ja = 0; ja < b.n_joint(); ++ja) {
      long jtmp = ja;
      long s_next = 0;
      // decode joint action in the same radix order as encode_action
      std::vector<int> act(static_cast<std::size_t>(spec.n_agents));
      for (int i = spec.n_agents - 1; i >= 0; --i) {
        act[std::size_t(i)] = int(jtmp % 5);
        jtmp /= 5;
      }
      for (int i = 0; i < spec.n_agents; ++i) {
        int nc = navgrid::clamp_move(pos[std::size_t(i)], act[std::size_t(i)], spec.side);
        s_next = s_next * cells + nc;
      }
      b.add_row({{int(s_next), 1.0}});
      for (int i = 0; i < spec.n_agents; ++i)
        b.set_reward(i, int(s), ja, navgrid::reward_at(spec, pos, lm, i));
    }
  }
  return b.build();
}

// Sample one environment step: s' ~ P(.|s,a), rewards read from the tables.
inline std::pair<int, std::vector<double>> step_env(const TabularMAMDP& mdp, int s,
                                                    const std::vector<int>& action,
                                                    Rng& rng) {
  long ja = mdp.encode_action(action);
  int s_next = mdp.sample_next(s, ja, rng);
  std::vector<double> rewards(static_cast<std::size_t>(mdp.n_agents()));
  for (int i = 0; i < mdp.n_agents(); ++i) rewards[std::size_t(i)] = mdp.reward(i, s, ja);
  return {s_next, rewards};
}

}  // namespace dac
