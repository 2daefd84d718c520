#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dac/common.hpp"
#include "dac/mamdp.hpp"
#include "dac/rng.hpp"

namespace dac {

enum class FeatureMode { Tabular, Random };

// Critic features phi(s) and reward-estimator features phi_r(s,a), both with
// norm at most 1. Tabular mode is one-hot and is represented structurally
// (nothing is materialized); random mode stores unit-norm Gaussian rows.
class FeatureSet {
 public:
  static FeatureSet make(const TabularMAMDP& mdp, FeatureMode critic_mode, int d_omega,
                         FeatureMode reward_mode, int d_lambda, std::uint64_t seed) {
    FeatureSet f;
    f.n_states_ = mdp.n_states();
    f.n_pairs_ = mdp.n_pairs();
    f.critic_mode_ = critic_mode;
    f.reward_mode_ = reward_mode;
    Rng rng(detail::splitmix64(seed ^ 0x8f1c77a5b2d3e941ULL));
    if (critic_mode == FeatureMode::Tabular) {
      f.d_omega_ = mdp.n_states();
    } else {
      if (d_omega < 1 || d_omega > mdp.n_states())
        throw ConfigError("features: random critic dimension must lie in [1, |S|]");
      f.d_omega_ = d_omega;
      f.phi_ = random_rows(mdp.n_states(), d_omega, rng);
    }
    if (reward_mode == FeatureMode::Tabular) {
      if (mdp.n_pairs() > (1L << 31))
        throw CapacityError("features: tabular reward features need |S|*|A| indexable");
      f.d_lambda_ = int(mdp.n_pairs());
    } else {
      if (d_lambda < 1 || d_lambda > mdp.n_pairs())
        throw ConfigError("features: random reward dimension must lie in [1, |S||A|]");
      f.d_lambda_ = d_lambda;
      f.phi_r_ = random_rows(mdp.n_pairs(), d_lambda, rng);
    }
    return f;
  }

  static FeatureSet tabular(const TabularMAMDP& mdp) {
    return make(mdp, FeatureMode::Tabular, 0, FeatureMode::Tabular, 0, 0);
  }

  int d_omega() const { return d_omega_; }
  int d_lambda() const { return d_lambda_; }
  bool critic_tabular() const { return critic_mode_ == FeatureMode::Tabular; }
  bool reward_tabular() const { return reward_mode_ == FeatureMode::Tabular; }
  long reward_index(int s, long ja) const { return long(s) * (n_pairs_ / n_states_) + ja; }

  // phi(s)^T omega
  double value(const Vec& omega, int s) const {
    return critic_tabular() ? omega[s] : phi_.row(s).dot(omega);
  }

  // phi_r(s,a)^T lambda
  double reward_est(const Vec& lambda, int s, long ja) const {
    return reward_tabular() ? lambda[reward_index(s, ja)]
                            : phi_r_.row(reward_index(s, ja)).dot(lambda);
  }

  // acc += c * phi(s)
  void add_scaled_critic(Vec& acc, int s, double c) const {
    if (critic_tabular())
      acc[s] += c;
    else
      acc += c * phi_.row(s).transpose();
  }

  // acc += c * phi_r(s,a)
  void add_scaled_reward(Vec& acc, int s, long ja, double c) const {
    if (reward_tabular())
      acc[reward_index(s, ja)] += c;
    else
      acc += c * phi_r_.row(reward_index(s, ja)).transpose();
  }

  Vec critic_vec(int s) const {
    if (critic_tabular()) {
      Vec v = Vec::Zero(d_omega_);
      v[s] = 1.0;
      return v;
    }
    return phi_.row(s).transpose();
  }

  Vec reward_vec(int s, long ja) const {
    if (reward_tabular()) {
      Vec v = Vec::Zero(d_lambda_);
      v[reward_index(s, ja)] = 1.0;
      return v;
    }
    return phi_r_.row(reward_index(s, ja)).transpose();
  }

  const Mat& critic_matrix() const { return phi_; }    // random mode only
  const Mat& reward_matrix() const { return phi_r_; }  // random mode only

 private:
  static Mat random_rows(long rows, int d, Rng& rng) {
    Mat m(rows, d);
    for (long r = 0; r < rows; ++r) {
      double norm2 = 0.0;
      for (int c = 0; c < d; ++c) {
        m(r, c) = rng.normal();
        norm2 += sq(m(r, c));
      }
      double norm = std::sqrt(norm2);
      if (norm == 0.0) {
        m(r, 0) = 1.0;
      } else {
        m.row(r) /= norm;
      }
    }
    return m;
  }

  FeatureMode critic_mode_ = FeatureMode::Tabular;
  FeatureMode reward_mode_ = FeatureMode::Tabular;
  int d_omega_ = 0, d_lambda_ = 0;
  int n_states_ = 0;
  long n_pairs_ = 0;
  Mat phi_;    // n_states x d_omega
  Mat phi_r_;  // n_pairs x d_lambda
};

inline double value_estimate(const Vec& phi, const Vec& omega) {
  if (phi.size() != omega.size()) throw ContractError("value_estimate: dimension mismatch");
  return phi.dot(omega);
}

inline double reward_estimate(const Vec& phi_r, const Vec& lambda) {
  if (phi_r.size() != lambda.size())
    throw ContractError("reward_estimate: dimension mismatch");
  return phi_r.dot(lambda);
}

// Euclidean projection onto the ball of radius R.
inline Vec project_ball(const Vec& v, double R) {
  if (R <= 0.0) throw ContractError("project_ball: radius must be positive");
  double n = v.norm();
  if (n <= R) return v;
  return v * (R / n);
}

// Critic and reward-estimator projection radii.
struct Radii {
  double R_omega = 0.0;
  double R_lambda = 0.0;
};

// Per-agent tabular softmax policy: logits are theta entries indexed by
// (state, action), i.e. action features are one-hot over (s, a^i) pairs.
// Action probabilities are strictly positive for any finite theta.
class SoftmaxPolicy {
 public:
  SoftmaxPolicy(int n_states, std::vector<int> action_counts)
      : n_states_(n_states), action_counts_(std::move(action_counts)) {
    theta_.resize(action_counts_.size());
    for (std::size_t i = 0; i < action_counts_.size(); ++i)
      theta_[i] = Vec::Zero(long(n_states_) * action_counts_[i]);
  }

  static SoftmaxPolicy uniform_for(const TabularMAMDP& mdp) {
    return SoftmaxPolicy(mdp.n_states(), mdp.action_counts());
  }

  int n_agents() const { return int(action_counts_.size()); }
  int n_states() const { return n_states_; }
  int n_actions(int agent) const { return action_counts_[std::size_t(agent)]; }
  long d_theta(int agent) const { return theta_[std::size_t(agent)].size(); }
  Vec& theta(int agent) { return theta_[std::size_t(agent)]; }
  const Vec& theta(int agent) const { return theta_[std::size_t(agent)]; }
  long logit_index(int agent, int s, int a) const {
    return long(s) * action_counts_[std::size_t(agent)] + a;
  }

  // pi_{theta^i}(.|s), computed with max-subtracted logits.
  Vec probs(int agent, int s) const {
    const Vec& th = theta_[std::size_t(agent)];
    const int na = action_counts_[std::size_t(agent)];
    Vec p(na);
    double mx = -1e300;
    for (int a = 0; a < na; ++a) mx = std::max(mx, th[logit_index(agent, s, a)]);
    double sum = 0.0;
    for (int a = 0; a < na; ++a) {
      p[a] = std::exp(th[logit_index(agent, s, a)] - mx);
      sum += p[a];
    }
    p /= sum;
    return p;
  }

  double log_prob(int agent, int s, int a) const {
    const Vec& th = theta_[std::size_t(agent)];
    const int na = action_counts_[std::size_t(agent)];
    double mx = -1e300;
    for (int b = 0; b < na; ++b) mx = std::max(mx, th[logit_index(agent, s, b)]);
    double sum = 0.0;
    for (int b = 0; b < na; ++b) sum += std::exp(th[logit_index(agent, s, b)] - mx);
    return th[logit_index(agent, s, a)] - mx - std::log(sum);
  }

  // Score psi(s,a^i) = x(s,a^i) - sum_b pi(b|s) x(s,b) as a dense vector.
  Vec score(int agent, int s, int a) const {
    Vec g = Vec::Zero(d_theta(agent));
    add_scaled_score(agent, s, a, 1.0, g);
    return g;
  }

  // acc += c * psi(s,a^i); touches only the one state block.
  void add_scaled_score(int agent, int s, int a, double c, Vec& acc) const {
    Vec p = probs(agent, s);
    const int na = action_counts_[std::size_t(agent)];
    for (int b = 0; b < na; ++b) {
      double w = (b == a) ? 1.0 - p[b] : -p[b];
      acc[logit_index(agent, s, b)] += c * w;
    }
  }

  // psi(s,a^i)^T v without materializing the score.
  double score_dot(int agent, int s, int a, const Vec& v) const {
    Vec p = probs(agent, s);
    double acc = v[logit_index(agent, s, a)];
    for (int b = 0; b < action_counts_[std::size_t(agent)]; ++b)
      acc -= p[b] * v[logit_index(agent, s, b)];
    return acc;
  }

  int sample_action(int agent, int s, Rng& rng) const {
    return rng.categorical(probs(agent, s));
  }

  std::vector<int> sample_joint(int s, Rng& rng) const {
    std::vector<int> a(static_cast<std::size_t>(n_agents()));
    for (int i = 0; i < n_agents(); ++i) a[std::size_t(i)] = sample_action(i, s, rng);
    return a;
  }

  double joint_prob(int s, const std::vector<int>& a) const {
    double p = 1.0;
    for (int i = 0; i < n_agents(); ++i) p *= probs(i, s)[a[std::size_t(i)]];
    return p;
  }

  // Per-agent probability tables for every state; used by oracle enumeration.
  std::vector<Mat> prob_tables() const {
    std::vector<Mat> tabs(static_cast<std::size_t>(n_agents()));
    for (int i = 0; i < n_agents(); ++i) {
      Mat t(n_states_, action_counts_[std::size_t(i)]);
      for (int s = 0; s < n_states_; ++s) t.row(s) = probs(i, s).transpose();
      tabs[std::size_t(i)] = std::move(t);
    }
    return tabs;
  }

 private:
  int n_states_;
  std::vector<int> action_counts_;
  std::vector<Vec> theta_;
};

// Fresh transition with the state drawn from a caller-supplied distribution
// (stationary or discounted-visitation, both from the oracle).
inline TransitionSample sample_iid(const TabularMAMDP& mdp, const Vec& dist,
                                   const SoftmaxPolicy& policy, Rng& rng) {
  if (dist.size() != mdp.n_states() || std::abs(dist.sum() - 1.0) > 1e-9 ||
      dist.minCoeff() < -1e-15)
    throw ContractError("sample_iid: dist is not a probability vector over S");
  TransitionSample ts;
  ts.s = rng.categorical(dist);
  ts.action = policy.sample_joint(ts.s, rng);
  ts.s_next = mdp.sample_next(ts.s, mdp.encode_action(ts.action), rng);
  return ts;
}

// One step along the shared online trajectory.
inline TransitionSample sample_markov(const TabularMAMDP& mdp, int s,
                                      const SoftmaxPolicy& policy, Rng& rng) {
  TransitionSample ts;
  ts.s = s;
  ts.action = policy.sample_joint(s, rng);
  ts.s_next = mdp.sample_next(s, mdp.encode_action(ts.action), rng);
  return ts;
}

}  // namespace dac
