#pragma once

#include <vector>

#include "dac/common.hpp"
#include "dac/features.hpp"
#include "dac/mamdp.hpp"

namespace dac {

// Full network state: per-agent actor, critic, and reward-estimator vectors.
struct AgentParams {
  std::vector<Vec> theta;
  std::vector<Vec> omega;
  std::vector<Vec> lambda;

  static AgentParams zeros(const SoftmaxPolicy& policy, const FeatureSet& features) {
    AgentParams p;
    const int n = policy.n_agents();
    p.theta.resize(std::size_t(n));
    p.omega.assign(std::size_t(n), Vec::Zero(features.d_omega()));
    p.lambda.assign(std::size_t(n), Vec::Zero(features.d_lambda()));
    for (int i = 0; i < n; ++i) p.theta[std::size_t(i)] = Vec::Zero(policy.d_theta(i));
    return p;
  }

  Vec mean_omega() const {
    Vec m = Vec::Zero(omega.front().size());
    for (const auto& w : omega) m += w;
    return m / double(omega.size());
  }

  Vec mean_lambda() const {
    Vec m = Vec::Zero(lambda.front().size());
    for (const auto& l : lambda) m += l;
    return m / double(lambda.size());
  }
};

// Local TD error delta^i = r^i + gamma V_hat(s') - V_hat(s).
inline double td_error(const TransitionSample& ts, double r_i, const Vec& omega,
                       double gamma, const FeatureSet& features) {
  return r_i + gamma * features.value(omega, ts.s_next) - features.value(omega, ts.s);
}

// One projected TD(0) critic step. The update direction is evaluated at
// omega_eval (consensus output by default, or the pre-consensus iterate);
// omega_base is the point the step is taken from.
inline Vec critic_td_step(const TransitionSample& ts, const Vec& omega_base,
                          const Vec& omega_eval, double r_i, double gamma,
                          const FeatureSet& features, double beta, double R_omega) {
  double delta = td_error(ts, r_i, omega_eval, gamma, features);
  Vec next = omega_base;
  features.add_scaled_critic(next, ts.s, beta * delta);
  return project_ball(next, R_omega);
}

inline Vec critic_td_step(const TransitionSample& ts, const Vec& omega, double r_i,
                          double gamma, const FeatureSet& features, double beta,
                          double R_omega) {
  return critic_td_step(ts, omega, omega, r_i, gamma, features, beta, R_omega);
}

// One projected SGD step of the reward estimator; the direction does not
// depend on the next state.
inline Vec reward_estimator_step(const TransitionSample& ts, long ja,
                                 const Vec& lambda_base, const Vec& lambda_eval,
                                 double r_i, const FeatureSet& features, double eta,
                                 double R_lambda) {
  double resid = r_i - features.reward_est(lambda_eval, ts.s, ja);
  Vec next = lambda_base;
  features.add_scaled_reward(next, ts.s, ja, eta * resid);
  return project_ball(next, R_lambda);
}

inline Vec reward_estimator_step(const TransitionSample& ts, long ja, const Vec& lambda,
                                 double r_i, const FeatureSet& features, double eta,
                                 double R_lambda) {
  return reward_estimator_step(ts, ja, lambda, lambda, r_i, features, eta, R_lambda);
}

// Estimated advantage delta_hat = r_hat_lambda(s,a) + gamma V_hat(s') - V_hat(s).
inline double estimated_advantage(const TransitionSample& ts, long ja, const Vec& omega,
                                  const Vec& lambda, double gamma,
                                  const FeatureSet& features) {
  return features.reward_est(lambda, ts.s, ja) +
         gamma * features.value(omega, ts.s_next) - features.value(omega, ts.s);
}

// Actor ascent step along delta_hat * psi, using the freshly updated critic
// and estimator of the same iteration.
inline Vec actor_step(const TransitionSample& ts, long ja, const SoftmaxPolicy& policy,
                      int agent, const Vec& omega_next, const Vec& lambda_next,
                      double gamma, const FeatureSet& features, double alpha) {
  double adv = estimated_advantage(ts, ja, omega_next, lambda_next, gamma, features);
  Vec next = policy.theta(agent);
  policy.add_scaled_score(agent, ts.s, ts.action[std::size_t(agent)], alpha * adv, next);
  return next;
}

// Actor step of the noisy-reward variant: the gossiped global-reward estimate
// replaces the reward estimator.
inline Vec actor_step_noisy(const TransitionSample& ts, const SoftmaxPolicy& policy,
                            int agent, const Vec& omega_next, double r_tilde,
                            double gamma, const FeatureSet& features, double alpha) {
  double adv = r_tilde + gamma * features.value(omega_next, ts.s_next) -
               features.value(omega_next, ts.s);
  Vec next = policy.theta(agent);
  policy.add_scaled_score(agent, ts.s, ts.action[std::size_t(agent)], alpha * adv, next);
  return next;
}

}  // namespace dac
