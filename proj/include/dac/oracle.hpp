#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dac/common.hpp"
#include "dac/features.hpp"
#include "dac/mamdp.hpp"

namespace dac {

// Everything in this header is an exact, enumeration-based computation on the
// tabular model; the learning loops never depend on it except for diagnostics.

namespace detail {

// Visit every joint action with its probability under the per-agent tables.
// f(ja, prob, digits) with digits the per-agent action indices.
template <class F>
void for_each_joint(const TabularMAMDP& mdp, const std::vector<Mat>& tabs, int s, F&& f) {
  const int n = mdp.n_agents();
  std::vector<int> digits(std::size_t(n), 0);
  const long nj = mdp.n_joint_actions();
  for (long ja = 0; ja < nj; ++ja) {
    double p = 1.0;
    for (int i = 0; i < n; ++i) p *= tabs[std::size_t(i)](s, digits[std::size_t(i)]);
    f(ja, p, digits);
    // increment mixed-radix counter, agent N-1 least significant
    for (int i = n - 1; i >= 0; --i) {
      if (++digits[std::size_t(i)] < mdp.action_counts()[std::size_t(i)]) break;
      digits[std::size_t(i)] = 0;
    }
  }
}

inline void check_pair_cap(const TabularMAMDP& mdp, long cap, const char* what) {
  if (mdp.n_pairs() > cap)
    throw CapacityError(std::string(what) + ": (state, joint action) enumeration exceeds cap");
}

}  // namespace detail

// State kernel P_theta(s'|s) = sum_a pi_theta(a|s) P(s'|s,a).
inline Mat policy_kernel(const TabularMAMDP& mdp, const SoftmaxPolicy& policy) {
  const int ns = mdp.n_states();
  Mat P = Mat::Zero(ns, ns);
  auto tabs = policy.prob_tables();
  for (int s = 0; s < ns; ++s) {
    detail::for_each_joint(mdp, tabs, s, [&](long ja, double p, const std::vector<int>&) {
      if (p == 0.0) return;
      auto rv = mdp.row(s, ja);
      for (long k = 0; k < rv.nnz; ++k) P(s, rv.next[k]) += p * rv.p[k];
    });
  }
  return P;
}

// Stationary distribution of a row-stochastic kernel by power iteration.
inline Vec stationary_dist(const Mat& kernel, double tol = 1e-12, long max_iter = 1000000,
                           const Vec* warm_start = nullptr) {
  const long ns = kernel.rows();
  Vec mu = (warm_start && warm_start->size() == ns)
               ? *warm_start
               : Vec::Constant(ns, 1.0 / double(ns));
  for (long it = 0; it < max_iter; ++it) {
    Vec next = kernel.transpose() * mu;
    next /= next.sum();
    double res = (next - mu).lpNorm<1>();
    mu = next;
    if (res <= tol) return mu;
  }
  throw MixingError(
      "stationary_dist: power iteration did not converge; the chain may not mix "
      "(irreducibility/aperiodicity assumption violated)");
}

inline Vec stationary_dist(const TabularMAMDP& mdp, const SoftmaxPolicy& policy) {
  return stationary_dist(policy_kernel(mdp, policy));
}

// Discounted state-visitation d(s) = (1-gamma) sum_k gamma^k P(s_k = s),
// computed from the linear system (I - gamma P^T) d = (1-gamma) mu0.
inline Vec discounted_visitation(const TabularMAMDP& mdp, const Mat& kernel,
                                 const Vec& mu0) {
  const long ns = kernel.rows();
  Mat A = Mat::Identity(ns, ns) - mdp.gamma() * kernel.transpose();
  Vec d = A.partialPivLu().solve((1.0 - mdp.gamma()) * mu0);
  return d;
}

inline Vec discounted_visitation(const TabularMAMDP& mdp, const SoftmaxPolicy& policy) {
  return discounted_visitation(mdp, policy_kernel(mdp, policy), mdp.init_dist());
}

// rbar_theta(s) = E_{a~pi}[rbar(s,a)]
inline Vec expected_mean_reward(const TabularMAMDP& mdp, const SoftmaxPolicy& policy) {
  const int ns = mdp.n_states();
  Vec r = Vec::Zero(ns);
  auto tabs = policy.prob_tables();
  for (int s = 0; s < ns; ++s) {
    double acc = 0.0;
    detail::for_each_joint(mdp, tabs, s, [&](long ja, double p, const std::vector<int>&) {
      acc += p * mdp.mean_reward(s, ja);
    });
    r[s] = acc;
  }
  return r;
}

// V(s) solving (I - gamma P_theta) V = rbar_theta.
inline Vec exact_value(const TabularMAMDP& mdp, const Mat& kernel, const Vec& rbar) {
  const long ns = kernel.rows();
  Mat A = Mat::Identity(ns, ns) - mdp.gamma() * kernel;
  return A.partialPivLu().solve(rbar);
}

inline Vec exact_value(const TabularMAMDP& mdp, const SoftmaxPolicy& policy) {
  return exact_value(mdp, policy_kernel(mdp, policy), expected_mean_reward(mdp, policy));
}

// J(theta) = E_{s0 ~ mu0}[V(s0)].
inline double exact_objective(const TabularMAMDP& mdp, const SoftmaxPolicy& policy) {
  return mdp.init_dist().dot(exact_value(mdp, policy));
}

// Critic population system: A = E_mu[phi(s)(gamma phi(s') - phi(s))^T],
// b = E[phi(s) rbar(s,a)].
struct CriticSystem {
  Mat A;
  Vec b;
};

inline CriticSystem critic_system(const TabularMAMDP& mdp, const SoftmaxPolicy& policy,
                                  const FeatureSet& features, const Mat& kernel,
                                  const Vec& mu, const Vec& rbar) {
  const long ns = mdp.n_states();
  // M = D_mu (gamma P - I), so A = Phi^T M Phi.
  Mat M = mdp.gamma() * kernel - Mat::Identity(ns, ns);
  for (long s = 0; s < ns; ++s) M.row(s) *= mu[s];
  CriticSystem sys;
  if (features.critic_tabular()) {
    sys.A = std::move(M);
    sys.b = mu.cwiseProduct(rbar);
  } else {
    const Mat& phi = features.critic_matrix();
    sys.A = phi.transpose() * M * phi;
    sys.b = phi.transpose() * mu.cwiseProduct(rbar);
  }
  return sys;
}

inline CriticSystem critic_system(const TabularMAMDP& mdp, const SoftmaxPolicy& policy,
                                  const FeatureSet& features) {
  Mat P = policy_kernel(mdp, policy);
  Vec mu = stationary_dist(P);
  Vec rbar = expected_mean_reward(mdp, policy);
  return critic_system(mdp, policy, features, P, mu, rbar);
}

// lambda_phi = -lambda_max((A + A^T)/2); positive iff A is negative definite.
inline double negative_definiteness_margin(const Mat& A) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.transpose()));
  return -es.eigenvalues().maxCoeff();
}

struct OptimalCritic {
  Vec omega;
  double residual = 0.0;           // ||A omega + b||
  double lambda_phi = 0.0;         // 0 if not requested
  bool bound_ok = true;            // ||omega|| <= r_max / lambda_phi
};

// TD(0) population fixed point omega* with A omega* + b = 0.
inline OptimalCritic optimal_critic(const TabularMAMDP& mdp, const SoftmaxPolicy& policy,
                                    const FeatureSet& features,
                                    bool with_lambda_phi = true) {
  CriticSystem sys = critic_system(mdp, policy, features);
  OptimalCritic out;
  out.omega = sys.A.partialPivLu().solve(-sys.b);
  out.residual = (sys.A * out.omega + sys.b).norm();
  if (with_lambda_phi) {
    out.lambda_phi = negative_definiteness_margin(sys.A);
    if (out.lambda_phi <= 1e-12)
      throw AssumptionError(
          "optimal_critic: A_{theta,phi} is not negative definite (sufficient "
          "exploration assumption violated at this policy)");
    out.bound_ok = out.omega.norm() <= mdp.r_max() / out.lambda_phi + 1e-9;
  }
  return out;
}

struct OptimalReward {
  Vec lambda;
  double residual = 0.0;
  double lambda_phi_r = 0.0;
  bool bound_ok = true;
};

// Least-squares fixed point of the reward estimator. With tabular reward
// features the normal system is diagonal and lambda* is the mean-reward table
// itself; the definiteness margin is the smallest pair weight mu(s)pi(a|s).
inline OptimalReward optimal_reward_estimator(const TabularMAMDP& mdp,
                                              const SoftmaxPolicy& policy,
                                              const FeatureSet& features,
                                              bool with_lambda_phi = true) {
  Mat P = policy_kernel(mdp, policy);
  Vec mu = stationary_dist(P);
  auto tabs = policy.prob_tables();
  OptimalReward out;
  if (features.reward_tabular()) {
    out.lambda = Vec::Zero(features.d_lambda());
    double min_w = std::numeric_limits<double>::infinity();
    for (int s = 0; s < mdp.n_states(); ++s) {
      detail::for_each_joint(mdp, tabs, s, [&](long ja, double p, const std::vector<int>&) {
        out.lambda[features.reward_index(s, ja)] = mdp.mean_reward(s, ja);
        min_w = std::min(min_w, mu[s] * p);
      });
    }
    out.residual = 0.0;
    if (with_lambda_phi) {
      out.lambda_phi_r = min_w;
      if (!(min_w > 0.0))
        throw AssumptionError(
            "optimal_reward_estimator: a (state, action) pair has zero visitation "
            "weight; the reward system is singular");
      out.bound_ok = out.lambda.norm() <= mdp.r_max() / out.lambda_phi_r + 1e-9;
    }
    return out;
  }
  const Mat& phi_r = features.reward_matrix();
  const int d = features.d_lambda();
  Mat G = Mat::Zero(d, d);  // sum w phi phi^T  (= -A)
  Vec b = Vec::Zero(d);
  for (int s = 0; s < mdp.n_states(); ++s) {
    detail::for_each_joint(mdp, tabs, s, [&](long ja, double p, const std::vector<int>&) {
      double w = mu[s] * p;
      if (w == 0.0) return;
      auto row = phi_r.row(features.reward_index(s, ja));
      G.noalias() += w * row.transpose() * row;
      b.noalias() += (w * mdp.mean_reward(s, ja)) * row.transpose();
    });
  }
  out.lambda = G.ldlt().solve(b);
  out.residual = (G * out.lambda - b).norm();
  if (with_lambda_phi) {
    out.lambda_phi_r = negative_definiteness_margin(-G);
    if (out.lambda_phi_r <= 1e-12)
      throw AssumptionError(
          "optimal_reward_estimator: A_{theta,phi_r} is not negative definite");
    out.bound_ok = out.lambda.norm() <= mdp.r_max() / out.lambda_phi_r + 1e-9;
  }
  return out;
}

inline constexpr long kDefaultPairCap = 100000;

// Exact per-agent policy gradients
//   grad_i = E_{s~d, a~pi}[ (1/(1-gamma)) A(s,a) psi_i(s,a^i) ],
// by full enumeration of (state, joint action) pairs.
inline std::vector<Vec> exact_policy_gradient_all(const TabularMAMDP& mdp,
                                                  const SoftmaxPolicy& policy,
                                                  long pair_cap = kDefaultPairCap) {
  detail::check_pair_cap(mdp, pair_cap, "exact_policy_gradient");
  const int n = mdp.n_agents();
  Mat P = policy_kernel(mdp, policy);
  Vec rbar = expected_mean_reward(mdp, policy);
  Vec V = exact_value(mdp, P, rbar);
  Vec d = discounted_visitation(mdp, P, mdp.init_dist());
  auto tabs = policy.prob_tables();
  const double inv1mg = 1.0 / (1.0 - mdp.gamma());

  std::vector<Vec> grads(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) grads[std::size_t(i)] = Vec::Zero(policy.d_theta(i));

  std::vector<std::vector<double>> coef(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    coef[std::size_t(i)].assign(std::size_t(policy.n_actions(i)), 0.0);

  for (int s = 0; s < mdp.n_states(); ++s) {
    for (int i = 0; i < n; ++i)
      std::fill(coef[std::size_t(i)].begin(), coef[std::size_t(i)].end(), 0.0);
    detail::for_each_joint(mdp, tabs, s,
                           [&](long ja, double p, const std::vector<int>& digits) {
      if (p == 0.0) return;
      double adv = mdp.mean_reward(s, ja) + mdp.gamma() * mdp.expected_next(s, ja, V) - V[s];
      double wgt = d[s] * p * adv * inv1mg;
      for (int i = 0; i < n; ++i)
        coef[std::size_t(i)][std::size_t(digits[std::size_t(i)])] += wgt;
    });
    // sum_a coef_a psi(s,a) collapses to coef_b - (sum coef) pi(b|s) per logit
    for (int i = 0; i < n; ++i) {
      double total = 0.0;
      for (double c : coef[std::size_t(i)]) total += c;
      for (int b = 0; b < policy.n_actions(i); ++b)
        grads[std::size_t(i)][policy.logit_index(i, s, b)] +=
            coef[std::size_t(i)][std::size_t(b)] - total * tabs[std::size_t(i)](s, b);
    }
  }
  return grads;
}

inline Vec exact_policy_gradient(const TabularMAMDP& mdp, const SoftmaxPolicy& policy,
                                 int agent, long pair_cap = kDefaultPairCap) {
  return exact_policy_gradient_all(mdp, policy, pair_cap)[std::size_t(agent)];
}

inline double grad_norm_sq(const std::vector<Vec>& grads) {
  double acc = 0.0;
  for (const auto& g : grads) acc += g.squaredNorm();
  return acc;
}

// Approximation power of the linear critic/reward classes at this policy.
struct AppError {
  double critic_mse = 0.0;       // E_mu |V - V_hat|^2
  double reward_mse_avg = 0.0;   // E_{mu x pi} |rbar - r_hat|^2
  double reward_mse_max_a = 0.0; // max_a E_mu |rbar(s,a) - r_hat(s,a)|^2
};

inline AppError app_error(const TabularMAMDP& mdp, const SoftmaxPolicy& policy,
                          const FeatureSet& features) {
  Mat P = policy_kernel(mdp, policy);
  Vec mu = stationary_dist(P);
  Vec rbar = expected_mean_reward(mdp, policy);
  Vec V = exact_value(mdp, P, rbar);
  CriticSystem cs = critic_system(mdp, policy, features, P, mu, rbar);
  Vec omega = cs.A.partialPivLu().solve(-cs.b);
  OptimalReward orw = optimal_reward_estimator(mdp, policy, features, false);

  AppError out;
  for (int s = 0; s < mdp.n_states(); ++s)
    out.critic_mse += mu[s] * sq(V[s] - features.value(omega, s));

  auto tabs = policy.prob_tables();
  std::vector<double> per_action(std::size_t(mdp.n_joint_actions()), 0.0);
  for (int s = 0; s < mdp.n_states(); ++s) {
    detail::for_each_joint(mdp, tabs, s, [&](long ja, double p, const std::vector<int>&) {
      double err = sq(mdp.mean_reward(s, ja) - features.reward_est(orw.lambda, s, ja));
      out.reward_mse_avg += mu[s] * p * err;
      per_action[std::size_t(ja)] += mu[s] * err;
    });
  }
  for (double e : per_action) out.reward_mse_max_a = std::max(out.reward_mse_max_a, e);
  return out;
}

// Fisher information of the stacked per-agent scores under d_pi x pi.
// Blocks couple only within a state, which keeps the assembly cheap.
inline Mat fisher_matrix(const TabularMAMDP& mdp, const SoftmaxPolicy& policy,
                         long pair_cap = kDefaultPairCap) {
  detail::check_pair_cap(mdp, pair_cap, "fisher_matrix");
  const int n = mdp.n_agents();
  long D = 0;
  std::vector<long> offset(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    offset[std::size_t(i)] = D;
    D += policy.d_theta(i);
  }
  if (D > 4096) throw CapacityError("fisher_matrix: stacked parameter dimension too large");

  Mat P = policy_kernel(mdp, policy);
  Vec d = discounted_visitation(mdp, P, mdp.init_dist());
  auto tabs = policy.prob_tables();
  Mat F = Mat::Zero(D, D);

  // nonzero support of psi for one (s, a): per agent, the s block
  std::vector<long> idx;
  std::vector<double> val;
  for (int s = 0; s < mdp.n_states(); ++s) {
    detail::for_each_joint(mdp, tabs, s,
                           [&](long ja, double p, const std::vector<int>& digits) {
      double w = d[s] * p;
      if (w == 0.0) return;
      idx.clear();
      val.clear();
      for (int i = 0; i < n; ++i) {
        for (int b = 0; b < policy.n_actions(i); ++b) {
          double x = (b == digits[std::size_t(i)] ? 1.0 : 0.0) - tabs[std::size_t(i)](s, b);
          idx.push_back(offset[std::size_t(i)] + policy.logit_index(i, s, b));
          val.push_back(x);
        }
      }
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < idx.size(); ++c)
          F(idx[r], idx[c]) += w * val[r] * val[c];
    });
  }
  return F;
}

struct NpgDirection {
  Vec h;                    // stacked direction
  double residual = 0.0;    // ||F h - grad||
  double lambda_min = 0.0;  // smallest eigenvalue of F
  bool clipped = false;     // spectrum was clipped (F numerically singular)
};

// Natural-gradient direction h = F^+ grad via a symmetric eigen-solve with
// spectral clipping. The tabular softmax parameterization is overcomplete, so
// F always has a null space; the gradient lies in range(F) and the clipped
// solve is the minimum-norm solution with residual at solver precision.
inline NpgDirection exact_npg_direction(const TabularMAMDP& mdp,
                                        const SoftmaxPolicy& policy,
                                        long pair_cap = kDefaultPairCap) {
  Mat F = fisher_matrix(mdp, policy, pair_cap);
  auto grads = exact_policy_gradient_all(mdp, policy, pair_cap);
  Vec g(F.rows());
  long at = 0;
  for (const auto& gi : grads) {
    g.segment(at, gi.size()) = gi;
    at += gi.size();
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(F);
  const Vec& ev = es.eigenvalues();
  double lmax = std::max(0.0, ev.maxCoeff());
  double tol = 1e-8 * std::max(1.0, lmax);
  NpgDirection out;
  out.lambda_min = ev.minCoeff();
  Vec c = es.eigenvectors().transpose() * g;
  Vec scaled = Vec::Zero(c.size());
  for (long i = 0; i < c.size(); ++i) {
    if (ev[i] > tol)
      scaled[i] = c[i] / ev[i];
    else
      out.clipped = true;
  }
  out.h = es.eigenvectors() * scaled;
  out.residual = (F * out.h - g).norm();
  return out;
}

// Projection radii from the population systems at the given policy, with a
// 2x safety factor.
inline Radii default_radii(const TabularMAMDP& mdp, const SoftmaxPolicy& policy,
                           const FeatureSet& features) {
  CriticSystem cs = critic_system(mdp, policy, features);
  double lphi = negative_definiteness_margin(cs.A);
  if (lphi <= 1e-12)
    throw AssumptionError("default_radii: critic system is not negative definite");
  OptimalReward orw = optimal_reward_estimator(mdp, policy, features, true);
  Radii r;
  r.R_omega = 2.0 * mdp.r_max() / lphi;
  r.R_lambda = 2.0 * mdp.r_max() / orw.lambda_phi_r;
  return r;
}

}  // namespace dac
