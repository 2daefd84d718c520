#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "dac/common.hpp"
#include "dac/features.hpp"
#include "dac/kernels.hpp"
#include "dac/mamdp.hpp"
#include "dac/metrics.hpp"
#include "dac/oracle.hpp"
#include "dac/rng.hpp"
#include "dac/schedule.hpp"
#include "dac/topology.hpp"

namespace dac {

enum class Sampling { Iid, Markovian };

// Where the TD/SGD directions are evaluated on consensus iterations: at the
// consensus output (Post, default) or at the pre-consensus iterate (Pre).
// The two coincide on consensus-free iterations.
enum class TdAt { Post, Pre };

// Multiplicative reward noise r~ = r (1 + z), z ~ N(0, sigma^2), plus the
// gossip round count used to spread it.
struct NoiseSpec {
  double sigma = 0.5;
  int K_r = 1;
};

struct NacParams {
  int N_a = 256;      // transition batch per direction solve
  int K_a = 50;       // projected gradient steps of the direction subproblem
  int K_z = 5;        // gossip rounds per score-product estimation
  double rho = 0.1;   // direction step size, at most 1/(2 C_psi^2) = 1/8
  double C_h = 100.0; // direction projection radius
  bool ascent = true; // + alpha h (ascent) vs - alpha h

  void validate() const {
    if (N_a < 1 || K_a < 1 || K_z < 0 || rho <= 0.0 || C_h <= 0.0)
      throw ConfigError("nac: all parameters must be positive");
    if (rho > 0.125 + 1e-12)
      throw ConfigError("nac: direction step size must not exceed 1/(2 C_psi^2) = 0.125");
  }
};

struct DiagSpec {
  long every = 100;
  bool exact_j = false;
  bool critic_gap = false;
  bool grad_norm = false;
  bool app_err = false;
  bool any() const { return exact_j || critic_gap || grad_norm || app_err; }
  bool fires(long k) const { return any() && every > 0 && (k % every) == 0; }
};

struct EngineConfig {
  long K = 0;
  int K_c = 1;
  Sampling sampling = Sampling::Markovian;
  TdAt td_at = TdAt::Post;
  int C_a = 1;  // actor steps per iteration
  int C_c = 1;  // critic/estimator steps per iteration
  std::uint64_t seed = 0;
  Radii radii{1.0, 1.0};
  DiagSpec diag;
  long snapshot_every = 0;
  long pair_cap = kDefaultPairCap;

  void validate() const {
    if (K < 0) throw ConfigError("engine: negative iteration count");
    if (K_c < 1) throw ConfigError("engine: consensus period must be at least 1");
    if (C_a < 1 || C_c < 1) throw ConfigError("engine: update multiplicities must be >= 1");
    if (radii.R_omega <= 0.0 || radii.R_lambda <= 0.0)
      throw ConfigError("engine: projection radii must be positive");
  }
};

struct RunResult {
  AgentParams initial;
  AgentParams final_params;
  std::vector<MetricsRecord> metrics;
  std::vector<std::pair<long, AgentParams>> snapshots;  // (iterations done, state)
};

namespace detail {

// Per-agent parameter family with fused consensus and incremental
// disagreement/norm bookkeeping. The sparse path assumes one-hot features
// (single-coordinate updates); dense updates fall back to full recomputes.
class ParamFamily {
 public:
  ParamFamily(int n, long dim, double R)
      : n_(n), R_(R), x_(std::size_t(n), Vec::Zero(dim)),
        mean_(Vec::Zero(dim)), sqnorm_(std::size_t(n), 0.0) {}

  void set(const std::vector<Vec>& init) {
    x_ = init;
    refresh();
  }

  const std::vector<Vec>& all() const { return x_; }
  const Vec& at(int i) const { return x_[std::size_t(i)]; }
  double coord(int i, long j) const { return x_[std::size_t(i)][j]; }

  const Vec& mean() {
    refresh_if_dirty();
    return mean_;
  }

  double disagreement() {
    refresh_if_dirty();
    return std::sqrt(std::max(0.0, dis2_));
  }

  // Simultaneous single-coordinate update x_i[j] += delta[i] for every agent.
  void coordinate_update(long j, const std::vector<double>& delta) {
    refresh_if_dirty();
    double c_old = column_dev2(j);
    double dsum = 0.0;
    for (int i = 0; i < n_; ++i) {
      double d = delta[std::size_t(i)];
      double& xc = x_[std::size_t(i)][j];
      sqnorm_[std::size_t(i)] += d * (2.0 * xc + d);
      xc += d;
      dsum += d;
    }
    mean_[j] += dsum / double(n_);
    dis2_ += column_dev2(j) - c_old;
    if (dis2_ < 0.0) dis2_ = 0.0;
    for (int i = 0; i < n_; ++i) maybe_project(i);
  }

  // Dense mutation: modify raw(i) in place, then call note_dense_update(i).
  Vec& raw(int i) { return x_[std::size_t(i)]; }
  void note_dense_update(int i) {
    dirty_ = true;
    double ex = x_[std::size_t(i)].squaredNorm();
    if (ex > R_ * R_) x_[std::size_t(i)] *= R_ / std::sqrt(ex);
  }

  // One gossip round, fused with exact bookkeeping recomputation. The
  // accumulation order matches consensus_round().
  void consensus(const Mat& w) {
    const long d = mean_.size();
    std::vector<double> vals(static_cast<std::size_t>(n_));
    std::vector<double> outs(static_cast<std::size_t>(n_));
    std::fill(sqnorm_.begin(), sqnorm_.end(), 0.0);
    dis2_ = 0.0;
    for (long j = 0; j < d; ++j) {
      for (int i = 0; i < n_; ++i) vals[std::size_t(i)] = x_[std::size_t(i)][j];
      for (int i = 0; i < n_; ++i) {
        double acc = 0.0;
        for (int k = 0; k < n_; ++k) acc += w(i, k) * vals[std::size_t(k)];
        outs[std::size_t(i)] = acc;
      }
      double m = 0.0;
      for (int i = 0; i < n_; ++i) {
        x_[std::size_t(i)][j] = outs[std::size_t(i)];
        sqnorm_[std::size_t(i)] += sq(outs[std::size_t(i)]);
        m += outs[std::size_t(i)];
      }
      m /= double(n_);
      mean_[j] = m;
      for (int i = 0; i < n_; ++i) dis2_ += sq(outs[std::size_t(i)] - m);
    }
    dirty_ = false;
  }

 private:
  double column_dev2(long j) const {
    double acc = 0.0;
    for (int i = 0; i < n_; ++i) acc += sq(x_[std::size_t(i)][j] - mean_[j]);
    return acc;
  }

  void maybe_project(int i) {
    // sqnorm_ carries rounding drift; confirm with an exact norm before
    // projecting so the invariant matches the pure kernel.
    if (sqnorm_[std::size_t(i)] > R_ * R_ * 0.998) {
      double ex = x_[std::size_t(i)].squaredNorm();
      if (ex > R_ * R_) {
        x_[std::size_t(i)] *= R_ / std::sqrt(ex);
        refresh();
      } else {
        sqnorm_[std::size_t(i)] = ex;
      }
    }
  }

  void refresh_if_dirty() {
    if (dirty_) refresh();
  }

  void refresh() {
    mean_.setZero();
    for (int i = 0; i < n_; ++i) mean_ += x_[std::size_t(i)];
    mean_ /= double(n_);
    dis2_ = 0.0;
    for (int i = 0; i < n_; ++i) {
      sqnorm_[std::size_t(i)] = x_[std::size_t(i)].squaredNorm();
      dis2_ += (x_[std::size_t(i)] - mean_).squaredNorm();
    }
    dirty_ = false;
  }

  int n_;
  double R_;
  std::vector<Vec> x_;
  Vec mean_;
  std::vector<double> sqnorm_;
  double dis2_ = 0.0;
  bool dirty_ = false;
};

// Lazily recomputed oracle quantities keyed by an actor-parameter version.
struct OracleCache {
  std::uint64_t version = std::numeric_limits<std::uint64_t>::max();
  bool has_kernel = false, has_mu = false, has_value = false, has_omega_star = false;
  Mat P;
  Vec rbar, mu, V, omega_star;

  void sync(std::uint64_t v) {
    if (v != version) {
      version = v;
      has_kernel = has_mu = has_value = has_omega_star = false;
    }
  }

  const Mat& kernel(const TabularMAMDP& mdp, const SoftmaxPolicy& policy) {
    if (!has_kernel) {
      P = policy_kernel(mdp, policy);
      rbar = expected_mean_reward(mdp, policy);
      has_kernel = true;
    }
    return P;
  }

  const Vec& stationary(const TabularMAMDP& mdp, const SoftmaxPolicy& policy) {
    if (!has_mu) {
      kernel(mdp, policy);
      Vec warm = mu;  // previous policy's distribution, if any
      mu = stationary_dist(P, 1e-12, 1000000, warm.size() == P.rows() ? &warm : nullptr);
      has_mu = true;
    }
    return mu;
  }

  const Vec& value(const TabularMAMDP& mdp, const SoftmaxPolicy& policy) {
    if (!has_value) {
      kernel(mdp, policy);
      V = exact_value(mdp, P, rbar);
      has_value = true;
    }
    return V;
  }

  const Vec& critic_fixed_point(const TabularMAMDP& mdp, const SoftmaxPolicy& policy,
                                const FeatureSet& features) {
    if (!has_omega_star) {
      stationary(mdp, policy);
      CriticSystem sys = critic_system(mdp, policy, features, P, mu, rbar);
      omega_star = sys.A.partialPivLu().solve(-sys.b);
      has_omega_star = true;
    }
    return omega_star;
  }
};

inline void fill_diagnostics(const TabularMAMDP& mdp, const SoftmaxPolicy& policy,
                             const FeatureSet& features, const DiagSpec& diag,
                             OracleCache& cache, std::uint64_t theta_version,
                             const Vec& omega_mean, long pair_cap, MetricsRecord& rec) {
  cache.sync(theta_version);
  if (diag.exact_j) rec.exact_j = mdp.init_dist().dot(cache.value(mdp, policy));
  if (diag.critic_gap)
    rec.critic_gap = (omega_mean - cache.critic_fixed_point(mdp, policy, features)).norm();
  if (diag.app_err) {
    const Vec& V = cache.value(mdp, policy);
    const Vec& mu = cache.stationary(mdp, policy);
    const Vec& ws = cache.critic_fixed_point(mdp, policy, features);
    double acc = 0.0;
    for (int s = 0; s < mdp.n_states(); ++s) acc += mu[s] * sq(V[s] - features.value(ws, s));
    rec.eps_app_c = acc;
  }
  if (diag.grad_norm)
    rec.grad_sq = grad_norm_sq(exact_policy_gradient_all(mdp, policy, pair_cap));
}

// Draws shared by all algorithm loops.
struct SamplerState {
  int s_cur = 0;

  TransitionSample draw(const TabularMAMDP& mdp, const SoftmaxPolicy& policy,
                        Sampling mode, OracleCache& cache, std::uint64_t theta_version,
                        Rng& rng) {
    if (mode == Sampling::Iid) {
      cache.sync(theta_version);
      return sample_iid(mdp, cache.stationary(mdp, policy), policy, rng);
    }
    TransitionSample ts = sample_markov(mdp, s_cur, policy, rng);
    s_cur = ts.s_next;
    return ts;
  }
};

inline AgentParams snapshot_params(const SoftmaxPolicy& policy, const ParamFamily& omega,
                                   const ParamFamily& lambda) {
  AgentParams p;
  const int n = policy.n_agents();
  p.theta.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) p.theta[std::size_t(i)] = policy.theta(i);
  p.omega = omega.all();
  p.lambda = lambda.all();
  return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Single-timescale decentralized AC with a per-agent reward estimator.
// Two-timescale behaviour is obtained purely through the schedule.
// ---------------------------------------------------------------------------
inline RunResult run_sdac_re(const TabularMAMDP& mdp, const WeightMatrix& W,
                             const FeatureSet& features, const SoftmaxPolicy& policy0,
                             const StepSchedule& sched, const EngineConfig& cfg,
                             const AgentParams* init = nullptr) {
  cfg.validate();
  if (W.n_nodes() != mdp.n_agents())
    throw ConfigError("engine: weight matrix size must equal the agent count");
  const int n = mdp.n_agents();

  SoftmaxPolicy policy = policy0;
  detail::ParamFamily omega(n, features.d_omega(), cfg.radii.R_omega);
  detail::ParamFamily lambda(n, features.d_lambda(), cfg.radii.R_lambda);
  if (init) {
    for (int i = 0; i < n; ++i) policy.theta(i) = init->theta[std::size_t(i)];
    omega.set(init->omega);
    lambda.set(init->lambda);
  }

  RunResult out;
  out.initial = detail::snapshot_params(policy, omega, lambda);
  out.metrics.reserve(std::size_t(cfg.K));

  Rng rng = Rng::stream(cfg.seed, 0);
  detail::OracleCache cache;
  detail::SamplerState sampler;
  sampler.s_cur = mdp.sample_initial(rng);
  std::uint64_t theta_version = 0;

  long samples = 0, comms = 0;
  double reward_sum = 0.0;
  std::vector<double> delta(static_cast<std::size_t>(n));
  std::vector<Vec> omega_pre, lambda_pre;

  for (long k = 0; k < cfg.K; ++k) {
    TransitionSample ts = sampler.draw(mdp, policy, cfg.sampling, cache, theta_version, rng);
    const long ja = mdp.encode_action(ts.action);
    samples += 1;

    const bool consensus_now = (k % cfg.K_c) == 0;
    if (consensus_now) {
      if (cfg.td_at == TdAt::Pre) {
        omega_pre = omega.all();
        lambda_pre = lambda.all();
      }
      omega.consensus(W.matrix());
      lambda.consensus(W.matrix());
      comms += 2;
    }
    const bool use_pre = consensus_now && cfg.td_at == TdAt::Pre;

    const double beta = sched.beta(k);
    const double eta = sched.eta(k);
    const double alpha = sched.alpha(k);

    // reward estimator steps
    for (int c = 0; c < cfg.C_c; ++c) {
      if (features.reward_tabular()) {
        const long idx = features.reward_index(ts.s, ja);
        for (int i = 0; i < n; ++i) {
          double est = (use_pre && c == 0) ? lambda_pre[std::size_t(i)][idx]
                                           : lambda.coord(i, idx);
          delta[std::size_t(i)] = eta * (mdp.reward(i, ts.s, ja) - est);
        }
        lambda.coordinate_update(idx, delta);
      } else {
        for (int i = 0; i < n; ++i) {
          const Vec& eval = (use_pre && c == 0) ? lambda_pre[std::size_t(i)] : lambda.at(i);
          double resid = mdp.reward(i, ts.s, ja) - features.reward_est(eval, ts.s, ja);
          features.add_scaled_reward(lambda.raw(i), ts.s, ja, eta * resid);
          lambda.note_dense_update(i);
        }
      }
    }

    // critic TD steps
    for (int c = 0; c < cfg.C_c; ++c) {
      if (features.critic_tabular()) {
        for (int i = 0; i < n; ++i) {
          const Vec& eval = (use_pre && c == 0) ? omega_pre[std::size_t(i)] : omega.at(i);
          double d = mdp.reward(i, ts.s, ja) + mdp.gamma() * eval[ts.s_next] - eval[ts.s];
          delta[std::size_t(i)] = beta * d;
        }
        omega.coordinate_update(ts.s, delta);
      } else {
        for (int i = 0; i < n; ++i) {
          const Vec& eval = (use_pre && c == 0) ? omega_pre[std::size_t(i)] : omega.at(i);
          double d = td_error(ts, mdp.reward(i, ts.s, ja), eval, mdp.gamma(), features);
          features.add_scaled_critic(omega.raw(i), ts.s, beta * d);
          omega.note_dense_update(i);
        }
      }
    }

    // actor steps with the freshly updated critic and estimator
    if (alpha != 0.0) {
      for (int i = 0; i < n; ++i) {
        double adv = estimated_advantage(ts, ja, omega.at(i), lambda.at(i), mdp.gamma(),
                                         features);
        for (int c = 0; c < cfg.C_a; ++c)
          policy.add_scaled_score(i, ts.s, ts.action[std::size_t(i)], alpha * adv,
                                  policy.theta(i));
      }
      ++theta_version;
    }

    MetricsRecord rec;
    rec.k = k;
    rec.samples = samples;
    rec.comms = comms;
    rec.reward_inst = mdp.mean_reward(ts.s, ja);
    reward_sum += rec.reward_inst;
    rec.reward_run = reward_sum / double(k + 1);
    rec.cons_omega = omega.disagreement();
    rec.cons_lambda = lambda.disagreement();
    if (cfg.diag.fires(k))
      detail::fill_diagnostics(mdp, policy, features, cfg.diag, cache, theta_version,
                               omega.mean(), cfg.pair_cap, rec);
    out.metrics.push_back(rec);

    if (cfg.snapshot_every > 0 && ((k + 1) % cfg.snapshot_every) == 0)
      out.snapshots.push_back({k + 1, detail::snapshot_params(policy, omega, lambda)});
  }

  out.final_params = detail::snapshot_params(policy, omega, lambda);
  return out;
}

// ---------------------------------------------------------------------------
// Noisy-reward variant: no reward estimator; each iteration the agents gossip
// multiplicatively perturbed local rewards for K_r rounds and the actor uses
// the gossiped global-reward estimate.
// ---------------------------------------------------------------------------
inline RunResult run_sdac_noi(const TabularMAMDP& mdp, const WeightMatrix& W,
                              const FeatureSet& features, const SoftmaxPolicy& policy0,
                              const StepSchedule& sched, const NoiseSpec& noise,
                              const EngineConfig& cfg, const AgentParams* init = nullptr) {
  cfg.validate();
  if (noise.sigma < 0.0 || noise.K_r < 1)
    throw ConfigError("noise: sigma must be >= 0 and K_r >= 1");
  if (W.n_nodes() != mdp.n_agents())
    throw ConfigError("engine: weight matrix size must equal the agent count");
  const int n = mdp.n_agents();

  SoftmaxPolicy policy = policy0;
  detail::ParamFamily omega(n, features.d_omega(), cfg.radii.R_omega);
  detail::ParamFamily lambda(n, 0, cfg.radii.R_lambda);  // unused, kept for snapshots
  if (init) {
    for (int i = 0; i < n; ++i) policy.theta(i) = init->theta[std::size_t(i)];
    omega.set(init->omega);
  }

  RunResult out;
  out.initial = detail::snapshot_params(policy, omega, lambda);
  out.metrics.reserve(std::size_t(cfg.K));

  Rng rng = Rng::stream(cfg.seed, 0);
  detail::OracleCache cache;
  detail::SamplerState sampler;
  sampler.s_cur = mdp.sample_initial(rng);
  std::uint64_t theta_version = 0;

  long samples = 0, comms = 0;
  double reward_sum = 0.0;
  std::vector<double> delta(static_cast<std::size_t>(n));
  std::vector<double> r_tilde(static_cast<std::size_t>(n));
  std::vector<Vec> omega_pre;

  for (long k = 0; k < cfg.K; ++k) {
    TransitionSample ts = sampler.draw(mdp, policy, cfg.sampling, cache, theta_version, rng);
    const long ja = mdp.encode_action(ts.action);
    samples += 1;

    const bool consensus_now = (k % cfg.K_c) == 0;
    if (consensus_now) {
      if (cfg.td_at == TdAt::Pre) omega_pre = omega.all();
      omega.consensus(W.matrix());
      comms += 1;
    }
    const bool use_pre = consensus_now && cfg.td_at == TdAt::Pre;

    // noisy local rewards and their gossip
    for (int i = 0; i < n; ++i) {
      double z = noise.sigma > 0.0 ? noise.sigma * rng.normal() : 0.0;
      r_tilde[std::size_t(i)] = mdp.reward(i, ts.s, ja) * (1.0 + z);
    }
    double mean0 = 0.0;
    for (double v : r_tilde) mean0 += v;
    mean0 /= double(n);
    double pre = 0.0;
    for (double v : r_tilde) pre += sq(v - mean0);
    r_tilde = scalar_gossip(r_tilde, W, noise.K_r);
    comms += noise.K_r;
    double post = 0.0;
    for (double v : r_tilde) post += sq(v - mean0);

    const double beta = sched.beta(k);
    const double alpha = sched.alpha(k);

    // critic TD steps on local rewards
    for (int c = 0; c < cfg.C_c; ++c) {
      if (features.critic_tabular()) {
        for (int i = 0; i < n; ++i) {
          const Vec& eval = (use_pre && c == 0) ? omega_pre[std::size_t(i)] : omega.at(i);
          double d = mdp.reward(i, ts.s, ja) + mdp.gamma() * eval[ts.s_next] - eval[ts.s];
          delta[std::size_t(i)] = beta * d;
        }
        omega.coordinate_update(ts.s, delta);
      } else {
        for (int i = 0; i < n; ++i) {
          const Vec& eval = (use_pre && c == 0) ? omega_pre[std::size_t(i)] : omega.at(i);
          double d = td_error(ts, mdp.reward(i, ts.s, ja), eval, mdp.gamma(), features);
          features.add_scaled_critic(omega.raw(i), ts.s, beta * d);
          omega.note_dense_update(i);
        }
      }
    }

    if (alpha != 0.0) {
      for (int i = 0; i < n; ++i) {
        double adv = r_tilde[std::size_t(i)] +
                     mdp.gamma() * features.value(omega.at(i), ts.s_next) -
                     features.value(omega.at(i), ts.s);
        for (int c = 0; c < cfg.C_a; ++c)
          policy.add_scaled_score(i, ts.s, ts.action[std::size_t(i)], alpha * adv,
                                  policy.theta(i));
      }
      ++theta_version;
    }

    MetricsRecord rec;
    rec.k = k;
    rec.samples = samples;
    rec.comms = comms;
    rec.reward_inst = mdp.mean_reward(ts.s, ja);
    reward_sum += rec.reward_inst;
    rec.reward_run = reward_sum / double(k + 1);
    rec.cons_omega = omega.disagreement();
    rec.noise_pre = pre;
    rec.noise_post = post;
    if (cfg.diag.fires(k))
      detail::fill_diagnostics(mdp, policy, features, cfg.diag, cache, theta_version,
                               omega.mean(), cfg.pair_cap, rec);
    out.metrics.push_back(rec);

    if (cfg.snapshot_every > 0 && ((k + 1) % cfg.snapshot_every) == 0)
      out.snapshots.push_back({k + 1, detail::snapshot_params(policy, omega, lambda)});
  }

  out.final_params = detail::snapshot_params(policy, omega, lambda);
  return out;
}

// ---------------------------------------------------------------------------
// Distributed natural-gradient direction: projected gradient descent on
// (1/2) h^T F h - g_a^T h, with the score products z estimated by gossip.
// ---------------------------------------------------------------------------
inline std::vector<Vec> nac_direction_solve(const std::vector<TransitionSample>& samples,
                                            const SoftmaxPolicy& policy,
                                            const std::vector<Vec>& g_a,
                                            const WeightMatrix& W, const NacParams& nac,
                                            const std::vector<Vec>& h0,
                                            long* comm_rounds = nullptr) {
  nac.validate();
  const int n = policy.n_agents();
  const long N_a = long(samples.size());
  if (N_a < 1) throw ContractError("nac_direction_solve: empty sample batch");
  if (int(g_a.size()) != n || int(h0.size()) != n)
    throw ContractError("nac_direction_solve: one g_a and h0 entry per agent required");
  for (int i = 0; i < n; ++i)
    if (h0[std::size_t(i)].norm() > nac.C_h + 1e-9)
      throw ContractError("nac_direction_solve: h0 outside the projection ball");

  std::vector<Vec> h = h0;
  Mat Z(n, N_a);
  for (int kp = 0; kp < nac.K_a; ++kp) {
    for (long m = 0; m < N_a; ++m) {
      const TransitionSample& ts = samples[std::size_t(m)];
      for (int i = 0; i < n; ++i)
        Z(i, m) = policy.score_dot(i, ts.s, ts.action[std::size_t(i)], h[std::size_t(i)]);
    }
    for (int r = 0; r < nac.K_z; ++r) Z = consensus_round(Z, W);
    if (comm_rounds) *comm_rounds += nac.K_z;

    for (int i = 0; i < n; ++i) {
      Vec grad = Vec::Zero(policy.d_theta(i));
      for (long m = 0; m < N_a; ++m) {
        const TransitionSample& ts = samples[std::size_t(m)];
        policy.add_scaled_score(i, ts.s, ts.action[std::size_t(i)], Z(i, m), grad);
      }
      grad *= double(n) / double(N_a);
      grad -= g_a[std::size_t(i)];
      h[std::size_t(i)] = project_ball(h[std::size_t(i)] - nac.rho * grad, nac.C_h);
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Single-timescale decentralized natural AC: estimator and critic exactly as
// in run_sdac_re; the actor collects a batch, solves the direction subproblem
// in a decentralized way, and takes a natural-gradient step.
// ---------------------------------------------------------------------------
inline RunResult run_nac(const TabularMAMDP& mdp, const WeightMatrix& W,
                         const FeatureSet& features, const SoftmaxPolicy& policy0,
                         const StepSchedule& sched, const NacParams& nac,
                         const EngineConfig& cfg, const AgentParams* init = nullptr) {
  cfg.validate();
  nac.validate();
  if (W.n_nodes() != mdp.n_agents())
    throw ConfigError("engine: weight matrix size must equal the agent count");
  const int n = mdp.n_agents();

  SoftmaxPolicy policy = policy0;
  detail::ParamFamily omega(n, features.d_omega(), cfg.radii.R_omega);
  detail::ParamFamily lambda(n, features.d_lambda(), cfg.radii.R_lambda);
  if (init) {
    for (int i = 0; i < n; ++i) policy.theta(i) = init->theta[std::size_t(i)];
    omega.set(init->omega);
    lambda.set(init->lambda);
  }

  RunResult out;
  out.initial = detail::snapshot_params(policy, omega, lambda);
  out.metrics.reserve(std::size_t(cfg.K));

  Rng rng = Rng::stream(cfg.seed, 0);
  detail::OracleCache cache;
  detail::SamplerState sampler;
  sampler.s_cur = mdp.sample_initial(rng);
  std::uint64_t theta_version = 0;

  long samples = 0, comms = 0;
  double reward_sum = 0.0;
  std::vector<double> delta(static_cast<std::size_t>(n));

  for (long k = 0; k < cfg.K; ++k) {
    TransitionSample ts = sampler.draw(mdp, policy, cfg.sampling, cache, theta_version, rng);
    const long ja = mdp.encode_action(ts.action);
    samples += 1;

    const bool consensus_now = (k % cfg.K_c) == 0;
    if (consensus_now) {
      omega.consensus(W.matrix());
      lambda.consensus(W.matrix());
      comms += 2;
    }

    const double beta = sched.beta(k);
    const double eta = sched.eta(k);
    const double alpha = sched.alpha(k);

    for (int c = 0; c < cfg.C_c; ++c) {
      if (features.reward_tabular()) {
        const long idx = features.reward_index(ts.s, ja);
        for (int i = 0; i < n; ++i)
          delta[std::size_t(i)] = eta * (mdp.reward(i, ts.s, ja) - lambda.coord(i, idx));
        lambda.coordinate_update(idx, delta);
      } else {
        for (int i = 0; i < n; ++i) {
          double resid =
              mdp.reward(i, ts.s, ja) - features.reward_est(lambda.at(i), ts.s, ja);
          features.add_scaled_reward(lambda.raw(i), ts.s, ja, eta * resid);
          lambda.note_dense_update(i);
        }
      }
      if (features.critic_tabular()) {
        for (int i = 0; i < n; ++i) {
          const Vec& ev = omega.at(i);
          delta[std::size_t(i)] =
              beta * (mdp.reward(i, ts.s, ja) + mdp.gamma() * ev[ts.s_next] - ev[ts.s]);
        }
        omega.coordinate_update(ts.s, delta);
      } else {
        for (int i = 0; i < n; ++i) {
          double d =
              td_error(ts, mdp.reward(i, ts.s, ja), omega.at(i), mdp.gamma(), features);
          features.add_scaled_critic(omega.raw(i), ts.s, beta * d);
          omega.note_dense_update(i);
        }
      }
    }

    // direction batch
    std::vector<TransitionSample> batch;
    batch.reserve(std::size_t(nac.N_a));
    for (int m = 0; m < nac.N_a; ++m)
      batch.push_back(
          sampler.draw(mdp, policy, cfg.sampling, cache, theta_version, rng));
    samples += nac.N_a;

    if (alpha != 0.0) {
      std::vector<Vec> g_a(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        Vec acc = Vec::Zero(policy.d_theta(i));
        for (const auto& b : batch) {
          long bja = mdp.encode_action(b.action);
          double adv = estimated_advantage(b, bja, omega.at(i), lambda.at(i), mdp.gamma(),
                                           features);
          policy.add_scaled_score(i, b.s, b.action[std::size_t(i)], adv, acc);
        }
        g_a[std::size_t(i)] = acc / double(nac.N_a);
      }
      std::vector<Vec> h0(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) h0[std::size_t(i)] = Vec::Zero(policy.d_theta(i));
      std::vector<Vec> h = nac_direction_solve(batch, policy, g_a, W, nac, h0, &comms);
      const double sign = nac.ascent ? 1.0 : -1.0;
      for (int i = 0; i < n; ++i) policy.theta(i) += sign * alpha * h[std::size_t(i)];
      ++theta_version;
    } else {
      comms += long(nac.K_a) * nac.K_z;  // the direction solve still gossips
    }

    MetricsRecord rec;
    rec.k = k;
    rec.samples = samples;
    rec.comms = comms;
    rec.reward_inst = mdp.mean_reward(ts.s, ja);
    reward_sum += rec.reward_inst;
    rec.reward_run = reward_sum / double(k + 1);
    rec.cons_omega = omega.disagreement();
    rec.cons_lambda = lambda.disagreement();
    if (cfg.diag.fires(k))
      detail::fill_diagnostics(mdp, policy, features, cfg.diag, cache, theta_version,
                               omega.mean(), cfg.pair_cap, rec);
    out.metrics.push_back(rec);

    if (cfg.snapshot_every > 0 && ((k + 1) % cfg.snapshot_every) == 0)
      out.snapshots.push_back({k + 1, detail::snapshot_params(policy, omega, lambda)});
  }

  out.final_params = detail::snapshot_params(policy, omega, lambda);
  return out;
}

// ---------------------------------------------------------------------------
// Double-loop baseline: per outer iteration, an inner batched TD loop for the
// critic (with a fixed communication budget), then one batched actor update
// fed by gossiped noisy rewards.
// ---------------------------------------------------------------------------
inline RunResult run_dldac(const TabularMAMDP& mdp, const WeightMatrix& W,
                           const FeatureSet& features, const SoftmaxPolicy& policy0,
                           const StepSchedule& sched, const NoiseSpec& noise,
                           const EngineConfig& cfg, const AgentParams* init = nullptr) {
  cfg.validate();
  if (W.n_nodes() != mdp.n_agents())
    throw ConfigError("engine: weight matrix size must equal the agent count");
  const int n = mdp.n_agents();
  const DldacLoop& loop = sched.loop();
  if (loop.T_c < 1 || loop.T_c_comm < 1 || loop.T_r < 0 || loop.batch_actor < 1 ||
      loop.batch_critic < 1)
    throw ConfigError("dldac: loop parameters must be positive");

  SoftmaxPolicy policy = policy0;
  detail::ParamFamily omega(n, features.d_omega(), cfg.radii.R_omega);
  detail::ParamFamily lambda(n, 0, cfg.radii.R_lambda);  // no reward estimator
  if (init) {
    for (int i = 0; i < n; ++i) policy.theta(i) = init->theta[std::size_t(i)];
    omega.set(init->omega);
  }

  RunResult out;
  out.initial = detail::snapshot_params(policy, omega, lambda);
  out.metrics.reserve(std::size_t(cfg.K));

  Rng rng = Rng::stream(cfg.seed, 0);
  detail::OracleCache cache;
  detail::SamplerState sampler;
  sampler.s_cur = mdp.sample_initial(rng);
  std::uint64_t theta_version = 0;

  long samples = 0, comms = 0;
  double reward_sum = 0.0;
  const int stride = std::max(1, (loop.T_c + loop.T_c_comm - 1) / loop.T_c_comm);

  for (long k = 0; k < cfg.K; ++k) {
    const double beta = sched.beta(k);
    const double alpha = sched.alpha(k);

    // critic inner loop
    int comm_done = 0;
    for (int t = 0; t < loop.T_c; ++t) {
      if (t % stride == 0 && comm_done < loop.T_c_comm) {
        omega.consensus(W.matrix());
        comms += 1;
        ++comm_done;
      }
      std::vector<TransitionSample> batch;
      batch.reserve(std::size_t(loop.batch_critic));
      for (int m = 0; m < loop.batch_critic; ++m)
        batch.push_back(
            sampler.draw(mdp, policy, cfg.sampling, cache, theta_version, rng));
      samples += loop.batch_critic;
      for (int i = 0; i < n; ++i) {
        Vec dir = Vec::Zero(features.d_omega());
        for (const auto& b : batch) {
          long bja = mdp.encode_action(b.action);
          double d = td_error(b, mdp.reward(i, b.s, bja), omega.at(i), mdp.gamma(),
                              features);
          features.add_scaled_critic(dir, b.s, d);
        }
        omega.raw(i) += (beta / double(loop.batch_critic)) * dir;
        omega.note_dense_update(i);
      }
    }

    // actor batch with gossiped noisy rewards
    std::vector<TransitionSample> abatch;
    abatch.reserve(std::size_t(loop.batch_actor));
    for (int m = 0; m < loop.batch_actor; ++m)
      abatch.push_back(sampler.draw(mdp, policy, cfg.sampling, cache, theta_version, rng));
    samples += loop.batch_actor;

    Mat R(n, loop.batch_actor);
    double inst = 0.0;
    for (int m = 0; m < loop.batch_actor; ++m) {
      long bja = mdp.encode_action(abatch[std::size_t(m)].action);
      inst += mdp.mean_reward(abatch[std::size_t(m)].s, bja);
      for (int i = 0; i < n; ++i) {
        double z = noise.sigma > 0.0 ? noise.sigma * rng.normal() : 0.0;
        R(i, m) = mdp.reward(i, abatch[std::size_t(m)].s, bja) * (1.0 + z);
      }
    }
    inst /= double(loop.batch_actor);
    double pre = sq(disagreement_norm(R));
    for (int r = 0; r < loop.T_r; ++r) R = consensus_round(R, W);
    comms += loop.T_r;
    double post = sq(disagreement_norm(R));

    if (alpha != 0.0) {
      for (int i = 0; i < n; ++i) {
        Vec dir = Vec::Zero(policy.d_theta(i));
        for (int m = 0; m < loop.batch_actor; ++m) {
          const TransitionSample& b = abatch[std::size_t(m)];
          double adv = R(i, m) + mdp.gamma() * features.value(omega.at(i), b.s_next) -
                       features.value(omega.at(i), b.s);
          policy.add_scaled_score(i, b.s, b.action[std::size_t(i)], adv, dir);
        }
        policy.theta(i) += (alpha / double(loop.batch_actor)) * dir;
      }
      ++theta_version;
    }

    MetricsRecord rec;
    rec.k = k;
    rec.samples = samples;
    rec.comms = comms;
    rec.reward_inst = inst;
    reward_sum += inst;
    rec.reward_run = reward_sum / double(k + 1);
    rec.cons_omega = omega.disagreement();
    rec.noise_pre = pre;
    rec.noise_post = post;
    if (cfg.diag.fires(k))
      detail::fill_diagnostics(mdp, policy, features, cfg.diag, cache, theta_version,
                               omega.mean(), cfg.pair_cap, rec);
    out.metrics.push_back(rec);

    if (cfg.snapshot_every > 0 && ((k + 1) % cfg.snapshot_every) == 0)
      out.snapshots.push_back({k + 1, detail::snapshot_params(policy, omega, lambda)});
  }

  out.final_params = detail::snapshot_params(policy, omega, lambda);
  return out;
}

}  // namespace dac
