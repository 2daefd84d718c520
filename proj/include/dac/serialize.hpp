#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dac/common.hpp"
#include "dac/mamdp.hpp"
#include "dac/topology.hpp"

namespace dac {

// Regression-fixture schema: the transition tensor is flattened row-major as
// P[(s * |A| + ja) * |S| + s']. Intended for desk-scale instances.
inline nlohmann::json mdp_to_json(const TabularMAMDP& mdp) {
  nlohmann::json j;
  j["n_agents"] = mdp.n_agents();
  j["n_states"] = mdp.n_states();
  j["action_counts"] = mdp.action_counts();
  j["gamma"] = mdp.gamma();
  j["r_max"] = mdp.r_max();
  std::vector<double> init(static_cast<std::size_t>(mdp.n_states()));
  for (int s = 0; s < mdp.n_states(); ++s) init[std::size_t(s)] = mdp.init_dist()[s];
  j["init_dist"] = init;
  std::vector<double> trans;
  trans.reserve(std::size_t(mdp.n_pairs() * mdp.n_states()));
  for (int s = 0; s < mdp.n_states(); ++s)
    for (long ja = 0; ja < mdp.n_joint_actions(); ++ja) {
      std::vector<double> row(std::size_t(mdp.n_states()), 0.0);
      auto rv = mdp.row(s, ja);
      for (long k = 0; k < rv.nnz; ++k) row[std::size_t(rv.next[k])] = rv.p[k];
      trans.insert(trans.end(), row.begin(), row.end());
    }
  j["transition"] = trans;
  std::vector<std::vector<double>> rewards(static_cast<std::size_t>(mdp.n_agents()));
  for (int i = 0; i < mdp.n_agents(); ++i) {
    rewards[std::size_t(i)].resize(std::size_t(mdp.n_pairs()));
    for (int s = 0; s < mdp.n_states(); ++s)
      for (long ja = 0; ja < mdp.n_joint_actions(); ++ja)
        rewards[std::size_t(i)][std::size_t(mdp.pair_index(s, ja))] = mdp.reward(i, s, ja);
  }
  j["rewards"] = rewards;
  return j;
}

inline TabularMAMDP mdp_from_json(const nlohmann::json& j) {
  int n_agents = j.at("n_agents").get<int>();
  int n_states = j.at("n_states").get<int>();
  auto action_counts = j.at("action_counts").get<std::vector<int>>();
  double gamma = j.at("gamma").get<double>();
  double r_max = j.at("r_max").get<double>();
  MdpBuilder b(n_agents, n_states, action_counts, gamma, r_max);
  auto trans = j.at("transition").get<std::vector<double>>();
  long n_pairs = long(n_states) * b.n_joint();
  if (long(trans.size()) != n_pairs * n_states)
    throw ConfigError("mdp json: transition length mismatch");
  for (long r = 0; r < n_pairs; ++r) {
    std::vector<std::pair<int, double>> row;
    for (int sn = 0; sn < n_states; ++sn) {
      double p = trans[std::size_t(r * n_states + sn)];
      if (p != 0.0) row.push_back({sn, p});
    }
    b.add_row(row);
  }
  auto rewards = j.at("rewards").get<std::vector<std::vector<double>>>();
  if (long(rewards.size()) != n_agents) throw ConfigError("mdp json: reward rows mismatch");
  for (int i = 0; i < n_agents; ++i) {
    if (long(rewards[std::size_t(i)].size()) != n_pairs)
      throw ConfigError("mdp json: reward row length mismatch");
    for (int s = 0; s < n_states; ++s)
      for (long ja = 0; ja < b.n_joint(); ++ja)
        b.set_reward(i, s, ja,
                     rewards[std::size_t(i)][std::size_t(long(s) * b.n_joint() + ja)]);
  }
  auto init = j.at("init_dist").get<std::vector<double>>();
  if (int(init.size()) != n_states) throw ConfigError("mdp json: init_dist length mismatch");
  Vec mu0(n_states);
  for (int s = 0; s < n_states; ++s) mu0[s] = init[std::size_t(s)];
  b.set_init_dist(mu0);
  return b.build();
}

inline nlohmann::json weights_to_json(const WeightMatrix& wm) {
  nlohmann::json j;
  const Mat& w = wm.matrix();
  j["n"] = w.rows();
  std::vector<double> flat;
  flat.reserve(std::size_t(w.rows() * w.cols()));
  for (long r = 0; r < w.rows(); ++r)
    for (long c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
  j["w"] = flat;
  j["nu"] = wm.nu();
  return j;
}

inline WeightMatrix weights_from_json(const nlohmann::json& j) {
  long n = j.at("n").get<long>();
  auto flat = j.at("w").get<std::vector<double>>();
  if (long(flat.size()) != n * n) throw ConfigError("weights json: size mismatch");
  Mat w(n, n);
  for (long r = 0; r < n; ++r)
    for (long c = 0; c < n; ++c) w(r, c) = flat[std::size_t(r * n + c)];
  return WeightMatrix(w);  // re-validated on construction
}

}  // namespace dac
