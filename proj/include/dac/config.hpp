#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dac/common.hpp"
#include "dac/engines.hpp"
#include "dac/schedule.hpp"

namespace dac {

// Flat key-value configuration. The file format is INI-style: `key = value`
// lines, optional `[section]` headers that prefix keys as `section.key`,
// comments starting with '#' or ';'. No nesting beyond one level.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
  }

  static KeyValueConfig parse_string(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(t.substr(0, eq));
      std::string val = trim(t.substr(eq + 1));
      if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
      if (!section.empty()) key = section + "." + key;
      cfg.values_[key] = val;
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& val) { values_[key] = val; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    used_.insert(key);
    return it == values_.end() ? fallback : it->second;
  }

  long get_long(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    used_.insert(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      long v = std::stol(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError("config: key '" + key + "' is not an integer: " + it->second);
    }
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    used_.insert(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError("config: key '" + key + "' is not a number: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    used_.insert(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw ConfigError("config: key '" + key + "' is not a boolean: " + it->second);
  }

  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& fallback) const {
    auto it = values_.find(key);
    used_.insert(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      try {
        out.push_back(std::stoi(tok));
      } catch (...) {
        throw ConfigError("config: key '" + key + "' is not an integer list");
      }
    }
    return out;
  }

  // After resolution: any key the resolver never looked at is a typo.
  void reject_unknown_keys() const {
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) throw ConfigError("config: unknown key '" + k + "'");
  }

  const std::map<std::string, std::string>& raw() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

enum class Algo { SdacRe, SdacNoi, Nac, TdacRe, TdacNoi, Dldac };

inline Algo parse_algo(const std::string& s) {
  if (s == "sdac-re") return Algo::SdacRe;
  if (s == "sdac-noi") return Algo::SdacNoi;
  if (s == "nac") return Algo::Nac;
  if (s == "tdac-re") return Algo::TdacRe;
  if (s == "tdac-noi") return Algo::TdacNoi;
  if (s == "dldac") return Algo::Dldac;
  throw ConfigError("config: unknown algorithm '" + s + "'");
}

inline std::string algo_name(Algo a) {
  switch (a) {
    case Algo::SdacRe: return "sdac-re";
    case Algo::SdacNoi: return "sdac-noi";
    case Algo::Nac: return "nac";
    case Algo::TdacRe: return "tdac-re";
    case Algo::TdacNoi: return "tdac-noi";
    default: return "dldac";
  }
}

// Fully resolved run configuration. `resolved` holds every effective setting
// (including defaults) and is dumped into each metrics header.
struct RunConfig {
  // environment
  std::string env_kind = "random";
  int env_agents = 3;
  int env_states = 10;
  std::vector<int> env_actions{2, 2, 2};
  std::uint64_t env_seed = 1;
  double env_r_max = 1.0;
  double env_gamma = 0.95;
  int grid_side = 3;
  std::vector<int> grid_landmarks;  // empty -> spread
  double grid_collision_penalty = 0.5;
  double grid_dist_scale = 0.1;
  long grid_state_cap = 1000000;

  // topology
  std::string topology = "ring";

  // features
  std::string features_critic = "tabular";
  std::string features_reward = "tabular";
  std::uint64_t features_seed = 1;

  // algorithm
  Algo algo = Algo::SdacRe;
  long K = 1000;
  int K_c = 1;
  NoiseSpec noise;
  Sampling sampling = Sampling::Markovian;
  TdAt td_at = TdAt::Post;
  int C_a = 1, C_c = 1;
  ScheduleMode schedule_mode = ScheduleMode::SdacEmpirical;
  StepSchedule::Overrides schedule_overrides;
  NacParams nac;
  std::optional<double> R_omega_override, R_lambda_override;
  long pair_cap = kDefaultPairCap;

  // run
  int mc_runs = 1;
  std::uint64_t base_seed = 1;
  std::string out_dir = "out";
  std::string label;
  DiagSpec diag;
  long snapshot_every = 0;

  std::map<std::string, std::string> resolved;
};

namespace detail {

inline Sampling parse_sampling(const std::string& s) {
  if (s == "iid") return Sampling::Iid;
  if (s == "markovian") return Sampling::Markovian;
  throw ConfigError("config: sampling must be 'iid' or 'markovian'");
}

inline TdAt parse_td_at(const std::string& s) {
  if (s == "post") return TdAt::Post;
  if (s == "pre") return TdAt::Pre;
  throw ConfigError("config: td_at must be 'pre' or 'post'");
}

inline ScheduleMode default_schedule_for(Algo a) {
  switch (a) {
    case Algo::TdacRe:
    case Algo::TdacNoi: return ScheduleMode::Tdac;
    case Algo::Dldac: return ScheduleMode::Dldac;
    default: return ScheduleMode::SdacEmpirical;
  }
}

}  // namespace detail

inline RunConfig resolve_config(const KeyValueConfig& kv) {
  RunConfig rc;

  rc.env_kind = kv.get("env.kind", "random");
  if (rc.env_kind != "random" && rc.env_kind != "navgrid")
    throw ConfigError("config: env.kind must be 'random' or 'navgrid'");
  rc.env_agents = int(kv.get_long("env.agents", 3));
  rc.env_gamma = kv.get_double("env.gamma", 0.95);
  rc.env_seed = std::uint64_t(kv.get_long("env.seed", 1));
  if (rc.env_kind == "random") {
    rc.env_states = int(kv.get_long("env.states", 10));
    std::vector<int> one{2};
    auto acts = kv.get_int_list("env.actions", one);
    if (int(acts.size()) == 1) acts.assign(std::size_t(rc.env_agents), acts[0]);
    if (int(acts.size()) != rc.env_agents)
      throw ConfigError("config: env.actions must list one count per agent");
    rc.env_actions = acts;
    rc.env_r_max = kv.get_double("env.r_max", 1.0);
  } else {
    rc.grid_side = int(kv.get_long("env.grid", 3));
    rc.grid_landmarks = kv.get_int_list("env.landmarks", {});
    rc.grid_collision_penalty = kv.get_double("env.collision_penalty", 0.5);
    rc.grid_dist_scale = kv.get_double("env.dist_scale", 0.1);
    rc.grid_state_cap = kv.get_long("env.cap", 1000000);
    rc.env_r_max = kv.get_double("env.r_max", 0.0);  // 0 -> natural bound
    rc.env_actions.assign(std::size_t(rc.env_agents), 5);
  }

  rc.topology = kv.get("topology", "ring");

  rc.features_critic = kv.get("features.critic", "tabular");
  rc.features_reward = kv.get("features.reward", "tabular");
  rc.features_seed = std::uint64_t(kv.get_long("features.seed", long(rc.env_seed)));

  rc.algo = parse_algo(kv.get("algo", "sdac-re"));
  rc.K = kv.get_long("K", 1000);
  rc.K_c = int(kv.get_long("K_c", 1));
  rc.noise.K_r = int(kv.get_long("K_r", 1));
  rc.noise.sigma = kv.get_double("sigma", 0.5);
  rc.sampling = detail::parse_sampling(kv.get("sampling", "markovian"));
  rc.td_at = detail::parse_td_at(kv.get("td_at", "post"));
  rc.C_a = int(kv.get_long("C_a", 1));
  rc.C_c = int(kv.get_long("C_c", 1));
  rc.pair_cap = kv.get_long("pair_cap", kDefaultPairCap);

  std::string sm = kv.get("schedule", "auto");
  rc.schedule_mode =
      sm == "auto" ? detail::default_schedule_for(rc.algo) : parse_schedule_mode(sm);
  if (kv.has("schedule.alpha"))
    rc.schedule_overrides.alpha_base = kv.get_double("schedule.alpha", 0.0);
  if (kv.has("schedule.beta"))
    rc.schedule_overrides.beta_base = kv.get_double("schedule.beta", 0.0);
  if (kv.has("schedule.eta"))
    rc.schedule_overrides.eta_base = kv.get_double("schedule.eta", 0.0);
  if (kv.has("schedule.alpha_exp"))
    rc.schedule_overrides.alpha_exp = kv.get_double("schedule.alpha_exp", 0.0);
  if (kv.has("schedule.beta_exp"))
    rc.schedule_overrides.beta_exp = kv.get_double("schedule.beta_exp", 0.0);
  if (kv.has("schedule.eta_exp"))
    rc.schedule_overrides.eta_exp = kv.get_double("schedule.eta_exp", 0.0);
  DldacLoop loop;
  loop.T_c = int(kv.get_long("dldac.T_c", loop.T_c));
  loop.T_c_comm = int(kv.get_long("dldac.T_c_comm", loop.T_c_comm));
  loop.T_r = int(kv.get_long("dldac.T_r", loop.T_r));
  loop.batch_actor = int(kv.get_long("dldac.batch_actor", loop.batch_actor));
  loop.batch_critic = int(kv.get_long("dldac.batch_critic", loop.batch_critic));
  rc.schedule_overrides.loop = loop;
  if (rc.algo == Algo::Dldac) rc.noise.sigma = kv.get_double("sigma", 0.1);

  rc.nac.N_a = int(kv.get_long("nac.N_a", rc.nac.N_a));
  rc.nac.K_a = int(kv.get_long("nac.K_a", rc.nac.K_a));
  rc.nac.K_z = int(kv.get_long("nac.K_z", rc.nac.K_z));
  rc.nac.rho = kv.get_double("nac.rho", rc.nac.rho);
  rc.nac.C_h = kv.get_double("nac.C_h", rc.nac.C_h);
  std::string sign = kv.get("nac.sign", "ascent");
  if (sign != "ascent" && sign != "paper")
    throw ConfigError("config: nac.sign must be 'ascent' or 'paper'");
  rc.nac.ascent = sign == "ascent";

  if (kv.has("R_omega")) rc.R_omega_override = kv.get_double("R_omega", 0.0);
  if (kv.has("R_lambda")) rc.R_lambda_override = kv.get_double("R_lambda", 0.0);

  rc.mc_runs = int(kv.get_long("run.mc_runs", 1));
  if (rc.mc_runs < 1) throw ConfigError("config: run.mc_runs must be at least 1");
  rc.base_seed = std::uint64_t(kv.get_long("run.seed", 1));
  rc.out_dir = kv.get("run.out", "out");
  rc.label = kv.get("run.label", algo_name(rc.algo));
  rc.snapshot_every = kv.get_long("snapshot.every", 0);

  bool oracle = kv.get_bool("diagnostics.oracle", false);
  rc.diag.every = kv.get_long("diagnostics.every", 100);
  rc.diag.exact_j = kv.get_bool("diagnostics.exact_j", oracle);
  rc.diag.critic_gap = kv.get_bool("diagnostics.critic_gap", oracle);
  rc.diag.grad_norm = kv.get_bool("diagnostics.grad_norm", oracle);
  rc.diag.app_err = kv.get_bool("diagnostics.app_error", oracle);

  kv.reject_unknown_keys();

  // effective settings, defaults included
  auto put = [&rc](const std::string& k, const std::string& v) { rc.resolved[k] = v; };
  put("env.kind", rc.env_kind);
  put("env.agents", std::to_string(rc.env_agents));
  put("env.gamma", format_double(rc.env_gamma));
  put("env.seed", std::to_string(rc.env_seed));
  if (rc.env_kind == "random") {
    put("env.states", std::to_string(rc.env_states));
    std::string acts;
    for (std::size_t i = 0; i < rc.env_actions.size(); ++i)
      acts += (i ? "," : "") + std::to_string(rc.env_actions[i]);
    put("env.actions", acts);
    put("env.r_max", format_double(rc.env_r_max));
  } else {
    put("env.grid", std::to_string(rc.grid_side));
    std::string lms;
    for (std::size_t i = 0; i < rc.grid_landmarks.size(); ++i)
      lms += (i ? "," : "") + std::to_string(rc.grid_landmarks[i]);
    put("env.landmarks", lms.empty() ? "auto" : lms);
    put("env.collision_penalty", format_double(rc.grid_collision_penalty));
    put("env.dist_scale", format_double(rc.grid_dist_scale));
    put("env.cap", std::to_string(rc.grid_state_cap));
    put("env.r_max", rc.env_r_max > 0.0 ? format_double(rc.env_r_max) : "natural");
  }
  put("topology", rc.topology);
  put("features.critic", rc.features_critic);
  put("features.reward", rc.features_reward);
  put("features.seed", std::to_string(rc.features_seed));
  put("algo", algo_name(rc.algo));
  put("K", std::to_string(rc.K));
  put("K_c", std::to_string(rc.K_c));
  put("K_r", std::to_string(rc.noise.K_r));
  put("sigma", format_double(rc.noise.sigma));
  put("sampling", rc.sampling == Sampling::Iid ? "iid" : "markovian");
  put("td_at", rc.td_at == TdAt::Post ? "post" : "pre");
  put("C_a", std::to_string(rc.C_a));
  put("C_c", std::to_string(rc.C_c));
  put("schedule", sm == "auto" ? std::string("auto") : sm);
  if (rc.algo == Algo::Nac) {
    put("nac.N_a", std::to_string(rc.nac.N_a));
    put("nac.K_a", std::to_string(rc.nac.K_a));
    put("nac.K_z", std::to_string(rc.nac.K_z));
    put("nac.rho", format_double(rc.nac.rho));
    put("nac.C_h", format_double(rc.nac.C_h));
    put("nac.sign", rc.nac.ascent ? "ascent" : "paper");
  }
  if (rc.algo == Algo::Dldac) {
    put("dldac.T_c", std::to_string(loop.T_c));
    put("dldac.T_c_comm", std::to_string(loop.T_c_comm));
    put("dldac.T_r", std::to_string(loop.T_r));
    put("dldac.batch_actor", std::to_string(loop.batch_actor));
    put("dldac.batch_critic", std::to_string(loop.batch_critic));
  }
  put("run.mc_runs", std::to_string(rc.mc_runs));
  put("run.seed", std::to_string(rc.base_seed));
  put("run.label", rc.label);
  put("diagnostics.every", std::to_string(rc.diag.every));
  put("diagnostics.exact_j", rc.diag.exact_j ? "true" : "false");
  put("diagnostics.critic_gap", rc.diag.critic_gap ? "true" : "false");
  put("diagnostics.grad_norm", rc.diag.grad_norm ? "true" : "false");
  put("diagnostics.app_error", rc.diag.app_err ? "true" : "false");
  return rc;
}

}  // namespace dac
