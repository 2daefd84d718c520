#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dac/config.hpp"
#include "dac/engines.hpp"
#include "dac/metrics.hpp"
#include "dac/oracle.hpp"
#include "dac/serialize.hpp"
#include "dac/topology.hpp"

namespace dac {

// A resolved experiment: every object the engines need, built once and shared
// (immutably) by all Monte Carlo runs.
struct Experiment {
  RunConfig rc;
  TabularMAMDP mdp;
  WeightMatrix W;
  FeatureSet features;
  SoftmaxPolicy policy0;
  StepSchedule schedule;
  EngineConfig engine;
};

namespace detail {

inline CommGraph parse_topology(const std::string& spec, int n) {
  if (spec == "ring") return CommGraph::ring(n);
  if (spec == "complete") return CommGraph::complete(n);
  if (spec == "star") return CommGraph::star(n);
  if (spec.rfind("edges:", 0) == 0) {
    std::string body = spec.substr(6);
    if (!body.empty() && body.front() == '[') body = body.substr(1);
    if (!body.empty() && body.back() == ']') body.pop_back();
    std::vector<std::pair<int, int>> edges;
    std::stringstream ss(body);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      auto dash = tok.find('-');
      if (dash == std::string::npos)
        throw ConfigError("topology: edge must look like 'a-b', got '" + tok + "'");
      try {
        edges.push_back({std::stoi(tok.substr(0, dash)), std::stoi(tok.substr(dash + 1))});
      } catch (...) {
        throw ConfigError("topology: bad edge '" + tok + "'");
      }
    }
    return CommGraph::from_edges(n, edges);
  }
  throw ConfigError("topology: unknown spec '" + spec + "'");
}

inline std::pair<FeatureMode, int> parse_feature_spec(const std::string& s) {
  if (s == "tabular") return {FeatureMode::Tabular, 0};
  if (s.rfind("random:", 0) == 0) {
    try {
      return {FeatureMode::Random, std::stoi(s.substr(7))};
    } catch (...) {
      throw ConfigError("features: bad dimension in '" + s + "'");
    }
  }
  throw ConfigError("features: spec must be 'tabular' or 'random:<d>', got '" + s + "'");
}

inline TabularMAMDP build_env(const RunConfig& rc) {
  if (rc.env_kind == "random")
    return make_random_mamdp(rc.env_agents, rc.env_states, rc.env_actions, rc.env_seed,
                             rc.env_r_max, rc.env_gamma);
  NavGridSpec spec;
  spec.side = rc.grid_side;
  spec.n_agents = rc.env_agents;
  spec.landmarks = rc.grid_landmarks;
  spec.collision_penalty = rc.grid_collision_penalty;
  spec.dist_scale = rc.grid_dist_scale;
  spec.gamma = rc.env_gamma;
  spec.r_max = rc.env_r_max;
  spec.state_cap = rc.grid_state_cap;
  return compile_nav_grid(spec);
}

}  // namespace detail

// Build the environment, topology, features, schedule, and projection radii.
inline Experiment prepare_experiment(const RunConfig& rc) {
  TabularMAMDP mdp = detail::build_env(rc);
  WeightMatrix W =
      WeightMatrix::metropolis(detail::parse_topology(rc.topology, mdp.n_agents()));

  auto [cmode, cdim] = detail::parse_feature_spec(rc.features_critic);
  auto [rmode, rdim] = detail::parse_feature_spec(rc.features_reward);
  FeatureSet features = FeatureSet::make(mdp, cmode, cdim, rmode, rdim, rc.features_seed);
  SoftmaxPolicy policy0 = SoftmaxPolicy::uniform_for(mdp);
  StepSchedule schedule = StepSchedule::make(rc.schedule_mode, rc.K, rc.schedule_overrides);

  Radii radii;
  if (rc.R_omega_override) {
    radii.R_omega = *rc.R_omega_override;
  } else if (cmode == FeatureMode::Tabular) {
    CriticSystem cs = critic_system(mdp, policy0, features);
    double lphi = negative_definiteness_margin(cs.A);
    if (lphi <= 1e-12)
      throw AssumptionError("prepare: critic system at theta0 is not negative definite");
    radii.R_omega = 2.0 * mdp.r_max() / lphi;
  } else {
    throw ConfigError("prepare: R_omega must be set explicitly for random critic features");
  }
  if (rc.R_lambda_override) {
    radii.R_lambda = *rc.R_lambda_override;
  } else if (rmode == FeatureMode::Tabular) {
    OptimalReward orw = optimal_reward_estimator(mdp, policy0, features, true);
    radii.R_lambda = 2.0 * mdp.r_max() / orw.lambda_phi_r;
  } else {
    throw ConfigError("prepare: R_lambda must be set explicitly for random reward features");
  }

  EngineConfig engine;
  engine.K = rc.K;
  engine.K_c = rc.K_c;
  engine.sampling = rc.sampling;
  engine.td_at = rc.td_at;
  engine.C_a = rc.C_a;
  engine.C_c = rc.C_c;
  engine.radii = radii;
  engine.diag = rc.diag;
  engine.snapshot_every = rc.snapshot_every;
  engine.pair_cap = rc.pair_cap;
  engine.validate();

  Experiment ex{rc, std::move(mdp), std::move(W), std::move(features), std::move(policy0),
                std::move(schedule), engine};
  return ex;
}

inline RunResult dispatch_run(const Experiment& ex, std::uint64_t seed) {
  EngineConfig cfg = ex.engine;
  cfg.seed = seed;
  switch (ex.rc.algo) {
    case Algo::SdacRe:
    case Algo::TdacRe:
      return run_sdac_re(ex.mdp, ex.W, ex.features, ex.policy0, ex.schedule, cfg);
    case Algo::SdacNoi:
    case Algo::TdacNoi:
      return run_sdac_noi(ex.mdp, ex.W, ex.features, ex.policy0, ex.schedule, ex.rc.noise,
                          cfg);
    case Algo::Nac:
      return run_nac(ex.mdp, ex.W, ex.features, ex.policy0, ex.schedule, ex.rc.nac, cfg);
    default:
      return run_dldac(ex.mdp, ex.W, ex.features, ex.policy0, ex.schedule, ex.rc.noise,
                       cfg);
  }
}

struct ExperimentOutput {
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<MetricsRecord>> runs;
  std::vector<AggregateRecord> aggregate;
  std::vector<std::string> run_files;
  std::string aggregate_file;
};

namespace detail {

inline void write_config_header(std::ofstream& out, const RunConfig& rc) {
  for (const auto& [k, v] : rc.resolved) out << "# " << k << " = " << v << "\n";
}

inline void ensure_writable_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("output: cannot create directory '" + dir + "': " + ec.message());
  std::string probe = (fs::path(dir) / ".probe").string();
  {
    std::ofstream p(probe);
    if (!p) throw IoError("output: directory '" + dir + "' is not writable");
  }
  fs::remove(probe, ec);
}

// Run the per-seed engines, at most hardware_concurrency at a time. Results
// land in seed order regardless of scheduling.
inline std::vector<std::vector<MetricsRecord>> run_all_seeds(
    const Experiment& ex, const std::vector<std::uint64_t>& seeds) {
  std::vector<std::vector<MetricsRecord>> runs(seeds.size());
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  unsigned workers = std::min<unsigned>(hw, unsigned(seeds.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i)
      runs[i] = dispatch_run(ex, seeds[i]).metrics;
    return runs;
  }
  std::vector<std::future<void>> futs;
  for (unsigned w = 0; w < workers; ++w) {
    futs.push_back(std::async(std::launch::async, [&, w]() {
      for (std::size_t i = w; i < seeds.size(); i += workers)
        runs[i] = dispatch_run(ex, seeds[i]).metrics;
    }));
  }
  for (auto& f : futs) f.get();
  return runs;
}

}  // namespace detail

// Execute mc_runs seeded runs, write one CSV per run plus a cross-run
// aggregate. Byte-identical for identical (config, seed); wall-clock times go
// to a sidecar log only.
inline ExperimentOutput run_experiment(const Experiment& ex, const std::string& out_dir) {
  detail::ensure_writable_dir(out_dir);
  namespace fs = std::filesystem;
  auto t0 = std::chrono::steady_clock::now();

  ExperimentOutput out;
  for (int r = 0; r < ex.rc.mc_runs; ++r) out.seeds.push_back(ex.rc.base_seed + std::uint64_t(r));
  out.runs = detail::run_all_seeds(ex, out.seeds);

  for (std::size_t r = 0; r < out.runs.size(); ++r) {
    std::string path =
        (fs::path(out_dir) / (ex.rc.label + "_seed" + std::to_string(out.seeds[r]) + ".csv"))
            .string();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("output: cannot open '" + path + "'");
    detail::write_config_header(f, ex.rc);
    f << "# seed = " << out.seeds[r] << "\n";
    f << kMetricsHeader << "\n";
    for (const auto& rec : out.runs[r]) f << metrics_csv_row(rec) << "\n";
    out.run_files.push_back(path);
  }

  out.aggregate = aggregate_metrics(out.runs);
  out.aggregate_file = (fs::path(out_dir) / (ex.rc.label + "_agg.csv")).string();
  {
    std::ofstream f(out.aggregate_file, std::ios::binary);
    if (!f) throw IoError("output: cannot open '" + out.aggregate_file + "'");
    detail::write_config_header(f, ex.rc);
    f << "# runs = " << ex.rc.mc_runs << "\n";
    f << aggregate_csv_header() << "\n";
    for (const auto& rec : out.aggregate) f << aggregate_csv_row(rec) << "\n";
  }

  // timestamps are confined to this sidecar
  auto t1 = std::chrono::steady_clock::now();
  std::ofstream log((fs::path(out_dir) / (ex.rc.label + ".log")).string(), std::ios::app);
  log << "label=" << ex.rc.label << " runs=" << ex.rc.mc_runs << " elapsed_ms="
      << std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count() << "\n";
  return out;
}

inline ExperimentOutput run_experiment(const RunConfig& rc, const std::string& out_dir) {
  return run_experiment(prepare_experiment(rc), out_dir);
}

// Consensus-period sweep with shared seeds; emits one aggregate per value and
// a joined long-format table keyed by (K_c, iteration).
inline std::string ablation_kc(const RunConfig& base, const std::vector<int>& values,
                               const std::string& out_dir) {
  if (values.empty()) throw ConfigError("ablation: K_c value list is empty");
  detail::ensure_writable_dir(out_dir);
  namespace fs = std::filesystem;
  std::string path = (fs::path(out_dir) / "ablation_kc.csv").string();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("output: cannot open '" + path + "'");
  f << "K_c,iter,samples,comms,reward_inst_mean,reward_inst_sd,reward_run_mean,"
       "reward_run_sd\n";
  for (int v : values) {
    RunConfig rc = base;
    rc.K_c = v;
    rc.label = base.label + "_kc" + std::to_string(v);
    rc.resolved["K_c"] = std::to_string(v);
    rc.resolved["run.label"] = rc.label;
    ExperimentOutput out = run_experiment(rc, out_dir);
    for (const auto& a : out.aggregate) {
      f << v << "," << a.k << "," << a.samples << "," << a.comms << ","
        << format_double(a.mean[0]) << "," << format_double(a.sd[0]) << ","
        << format_double(a.mean[1]) << "," << format_double(a.sd[1]) << "\n";
    }
  }
  return path;
}

// Run several configurations over the same environment/topology/seeds and
// emit aligned reward curves.
inline std::string compare_algorithms(const std::vector<RunConfig>& configs,
                                      const std::string& out_dir) {
  if (configs.size() < 2) throw ConfigError("compare: need at least two configurations");
  const RunConfig& ref = configs.front();
  for (const auto& rc : configs) {
    auto same = [&](const std::string& key) {
      auto a = rc.resolved.find(key), b = ref.resolved.find(key);
      std::string av = a == rc.resolved.end() ? "" : a->second;
      std::string bv = b == ref.resolved.end() ? "" : b->second;
      return av == bv;
    };
    for (const char* key :
         {"env.kind", "env.agents", "env.states", "env.actions", "env.gamma", "env.seed",
          "env.grid", "env.landmarks", "env.collision_penalty", "env.dist_scale",
          "env.r_max", "topology", "run.seed", "run.mc_runs"})
      if (!same(key))
        throw ConfigError(std::string("compare: configurations disagree on '") + key +
                          "'; they must share environment, topology, and seeds");
  }
  std::set<std::string> labels;
  for (const auto& rc : configs)
    if (!labels.insert(rc.label).second)
      throw ConfigError("compare: duplicate label '" + rc.label + "'");

  detail::ensure_writable_dir(out_dir);
  namespace fs = std::filesystem;
  std::string path = (fs::path(out_dir) / "compare.csv").string();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("output: cannot open '" + path + "'");
  f << "series,iter,samples,comms,reward_inst_mean,reward_inst_sd,reward_run_mean,"
       "reward_run_sd\n";
  for (const auto& rc : configs) {
    ExperimentOutput out = run_experiment(rc, out_dir);
    for (const auto& a : out.aggregate) {
      f << rc.label << "," << a.k << "," << a.samples << "," << a.comms << ","
        << format_double(a.mean[0]) << "," << format_double(a.sd[0]) << ","
        << format_double(a.mean[1]) << "," << format_double(a.sd[1]) << "\n";
    }
  }
  return path;
}

namespace detail {

struct ParsedAggregate {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;  // raw cells, text-preserving
};

inline ParsedAggregate parse_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("plotdata: cannot open '" + path + "'");
  ParsedAggregate t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (!have_header) {
      t.columns = cells;
      have_header = true;
    } else {
      t.rows.push_back(cells);
    }
  }
  if (!have_header) throw IoError("plotdata: '" + path + "' has no header row");
  return t;
}

inline int column_index(const ParsedAggregate& t, const std::string& name,
                        const std::string& path) {
  for (std::size_t i = 0; i < t.columns.size(); ++i)
    if (t.columns[i] == name) return int(i);
  throw ConfigError("plotdata: '" + path + "' is missing column '" + name + "'");
}

}  // namespace detail

// Long-format plot feed: one row per (series, x_kind, iteration) with the
// running-mean reward curve. x_kind is samples or communications.
inline std::string emit_plot_data(const std::string& in_dir, const std::string& out_file) {
  namespace fs = std::filesystem;
  std::vector<std::string> agg_files;
  if (fs::exists(in_dir))
    for (const auto& e : fs::directory_iterator(in_dir)) {
      std::string name = e.path().filename().string();
      if (name.size() > 8 && name.substr(name.size() - 8) == "_agg.csv")
        agg_files.push_back(e.path().string());
    }
  std::sort(agg_files.begin(), agg_files.end());

  std::ofstream f(out_file, std::ios::binary);
  if (!f) throw IoError("plotdata: cannot open '" + out_file + "'");
  f << "series,x_kind,x,mean,sd\n";
  for (const auto& path : agg_files) {
    detail::ParsedAggregate t = detail::parse_csv_table(path);
    int ci_samples = detail::column_index(t, "samples", path);
    int ci_comms = detail::column_index(t, "comms", path);
    int ci_mean = detail::column_index(t, "reward_run_mean", path);
    int ci_sd = detail::column_index(t, "reward_run_sd", path);
    std::string series = fs::path(path).filename().string();
    series = series.substr(0, series.size() - 8);  // strip _agg.csv
    for (const char* x_kind : {"samples", "communications"}) {
      int ci_x = std::string(x_kind) == "samples" ? ci_samples : ci_comms;
      for (const auto& row : t.rows)
        f << series << "," << x_kind << "," << row[std::size_t(ci_x)] << ","
          << row[std::size_t(ci_mean)] << "," << row[std::size_t(ci_sd)] << "\n";
    }
  }
  return out_file;
}

// Runtime validators for the model assumptions a run relies on.
struct ValidationReport {
  bool ok = true;
  std::vector<std::string> lines;

  void check(const std::string& name, bool pass, const std::string& detail) {
    lines.push_back((pass ? "ok   " : "FAIL ") + name + (detail.empty() ? "" : ": " + detail));
    if (!pass) ok = false;
  }
};

inline ValidationReport validate_config(const RunConfig& rc) {
  ValidationReport rep;
  Experiment ex = prepare_experiment(rc);

  // bounded rewards and well-formed tensors are enforced at construction
  rep.check("rewards bounded by r_max", true, "r_max = " + format_double(ex.mdp.r_max()));
  rep.check("transition rows stochastic", true, "");
  rep.check("initial distribution normalized", true, "");

  // mixing proxy: the chain under the initial policy reaches a stationary
  // distribution within the iteration cap
  bool mixes = true;
  std::string mix_detail;
  try {
    Vec mu = stationary_dist(ex.mdp, ex.policy0);
    mix_detail = "min stationary mass = " + format_double(mu.minCoeff());
  } catch (const MixingError& e) {
    mixes = false;
    mix_detail = e.what();
  }
  rep.check("chain mixes under initial policy", mixes, mix_detail);

  // doubly stochastic weights with contraction
  rep.check("weight matrix doubly stochastic with nu < 1", ex.W.nu() < 1.0,
            "nu = " + format_double(ex.W.nu()));

  // per-policy definiteness of the critic and reward systems at theta0
  double lphi = 0.0, lphir = 0.0;
  bool def_ok = true;
  std::string def_detail;
  try {
    CriticSystem cs = critic_system(ex.mdp, ex.policy0, ex.features);
    lphi = negative_definiteness_margin(cs.A);
    OptimalReward orw = optimal_reward_estimator(ex.mdp, ex.policy0, ex.features, true);
    lphir = orw.lambda_phi_r;
    def_ok = lphi > 1e-12 && lphir > 0.0;
    def_detail = "lambda_phi = " + format_double(lphi) +
                 ", lambda_phi_r = " + format_double(lphir);
  } catch (const Error& e) {
    def_ok = false;
    def_detail = e.what();
  }
  rep.check("critic/reward systems negative definite at theta0", def_ok, def_detail);

  // Fisher information conditioning at theta0 (reported, not fatal: the
  // tabular softmax parameterization is overcomplete, so the minimum
  // eigenvalue is structurally zero and the direction solver uses the
  // minimum-norm solution)
  if (rc.algo == Algo::Nac) {
    try {
      NpgDirection dir = exact_npg_direction(ex.mdp, ex.policy0, rc.pair_cap);
      rep.lines.push_back("note fisher matrix at theta0: lambda_min = " +
                          format_double(dir.lambda_min) +
                          (dir.clipped ? " (rank-deficient; min-norm solve in use)" : ""));
    } catch (const CapacityError&) {
      rep.lines.push_back("note fisher matrix check skipped (enumeration cap)");
    }
  }
  return rep;
}

}  // namespace dac
