#pragma once

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dac/config.hpp"
#include "dac/harness.hpp"

namespace dac {

// Exit codes: 0 success, 2 configuration error, 3 assumption-validation
// failure, 4 I/O error.
inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"decentralized actor-critic laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir, values_csv, configs_csv, in_dir, out_file;
  long seed_override = -1;

  auto* run = app.add_subcommand("run", "run one experiment (mc_runs seeded replicas)");
  run->add_option("--config", config_path, "config file")->required();
  run->add_option("--seed", seed_override, "override run.seed");
  run->add_option("--out", out_dir, "override run.out");

  auto* ablate = app.add_subcommand("ablate-kc", "sweep the consensus period K_c");
  ablate->add_option("--config", config_path, "config file")->required();
  ablate->add_option("--values", values_csv, "comma-separated K_c values")->required();
  ablate->add_option("--out", out_dir, "override run.out");

  auto* compare = app.add_subcommand("compare", "aligned curves for several configs");
  compare->add_option("--configs", configs_csv, "comma-separated config files")->required();
  compare->add_option("--out", out_dir, "output directory");

  auto* plotdata = app.add_subcommand("plotdata", "long-format plot feed from aggregates");
  plotdata->add_option("--in", in_dir, "directory containing *_agg.csv files")->required();
  plotdata->add_option("--out", out_file, "output CSV path")->required();

  auto* validate = app.add_subcommand("validate", "check model assumptions for a config");
  validate->add_option("--config", config_path, "config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      RunConfig rc = resolve_config(KeyValueConfig::parse_file(config_path));
      if (seed_override >= 0) {
        rc.base_seed = std::uint64_t(seed_override);
        rc.resolved["run.seed"] = std::to_string(rc.base_seed);
      }
      ExperimentOutput out = run_experiment(rc, out_dir.empty() ? rc.out_dir : out_dir);
      for (const auto& f : out.run_files) std::cout << f << "\n";
      std::cout << out.aggregate_file << "\n";
    } else if (ablate->parsed()) {
      RunConfig rc = resolve_config(KeyValueConfig::parse_file(config_path));
      std::vector<int> values;
      std::stringstream ss(values_csv);
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!tok.empty()) values.push_back(std::stoi(tok));
      std::cout << ablation_kc(rc, values, out_dir.empty() ? rc.out_dir : out_dir) << "\n";
    } else if (compare->parsed()) {
      std::vector<RunConfig> configs;
      std::stringstream ss(configs_csv);
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!tok.empty())
          configs.push_back(resolve_config(KeyValueConfig::parse_file(tok)));
      if (configs.empty()) throw ConfigError("compare: no config files given");
      std::cout << compare_algorithms(configs,
                                      out_dir.empty() ? configs.front().out_dir : out_dir)
                << "\n";
    } else if (plotdata->parsed()) {
      std::cout << emit_plot_data(in_dir, out_file) << "\n";
    } else if (validate->parsed()) {
      RunConfig rc = resolve_config(KeyValueConfig::parse_file(config_path));
      ValidationReport rep = validate_config(rc);
      for (const auto& line : rep.lines) std::cout << line << "\n";
      if (!rep.ok) return 3;
    }
  } catch (const MixingError& e) {
    std::cerr << "assumption violation: " << e.what() << "\n";
    return 3;
  } catch (const AssumptionError& e) {
    std::cerr << "assumption violation: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CapacityError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace dac
