#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "megpf/config.hpp"
#include "megpf/pipeline.hpp"
#include "megpf/smc.hpp"

namespace {

// Exit codes: 0 success, 1 unexpected, 2 config error, 3 data error,
// 4 numerical collapse during filtering.
constexpr int kExitUnexpected = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCollapse = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "megpf: Bayesian tracking of an unknown number of current dipoles "
      "from magnetometer time series"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  std::string runs_dir;
  std::string variant_a;
  std::string variant_b;
  megpf::RunOverrides overrides;

  CLI::App* gen = app.add_subcommand("gen", "Generate synthetic datasets");
  gen->add_option("--config", config_path, "Config file (INI/TOML subset)")
      ->required()
      ->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "Output data directory")->required();

  CLI::App* run =
      app.add_subcommand("run", "Run one filter variant over all datasets");
  run->add_option("--config", config_path, "Config file (INI/TOML subset)")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--data", data_dir, "Data directory from 'gen'")->required();
  run->add_option("--out", out_dir, "Run output directory")->required();
  run->add_option("--variant", overrides.variant,
                  "static-rm | static-bootstrap | rw-designed | rw-bootstrap "
                  "(default: [filter] variant)");
  run->add_option("--particles", overrides.particles,
                  "Particle count override");
  run->add_option("--workers", overrides.workers,
                  "Dataset-level worker count (also MEGPF_WORKERS env var)");
  run->add_option("--seed", overrides.seed, "Base seed override");
  run->add_option("--matched-budget", overrides.matched_budget,
                  "Target likelihood evaluations per dataset; the particle "
                  "count is scaled from a pilot run");

  CLI::App* eval =
      app.add_subcommand("eval", "Score run outputs against stored truth");
  eval->add_option("--config", config_path, "Config file (INI/TOML subset)")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir, "Data directory from 'gen'")->required();
  eval->add_option("--runs", runs_dir, "Run directory from 'run'")->required();
  eval->add_option("--out", out_dir, "Evaluation output directory")->required();

  CLI::App* compare = app.add_subcommand(
      "compare", "Compare cumulative log evidence between two variants");
  compare->add_option("--runs", runs_dir, "Run directory from 'run'")
      ->required();
  compare->add_option("--a", variant_a, "First variant name")->required();
  compare->add_option("--b", variant_b, "Second variant name")->required();
  compare->add_option("--out", out_dir, "Comparison output directory")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const megpf::ConfigFile cfg = megpf::ConfigFile::parse_file(config_path);
      megpf::cmd_gen(cfg, out_dir);
    } else if (run->parsed()) {
      const megpf::ConfigFile cfg = megpf::ConfigFile::parse_file(config_path);
      megpf::cmd_run(cfg, data_dir, out_dir, overrides);
    } else if (eval->parsed()) {
      const megpf::ConfigFile cfg = megpf::ConfigFile::parse_file(config_path);
      megpf::cmd_eval(cfg, data_dir, runs_dir, out_dir);
    } else if (compare->parsed()) {
      megpf::cmd_compare(runs_dir, variant_a, variant_b, out_dir);
    }
  } catch (const megpf::NumericalCollapse& e) {
    std::cerr << "numerical collapse: " << e.what() << "\n";
    return kExitCollapse;
  } catch (const megpf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const megpf::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::runtime_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUnexpected;
  }
  return 0;
}
