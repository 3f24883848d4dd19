#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "lpk/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  long seed = -1;
  std::string out_dir;
  bool dry_run = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"loss path kernel experiments"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train-bound", "train by (stochastic) gradient flow and report the bound"},
      {"noise-sweep", "label-noise sweep of gamma and the measured gap"},
      {"stability", "paired-run stability against the regime envelopes"},
      {"krr", "kernel ridge regression closed form with Euler cross-check"},
      {"ntk", "tangent-kernel regime run with the condition-number bound"},
      {"single-index", "two-stage spherical flow on a single-index task"},
  };

  CommonArgs args;
  for (const auto& [name, desc] : commands) {
    CLI::App* cmd = app.add_subcommand(name, desc);
    cmd->add_option("--config", args.config_path, "experiment config file")->required();
    cmd->add_option("--seed", args.seed, "override config seed");
    cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
    cmd->add_flag("--dry-run", args.dry_run, "validate the config without running");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    lpk::ExperimentConfig cfg = lpk::ExperimentConfig::parse_file(args.config_path);
    cfg.set("experiment", command);
    if (args.seed >= 0) cfg.set("seed", std::to_string(args.seed));
    if (!args.out_dir.empty()) cfg.set("out", args.out_dir);
    const char* env_out = std::getenv("LPK_OUT_DIR");
    if (args.out_dir.empty() && env_out && *env_out) cfg.set("out", env_out);

    lpk::validate_config(cfg);
    if (args.dry_run) {
      std::cout << "config ok\n";
      return 0;
    }
    const std::string out_dir = cfg.get_or("out", "runs/" + command);
    const lpk::RunManifest manifest = lpk::run_experiment(cfg, out_dir);
    std::cout << "wrote " << manifest.files.size() + 1 << " files to " << out_dir << " in "
              << manifest.wall_clock_seconds << "s\n";
    return 0;
  } catch (const lpk::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const lpk::DivergenceError& e) {
    std::cerr << "numeric divergence: " << e.what() << " (step " << e.step() << ")\n";
    return 3;
  } catch (const lpk::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 4;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
