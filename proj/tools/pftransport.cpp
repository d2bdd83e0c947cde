// pftransport <subcommand> --config <path> [--out <dir>] [--seed <int>]
//
// Exit codes: 0 success, 2 invalid configuration or missing prerequisite,
// 3 solver did not converge (artifacts are still written), 1 other failure.

#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "pftransport/experiment.hpp"

namespace {

using pft::experiment::Runner;
using pft::experiment::StageStatus;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitNotConverged = 3;

struct Invocation {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int execute(const std::string& stage, const Invocation& inv) {
  pft::experiment::ExperimentConfig cfg = pft::experiment::load_config(inv.config);
  if (inv.seed) {
    cfg.validation.seed = *inv.seed;
    cfg.baseline.seed = *inv.seed;
  }
  const std::filesystem::path out = inv.out.empty() ? cfg.output_dir : std::filesystem::path(inv.out);
  Runner runner(cfg, out);

  StageStatus status = StageStatus::kOk;
  if (stage == "estimate") status = runner.estimate();
  else if (stage == "predict") status = runner.predict();
  else if (stage == "control") status = runner.control();
  else if (stage == "validate") status = runner.validate();
  else if (stage == "compare-baselines") status = runner.compare_baselines();
  else status = runner.run();

  std::cout << cfg.name << ": " << stage << " done, artifacts in " << out.string() << '\n';
  if (status == StageStatus::kNotConverged) {
    std::cerr << "warning: solver did not converge; see summary.json\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perron-Frobenius generator models for density transport and control"};
  app.require_subcommand(1);

  Invocation inv;
  std::string chosen;
  const std::vector<std::pair<std::string, std::string>> stages = {
      {"estimate", "Estimate the lifted generator model and write model.pftm"},
      {"predict", "Predict moments under the configured signal or stored controls"},
      {"control", "Solve for open-loop controls with DDP on the lifted model"},
      {"validate", "Compare predicted moments with Monte Carlo and linearized baselines"},
      {"compare-baselines", "Compare PF-DDP controls with DDP on the mean state"},
      {"run", "Run every stage the configured task needs"}};
  for (const auto& [name, help] : stages) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", inv.config, "Experiment configuration (JSON)")->required();
    sub->add_option("--out", inv.out, "Output directory (overrides output_dir)");
    sub->add_option_function<std::uint64_t>("--seed", [&inv](const std::uint64_t& s) { inv.seed = s; },
                                            "Sampling seed (overrides validation.seed and baseline.seed)");
    sub->callback([&chosen, n = name] { chosen = n; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    return execute(chosen, inv);
  } catch (const pft::experiment::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const pft::experiment::MissingPrerequisite& e) {
    std::cerr << "missing prerequisite: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
