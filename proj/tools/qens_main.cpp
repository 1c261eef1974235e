// Command-line front end. One JSON config drives everything; each stage is
// also exposed as its own subcommand so intermediates can be rebuilt in
// isolation. Exit codes: 0 success, 2 bad config or usage, 3 stage failure.
#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "qens/experiment.hpp"

int main(int argc, char** argv) {
  namespace ex = qens::experiment;

  CLI::App app{
      "Trains small MLP regressors on a viscous Burgers residual, combines "
      "them into an affine ensemble through a QUBO, and evaluates the result."};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string stage_sel;
  std::string method;
  int levels = 0;
  int reads = 0;
  int sweeps = 0;

  std::vector<std::pair<CLI::App*, ex::Stage>> stage_cmds;
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON file");
    cmd->add_option("--seed", seed, "master seed override (stage seeds derive from it)");
  };
  for (ex::Stage s : ex::pipeline_stages()) {
    auto* cmd = app.add_subcommand(ex::stage_name(s), "run the " + ex::stage_name(s) +
                                                          " stage unconditionally");
    add_common(cmd);
    if (s == ex::Stage::Solve) {
      cmd->add_option("--method", method, "solver backend: exact or sa");
      cmd->add_option("--levels", levels, "energy levels kept by the exact solver");
      cmd->add_option("--reads", reads, "annealer restarts");
      cmd->add_option("--sweeps", sweeps, "annealer sweeps per read");
    }
    stage_cmds.emplace_back(cmd, s);
  }
  auto* pipeline_cmd =
      app.add_subcommand("pipeline", "run all stages, resuming from existing artifacts");
  add_common(pipeline_cmd);
  pipeline_cmd->add_option("--stage", stage_sel,
                           "run only this stage (unconditionally) instead of all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  ex::ExperimentConfig cfg;
  std::vector<ex::Stage> to_run;
  bool resume = false;
  try {
    if (!config_path.empty()) cfg = ex::load_experiment(config_path);
    for (const auto& [cmd, s] : stage_cmds) {
      if (!cmd->parsed()) continue;
      to_run = {s};
      if (s == ex::Stage::Solve) {
        if (cmd->count("--method") > 0) cfg.solver.method = method;
        if (cmd->count("--levels") > 0) cfg.solver.levels = levels;
        if (cmd->count("--reads") > 0) cfg.solver.sa.num_reads = reads;
        if (cmd->count("--sweeps") > 0) cfg.solver.sa.sweeps = sweeps;
      }
      if (cmd->count("--seed") > 0) cfg.seed = seed;
    }
    if (pipeline_cmd->parsed()) {
      if (pipeline_cmd->count("--seed") > 0) cfg.seed = seed;
      if (stage_sel.empty()) {
        to_run.assign(ex::pipeline_stages().begin(), ex::pipeline_stages().end());
        resume = true;
      } else {
        to_run = {ex::parse_stage(stage_sel)};
      }
    }
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  for (ex::Stage s : to_run) {
    if (resume && ex::stage_done(cfg, s)) {
      std::cout << "skipping " << ex::stage_name(s) << " (artifacts exist)\n";
      continue;
    }
    std::cout << "running " << ex::stage_name(s) << '\n';
    try {
      ex::run_stage(cfg, s);
    } catch (const std::exception& e) {
      std::cerr << "stage " << ex::stage_name(s) << " failed: " << e.what() << '\n';
      return 3;
    }
  }
  return 0;
}
