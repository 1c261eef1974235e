#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "qens/experiment.hpp"

#ifndef QENS_CLI_PATH
#error "QENS_CLI_PATH must point at the CLI binary"
#endif

using namespace qens;
namespace ex = qens::experiment;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string output;  // stdout and stderr combined
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

CliRun run_cli(const std::string& args, const fs::path& sandbox) {
  const auto log = sandbox / "cli_log.txt";
  const std::string cmd =
      std::string(QENS_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return {WEXITSTATUS(status), read_file(log)};
}

fs::path fresh_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("qens_pipeline_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Miniature but complete experiment: 4 tiny learners, K=4 x R=4 = 12 bits.
fs::path write_config(const fs::path& dir, const fs::path& out_dir,
                      const std::function<void(nlohmann::ordered_json&)>& patch = {}) {
  nlohmann::ordered_json j;
  j["burgers"] = {{"nu", 0.07}, {"t_max", 0.5}, {"variant", "corrected"}};
  j["data"] = {{"n_per_time", 40}, {"train_times", {0.0, 0.25}}, {"test_times", {0.1}}};
  j["architectures"] = nlohmann::ordered_json::array();
  for (int width : {3, 4, 5, 6}) {
    j["architectures"].push_back({{"layer_sizes", {width}}, {"activation", "tanh"}});
  }
  j["train"] = {{"max_epochs", 40}, {"batch_interior", 8},  {"batch_boundary", 4},
                {"batch_initial", 4}, {"alpha0", 0.002},    {"decay_n0", 300.0},
                {"epsilon", 0.0}};
  j["code"] = {{"R", 4}, {"c", 3.0}, {"d", 3.0}};
  j["lambda"] = 0.0;
  j["solver"] = {{"method", "exact"}, {"levels", 11},     {"num_reads", 20},
                 {"sweeps", 200},     {"beta_start", 0.1}, {"beta_end", 10.0}};
  j["sweeps"] = {{"r_values", {2, 3}}, {"lambda_grid", {0.0, 0.1}}};
  j["eval"] = {{"curve_points", 21}};
  j["output_dir"] = out_dir.string();
  j["seed"] = 11;
  if (patch) patch(j);
  const auto path = dir / "config.json";
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  return path;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::string drop_last_field(const std::string& line) {
  return line.substr(0, line.rfind(','));
}

}  // namespace

TEST_CASE("config parsing fills defaults and rejects bad values", "[pipeline]") {
  const auto cfg = ex::experiment_from_json(nlohmann::ordered_json::object());
  CHECK(cfg.architectures.size() == 4);
  CHECK(cfg.architectures[0].layer_sizes == std::vector<int>{120, 30, 120, 30, 120});
  CHECK(cfg.solver.method == "exact");
  CHECK(cfg.output_dir == "out");
  CHECK(cfg.data.train_times.size() == 8);
  CHECK(cfg.data.test_times.size() == 3);

  nlohmann::ordered_json j;
  j["train"] = {{"epsilon", "inf"}};
  CHECK(std::isinf(ex::experiment_from_json(j).train.epsilon));
  j["train"] = {{"epsilon", "huge"}};
  CHECK_THROWS_AS(ex::experiment_from_json(j), ConfigError);

  nlohmann::ordered_json one_arch;
  one_arch["architectures"] = {{{"layer_sizes", {3}}}};
  CHECK_THROWS_AS(ex::experiment_from_json(one_arch), ConfigError);

  nlohmann::ordered_json bad_method;
  bad_method["solver"] = {{"method", "quantum"}};
  CHECK_THROWS_AS(ex::experiment_from_json(bad_method), ConfigError);

  nlohmann::ordered_json bad_type;
  bad_type["lambda"] = "zero";
  CHECK_THROWS_AS(ex::experiment_from_json(bad_type), ConfigError);
}

TEST_CASE("stage names and artifact layout", "[pipeline]") {
  for (ex::Stage s : ex::pipeline_stages()) {
    CHECK(ex::parse_stage(ex::stage_name(s)) == s);
  }
  CHECK_THROWS_AS(ex::parse_stage("bogus"), ConfigError);

  CHECK(ex::ArtifactPaths::learner_name(0) == "learner_00");
  CHECK(ex::ArtifactPaths::learner_name(7) == "learner_07");
  CHECK(ex::ArtifactPaths::learner_name(12) == "learner_12");

  ex::ExperimentConfig cfg;
  cfg.output_dir = "somewhere";
  const auto p = ex::artifact_paths(cfg);
  CHECK(p.dataset == fs::path("somewhere") / "dataset.csv");
  CHECK(p.model(3) == fs::path("somewhere") / "models" / "learner_03.json");
  CHECK(p.precision == fs::path("somewhere") / "table2.csv");
}

TEST_CASE("sample regrouping merges quantized-equal energies", "[pipeline]") {
  std::vector<solve::SolveResult::Sample> samples;
  samples.push_back({{1, 0}, 1.0, 0});
  samples.push_back({{0, 1}, 1e-15, 1});
  samples.push_back({{0, 0}, 0.0, 2});
  samples.push_back({{0, 0}, 0.0, 3});  // duplicate state
  const auto spectrum = ex::spectrum_from_samples(samples);
  REQUIRE(spectrum.levels.size() == 2);
  CHECK(spectrum.levels[0].energy == 0.0);
  CHECK(spectrum.levels[0].states ==
        std::vector<std::vector<int>>{{0, 0}, {0, 1}});
  CHECK(spectrum.levels[1].energy == 1.0);
}

TEST_CASE("pipeline produces every artifact", "[pipeline]") {
  const auto dir = fresh_dir("full");
  const auto out = dir / "run";
  const auto config = write_config(dir, out);

  const auto run = run_cli("pipeline --config " + config.string(), dir);
  REQUIRE(run.code == 0);

  const auto q = qubo::load_qubo((out / "qubo.json").string());
  CHECK(q.n_vars == 12);  // (K-1) * R = 3 * 4
  CHECK(q.meta_learners == 4);
  CHECK(q.meta_learner_order[0] == "learner_00");

  for (const char* name : {"dataset.csv", "training_report.csv", "qubo.json",
                           "solutions.json", "fig1_curves.csv", "fig2_levels.csv",
                           "table2.csv", "fig3_lambda.csv"}) {
    CHECK(fs::exists(out / name));
  }
  for (int i = 0; i < 4; ++i) {
    CHECK(fs::exists(out / "models" / (ex::ArtifactPaths::learner_name(i) + ".json")));
  }

  CHECK(lines_of(read_file(out / "training_report.csv"))[0] == "learner,epoch,G");
  CHECK(lines_of(read_file(out / "fig1_curves.csv"))[0] ==
        "t,x,u_analytic,u_ensemble,method");
  const auto level_lines = lines_of(read_file(out / "fig2_levels.csv"));
  CHECK(level_lines[0] == "R,level,energy,train_mse,test_mse");
  CHECK(level_lines.size() == 12);  // 11 levels + header
  CHECK(lines_of(read_file(out / "table2.csv"))[0] == "R,method,train_mse,test_mse,seconds");
  CHECK(lines_of(read_file(out / "fig3_lambda.csv"))[0] == "lambda,mse");

  // training report covers every learner and epoch
  const auto report_lines = lines_of(read_file(out / "training_report.csv"));
  CHECK(report_lines.size() == 1 + 4 * 40);

  const auto sol = ex::load_solutions((out / "solutions.json").string());
  CHECK(sol.method == "exact");
  CHECK(sol.k_learners == 4);
  CHECK(sol.result.best.bits.size() == 12);
}

TEST_CASE("pipeline rerun resumes and leaves artifacts untouched", "[pipeline]") {
  const auto dir = fresh_dir("resume");
  const auto out = dir / "run";
  const auto config = write_config(dir, out);
  REQUIRE(run_cli("pipeline --config " + config.string(), dir).code == 0);

  const auto table2_before = read_file(out / "table2.csv");
  const auto dataset_before = read_file(out / "dataset.csv");

  const auto rerun = run_cli("pipeline --config " + config.string(), dir);
  REQUIRE(rerun.code == 0);
  for (ex::Stage s : ex::pipeline_stages()) {
    CHECK(rerun.output.find("skipping " + ex::stage_name(s)) != std::string::npos);
  }
  CHECK(read_file(out / "table2.csv") == table2_before);
  CHECK(read_file(out / "dataset.csv") == dataset_before);
}

TEST_CASE("fresh-directory rerun reproduces everything but timings", "[pipeline]") {
  const auto dir = fresh_dir("determinism");
  const auto out_a = dir / "a";
  const auto out_b = dir / "b";
  const auto config_a = write_config(dir, out_a);
  REQUIRE(run_cli("pipeline --config " + config_a.string(), dir).code == 0);
  const auto config_b = write_config(dir, out_b);
  REQUIRE(run_cli("pipeline --config " + config_b.string(), dir).code == 0);

  for (const char* name : {"dataset.csv", "training_report.csv", "qubo.json",
                           "solutions.json", "fig1_curves.csv", "fig2_levels.csv",
                           "fig3_lambda.csv", "models/learner_00.json",
                           "models/learner_03.json"}) {
    CHECK(read_file(out_a / name) == read_file(out_b / name));
  }

  // table2 is identical except for the wall-clock seconds column
  const auto ta = lines_of(read_file(out_a / "table2.csv"));
  const auto tb = lines_of(read_file(out_b / "table2.csv"));
  REQUIRE(ta.size() == tb.size());
  REQUIRE(ta.size() == 5);  // header + 2 R values x 2 methods
  CHECK(ta[0] == tb[0]);
  for (size_t i = 1; i < ta.size(); ++i) {
    CHECK(drop_last_field(ta[i]) == drop_last_field(tb[i]));
  }
}

TEST_CASE("deleting solutions re-solves without retraining", "[pipeline]") {
  const auto dir = fresh_dir("isolation");
  const auto out = dir / "run";
  const auto config = write_config(dir, out);
  REQUIRE(run_cli("pipeline --config " + config.string(), dir).code == 0);

  const auto solutions_before = read_file(out / "solutions.json");
  std::vector<std::string> models_before;
  for (int i = 0; i < 4; ++i) {
    models_before.push_back(
        read_file(out / "models" / (ex::ArtifactPaths::learner_name(i) + ".json")));
  }

  fs::remove(out / "solutions.json");
  const auto rerun = run_cli("pipeline --config " + config.string(), dir);
  REQUIRE(rerun.code == 0);
  CHECK(rerun.output.find("skipping train") != std::string::npos);
  CHECK(rerun.output.find("running solve") != std::string::npos);

  CHECK(read_file(out / "solutions.json") == solutions_before);
  for (int i = 0; i < 4; ++i) {
    CHECK(read_file(out / "models" / (ex::ArtifactPaths::learner_name(i) + ".json")) ==
          models_before[static_cast<size_t>(i)]);
  }
}

TEST_CASE("stage subcommands run in isolation", "[pipeline]") {
  const auto dir = fresh_dir("stages");
  const auto out = dir / "run";
  const auto config = write_config(dir, out);
  const std::string cfg_arg = " --config " + config.string();

  REQUIRE(run_cli("gen-data" + cfg_arg, dir).code == 0);
  CHECK(fs::exists(out / "dataset.csv"));
  CHECK_FALSE(fs::exists(out / "qubo.json"));

  REQUIRE(run_cli("train" + cfg_arg, dir).code == 0);
  CHECK(fs::exists(out / "training_report.csv"));

  REQUIRE(run_cli("build-qubo" + cfg_arg, dir).code == 0);
  CHECK(fs::exists(out / "qubo.json"));

  REQUIRE(run_cli("solve" + cfg_arg, dir).code == 0);
  const auto solutions_first = read_file(out / "solutions.json");

  REQUIRE(run_cli("evaluate" + cfg_arg, dir).code == 0);
  CHECK(fs::exists(out / "fig1_curves.csv"));
  CHECK(fs::exists(out / "fig2_levels.csv"));

  // the stage selector reruns a stage unconditionally but deterministically
  const auto rerun = run_cli("pipeline --stage solve" + cfg_arg, dir);
  REQUIRE(rerun.code == 0);
  CHECK(rerun.output.find("running solve") != std::string::npos);
  CHECK(read_file(out / "solutions.json") == solutions_first);

  REQUIRE(run_cli("sweep-precision" + cfg_arg, dir).code == 0);
  CHECK(fs::exists(out / "table2.csv"));
  REQUIRE(run_cli("sweep-lambda" + cfg_arg, dir).code == 0);
  CHECK(fs::exists(out / "fig3_lambda.csv"));
}

TEST_CASE("solve flags override the config", "[pipeline]") {
  const auto dir = fresh_dir("solveflags");
  const auto out = dir / "run";
  const auto config = write_config(dir, out);
  const std::string cfg_arg = " --config " + config.string();
  REQUIRE(run_cli("gen-data" + cfg_arg, dir).code == 0);
  REQUIRE(run_cli("train" + cfg_arg, dir).code == 0);
  REQUIRE(run_cli("build-qubo" + cfg_arg, dir).code == 0);

  const auto run =
      run_cli("solve --method sa --reads 5 --sweeps 50 --seed 4" + cfg_arg, dir);
  REQUIRE(run.code == 0);
  const auto sol = ex::load_solutions((out / "solutions.json").string());
  CHECK(sol.method == "sa");
  CHECK(sol.result.samples.size() == 5);
  for (const auto& s : sol.result.samples) {
    CHECK(s.energy == qubo::qubo_energy(qubo::load_qubo((out / "qubo.json").string()),
                                        s.bits));
  }
}

TEST_CASE("cli exit codes distinguish config and stage failures", "[pipeline]") {
  const auto dir = fresh_dir("exitcodes");
  const auto out = dir / "run";

  // no subcommand and unknown flags are usage errors
  CHECK(run_cli("", dir).code == 2);
  CHECK(run_cli("--help", dir).code == 0);
  CHECK(run_cli("pipeline --config " + (dir / "missing.json").string(), dir).code == 2);

  const auto garbage = dir / "garbage.json";
  std::ofstream(garbage) << "{ not json";
  CHECK(run_cli("pipeline --config " + garbage.string(), dir).code == 2);

  const auto one_arch = write_config(dir, out, [](nlohmann::ordered_json& j) {
    j["architectures"] = {{{"layer_sizes", {3}}}};
  });
  CHECK(run_cli("pipeline --config " + one_arch.string(), dir).code == 2);

  const auto config = write_config(dir, out);
  CHECK(run_cli("pipeline --stage bogus --config " + config.string(), dir).code == 2);
  CHECK(run_cli("solve --method quantum --config " + config.string(), dir).code == 2);

  // a stage asked to run without its inputs is a stage failure, not a config one
  const auto failed = run_cli("solve --config " + config.string(), dir);
  CHECK(failed.code == 3);
  CHECK(failed.output.find("stage solve failed") != std::string::npos);
}
