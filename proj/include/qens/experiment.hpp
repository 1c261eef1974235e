// One-config orchestration of the whole pipeline: sample the dataset, train
// the weak-learner roster, assemble and solve the ensemble QUBO, then emit
// the report CSVs. Every stage persists its artifacts, so a rerun resumes
// from whatever already exists on disk, and the master seed fans out to
// per-stage seeds so changing one stage's inputs never perturbs another.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qens/burgers.hpp"
#include "qens/common.hpp"
#include "qens/ensemble.hpp"
#include "qens/mlp.hpp"
#include "qens/qubo.hpp"
#include "qens/solvers.hpp"
#include "qens/trainer.hpp"

namespace qens::experiment {

struct DataConfig {
  int n_per_time = 250;
  std::vector<double> train_times{0.0, 0.05, 0.15, 0.20, 0.30, 0.35, 0.40, 0.50};
  std::vector<double> test_times{0.10, 0.25, 0.45};
};

struct SolverConfig {
  std::string method = "exact";  // "exact" | "sa"
  int levels = 11;               // spectrum depth kept by the exact method
  solve::SaConfig sa;            // the seed field is ignored; it derives from the master
};

struct SweepConfig {
  std::vector<int> r_values{3, 4, 5, 6};
  std::vector<double> lambda_grid{0.0, 0.01, 0.1, 1.0};
};

/// Default roster: four mixed-depth architectures, from a wide bottleneck
/// stack down to a small pyramid, so the ensemble has genuinely distinct
/// learners to weigh.
inline std::vector<mlp::MlpArchitecture> default_roster() {
  std::vector<mlp::MlpArchitecture> roster(4);
  roster[0].layer_sizes = {120, 30, 120, 30, 120};
  roster[1].layer_sizes = {10, 20, 30};
  roster[2].layer_sizes = {20, 20, 20, 20, 20};
  roster[3].layer_sizes = {60, 30, 10, 10, 30, 60};
  return roster;
}

struct ExperimentConfig {
  burgers::BurgersConfig burgers;
  DataConfig data;
  std::vector<mlp::MlpArchitecture> architectures = default_roster();
  trainer::TrainConfig train;  // its seed field is ignored; seeds derive per learner
  qubo::FixedPointCode code;
  double lambda = 0.0;
  SolverConfig solver;
  SweepConfig sweeps;
  int curve_points = 201;
  std::string output_dir = "out";
  std::uint64_t seed = 1;

  void validate() const {
    burgers.validate();
    if (data.n_per_time < 1) throw ConfigError("data.n_per_time must be >= 1");
    burgers::check_time_lists(burgers, data.train_times, data.test_times);
    if (architectures.size() < 2) {
      throw ConfigError("need at least 2 architectures to form an ensemble");
    }
    for (const auto& arch : architectures) arch.validate();
    train.validate();
    code.validate();
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (solver.method != "exact" && solver.method != "sa") {
      throw ConfigError("solver.method must be 'exact' or 'sa'");
    }
    if (solver.levels < 1) throw ConfigError("solver.levels must be >= 1");
    solver.sa.validate();
    if (sweeps.r_values.empty()) throw ConfigError("sweeps.r_values must not be empty");
    for (int r : sweeps.r_values) {
      if (r < 1) throw ConfigError("sweeps.r_values entries must be >= 1");
    }
    if (sweeps.lambda_grid.empty()) {
      throw ConfigError("sweeps.lambda_grid must not be empty");
    }
    for (double l : sweeps.lambda_grid) {
      if (!(l >= 0.0)) throw ConfigError("sweeps.lambda_grid entries must be >= 0");
    }
    if (curve_points < 2) throw ConfigError("eval.curve_points must be >= 2");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  }
};

// ----------------------------------------------------------- config parsing ---

namespace detail {
/// epsilon may be a number or the string "inf" (JSON has no infinity literal).
inline double parse_epsilon(const nlohmann::ordered_json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    throw ConfigError("train.epsilon string form must be 'inf', got '" + s + "'");
  }
  return j.get<double>();
}
}  // namespace detail

inline ExperimentConfig experiment_from_json(const nlohmann::ordered_json& j) {
  ExperimentConfig cfg;
  try {
    if (j.contains("burgers")) {
      const auto& b = j.at("burgers");
      cfg.burgers.nu = b.value("nu", cfg.burgers.nu);
      cfg.burgers.t_max = b.value("t_max", cfg.burgers.t_max);
      if (b.contains("variant")) {
        cfg.burgers.variant = burgers::parse_variant(b.at("variant").get<std::string>());
      }
    }
    if (j.contains("data")) {
      const auto& d = j.at("data");
      cfg.data.n_per_time = d.value("n_per_time", cfg.data.n_per_time);
      if (d.contains("train_times")) {
        cfg.data.train_times = d.at("train_times").get<std::vector<double>>();
      }
      if (d.contains("test_times")) {
        cfg.data.test_times = d.at("test_times").get<std::vector<double>>();
      }
    }
    if (j.contains("architectures")) {
      cfg.architectures.clear();
      for (const auto& a : j.at("architectures")) {
        mlp::MlpArchitecture arch;
        arch.layer_sizes = a.at("layer_sizes").get<std::vector<int>>();
        if (a.contains("activation")) {
          arch.activation = mlp::parse_activation(a.at("activation").get<std::string>());
        }
        cfg.architectures.push_back(std::move(arch));
      }
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
      cfg.train.batch_interior = t.value("batch_interior", cfg.train.batch_interior);
      cfg.train.batch_boundary = t.value("batch_boundary", cfg.train.batch_boundary);
      cfg.train.batch_initial = t.value("batch_initial", cfg.train.batch_initial);
      cfg.train.alpha0 = t.value("alpha0", cfg.train.alpha0);
      cfg.train.decay_n0 = t.value("decay_n0", cfg.train.decay_n0);
      if (t.contains("epsilon")) cfg.train.epsilon = detail::parse_epsilon(t.at("epsilon"));
    }
    if (j.contains("code")) {
      const auto& c = j.at("code");
      cfg.code.bits = c.value("R", cfg.code.bits);
      cfg.code.scale = c.value("c", cfg.code.scale);
      cfg.code.shift = c.value("d", cfg.code.shift);
    }
    cfg.lambda = j.value("lambda", cfg.lambda);
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      cfg.solver.method = s.value("method", cfg.solver.method);
      cfg.solver.levels = s.value("levels", cfg.solver.levels);
      cfg.solver.sa.num_reads = s.value("num_reads", cfg.solver.sa.num_reads);
      cfg.solver.sa.sweeps = s.value("sweeps", cfg.solver.sa.sweeps);
      cfg.solver.sa.beta_start = s.value("beta_start", cfg.solver.sa.beta_start);
      cfg.solver.sa.beta_end = s.value("beta_end", cfg.solver.sa.beta_end);
    }
    if (j.contains("sweeps")) {
      const auto& s = j.at("sweeps");
      if (s.contains("r_values")) {
        cfg.sweeps.r_values = s.at("r_values").get<std::vector<int>>();
      }
      if (s.contains("lambda_grid")) {
        cfg.sweeps.lambda_grid = s.at("lambda_grid").get<std::vector<double>>();
      }
    }
    if (j.contains("eval")) {
      cfg.curve_points = j.at("eval").value("curve_points", cfg.curve_points);
    }
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return experiment_from_json(j);
}

// ------------------------------------------------------------------- stages ---

enum class Stage {
  GenData,
  Train,
  BuildQubo,
  Solve,
  Evaluate,
  SweepPrecision,
  SweepLambda,
};

inline const std::vector<Stage>& pipeline_stages() {
  static const std::vector<Stage> order{
      Stage::GenData,   Stage::Train,          Stage::BuildQubo,  Stage::Solve,
      Stage::Evaluate,  Stage::SweepPrecision, Stage::SweepLambda};
  return order;
}

inline std::string stage_name(Stage s) {
  switch (s) {
    case Stage::GenData: return "gen-data";
    case Stage::Train: return "train";
    case Stage::BuildQubo: return "build-qubo";
    case Stage::Solve: return "solve";
    case Stage::Evaluate: return "evaluate";
    case Stage::SweepPrecision: return "sweep-precision";
    case Stage::SweepLambda: return "sweep-lambda";
  }
  throw ConfigError("unknown stage");
}

inline Stage parse_stage(const std::string& name) {
  for (Stage s : pipeline_stages()) {
    if (stage_name(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + name + "'");
}

struct ArtifactPaths {
  std::filesystem::path root;
  std::filesystem::path dataset;
  std::filesystem::path models_dir;
  std::filesystem::path training_report;
  std::filesystem::path qubo;
  std::filesystem::path solutions;
  std::filesystem::path curves;
  std::filesystem::path levels;
  std::filesystem::path precision;
  std::filesystem::path lambda_table;

  std::filesystem::path model(size_t learner) const {
    return models_dir / (learner_name(learner) + ".json");
  }

  static std::string learner_name(size_t learner) {
    std::string name = "learner_";
    if (learner < 10) name += '0';
    return name + std::to_string(learner);
  }
};

inline ArtifactPaths artifact_paths(const ExperimentConfig& cfg) {
  ArtifactPaths p;
  p.root = cfg.output_dir;
  p.dataset = p.root / "dataset.csv";
  p.models_dir = p.root / "models";
  p.training_report = p.root / "training_report.csv";
  p.qubo = p.root / "qubo.json";
  p.solutions = p.root / "solutions.json";
  p.curves = p.root / "fig1_curves.csv";
  p.levels = p.root / "fig2_levels.csv";
  p.precision = p.root / "table2.csv";
  p.lambda_table = p.root / "fig3_lambda.csv";
  return p;
}

inline bool stage_done(const ExperimentConfig& cfg, Stage stage) {
  namespace fs = std::filesystem;
  const auto p = artifact_paths(cfg);
  switch (stage) {
    case Stage::GenData:
      return fs::exists(p.dataset);
    case Stage::Train: {
      if (!fs::exists(p.training_report)) return false;
      for (size_t i = 0; i < cfg.architectures.size(); ++i) {
        if (!fs::exists(p.model(i))) return false;
      }
      return true;
    }
    case Stage::BuildQubo:
      return fs::exists(p.qubo);
    case Stage::Solve:
      return fs::exists(p.solutions);
    case Stage::Evaluate:
      return fs::exists(p.curves) && fs::exists(p.levels);
    case Stage::SweepPrecision:
      return fs::exists(p.precision);
    case Stage::SweepLambda:
      return fs::exists(p.lambda_table);
  }
  throw ConfigError("unknown stage");
}

// -------------------------------------------------------- shared artifacts ---

inline std::vector<mlp::MlpParams> load_roster(const ExperimentConfig& cfg) {
  const auto p = artifact_paths(cfg);
  std::vector<mlp::MlpParams> roster;
  roster.reserve(cfg.architectures.size());
  for (size_t i = 0; i < cfg.architectures.size(); ++i) {
    roster.push_back(mlp::load_model(p.model(i).string()));
  }
  return roster;
}

inline qubo::EnsembleProblem assemble_problem(const ExperimentConfig& cfg,
                                              const burgers::SampleSet& set,
                                              const std::vector<mlp::MlpParams>& roster) {
  qubo::EnsembleProblem prob;
  prob.predictions = ensemble::prediction_matrix(roster, set.train);
  prob.targets = ensemble::sample_targets(set.train);
  prob.lambda = cfg.lambda;
  for (size_t i = 0; i < roster.size(); ++i) {
    prob.learner_order.push_back(ArtifactPaths::learner_name(i));
  }
  return prob;
}

struct SolutionsFile {
  std::string method;
  size_t k_learners = 0;
  qubo::FixedPointCode code;
  solve::SolveResult result;
};

inline void save_solutions(const SolutionsFile& sol, const std::string& path) {
  auto sample_json = [&](const solve::SolveResult::Sample& s) {
    return nlohmann::ordered_json{
        {"bits", s.bits},
        {"energy", s.energy},
        {"read", s.read},
        {"weights", qubo::reconstruct_weights(s.bits, sol.code, sol.k_learners)}};
  };
  nlohmann::ordered_json j;
  j["method"] = sol.method;
  j["K"] = sol.k_learners;
  j["code"] = {{"R", sol.code.bits}, {"c", sol.code.scale}, {"d", sol.code.shift}};
  j["best"] = sample_json(sol.result.best);
  auto& js = j["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : sol.result.samples) js.push_back(sample_json(s));

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline SolutionsFile load_solutions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  SolutionsFile sol;
  try {
    sol.method = j.at("method").get<std::string>();
    sol.k_learners = j.at("K").get<size_t>();
    const auto& jc = j.at("code");
    sol.code.bits = jc.at("R").get<int>();
    sol.code.scale = jc.at("c").get<double>();
    sol.code.shift = jc.at("d").get<double>();
    auto parse_sample = [](const nlohmann::ordered_json& js) {
      solve::SolveResult::Sample s;
      s.bits = js.at("bits").get<std::vector<int>>();
      s.energy = js.at("energy").get<double>();
      s.read = js.at("read").get<int>();
      return s;
    };
    sol.result.best = parse_sample(j.at("best"));
    for (const auto& js : j.at("samples")) {
      sol.result.samples.push_back(parse_sample(js));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed solutions file: ") + e.what());
  }
  sol.code.validate();
  if (sol.result.samples.empty()) throw ConfigError("solutions file holds no samples");
  return sol;
}

/// Regroup persisted samples into ascending energy levels (states deduped and
/// lex-sorted). For the exact method this reproduces the solver's spectrum;
/// for annealing it yields the observed levels.
inline solve::Spectrum spectrum_from_samples(
    const std::vector<solve::SolveResult::Sample>& samples) {
  struct Bucket {
    double energy = 0.0;
    std::set<std::vector<int>> states;
  };
  std::map<double, Bucket> grouped;
  for (const auto& s : samples) {
    auto [it, inserted] = grouped.try_emplace(solve::quantize_energy(s.energy));
    if (inserted || s.energy < it->second.energy) it->second.energy = s.energy;
    it->second.states.insert(s.bits);
  }
  solve::Spectrum spectrum;
  for (auto& [key, bucket] : grouped) {
    solve::Spectrum::Level level;
    level.energy = bucket.energy;
    level.states.assign(bucket.states.begin(), bucket.states.end());
    spectrum.levels.push_back(std::move(level));
  }
  return spectrum;
}

// ------------------------------------------------------------ stage runners ---

inline std::unique_ptr<solve::Sampler> make_sampler(const ExperimentConfig& cfg,
                                                    const std::string& stage_tag,
                                                    int exact_levels) {
  if (cfg.solver.method == "exact") {
    return std::make_unique<solve::ExactSampler>(exact_levels);
  }
  solve::SaConfig sc = cfg.solver.sa;
  sc.seed = derive_seed(cfg.seed, stage_tag);
  return std::make_unique<solve::SaSampler>(sc);
}

inline void run_gen_data(const ExperimentConfig& cfg) {
  const auto p = artifact_paths(cfg);
  std::filesystem::create_directories(p.root);
  const auto set =
      burgers::sample_dataset(cfg.burgers, cfg.data.n_per_time, cfg.data.train_times,
                              cfg.data.test_times, derive_seed(cfg.seed, "gen-data"));
  burgers::write_dataset_csv(set, p.dataset.string());
}

inline void run_train(const ExperimentConfig& cfg) {
  const auto p = artifact_paths(cfg);
  std::filesystem::create_directories(p.models_dir);
  const std::uint64_t train_root = derive_seed(cfg.seed, "train");

  // The report lands under its final name only once every learner finished,
  // so a half-written file never marks the stage as done.
  const auto scratch = p.training_report.string() + ".tmp";
  {
    std::ofstream report(scratch);
    if (!report) throw std::runtime_error("cannot open " + scratch + " for writing");
    report << "learner,epoch,G\n";
    for (size_t i = 0; i < cfg.architectures.size(); ++i) {
      trainer::TrainConfig tc = cfg.train;
      tc.seed = derive_seed(train_root, i);
      const auto [params, rep] =
          trainer::train_weak_learner(cfg.architectures[i], tc, cfg.burgers);
      mlp::save_model(params, p.model(i).string());
      for (size_t epoch = 0; epoch < rep.g_history.size(); ++epoch) {
        report << i << ',' << epoch << ',' << fmt_double(rep.g_history[epoch]) << '\n';
      }
    }
    if (!report) throw std::runtime_error("write failed for " + scratch);
  }
  std::filesystem::rename(scratch, p.training_report);
}

inline void run_build_qubo(const ExperimentConfig& cfg) {
  const auto p = artifact_paths(cfg);
  const auto set = burgers::read_dataset_csv(p.dataset.string());
  const auto roster = load_roster(cfg);
  const auto prob = assemble_problem(cfg, set, roster);
  qubo::save_qubo(qubo::build_qubo(prob, cfg.code), p.qubo.string());
}

inline void run_solve(const ExperimentConfig& cfg) {
  const auto p = artifact_paths(cfg);
  const auto q = qubo::load_qubo(p.qubo.string());
  const auto sampler = make_sampler(cfg, "solve", cfg.solver.levels);
  SolutionsFile sol;
  sol.method = cfg.solver.method;
  sol.k_learners = q.meta_learners;
  sol.code = q.code;
  sol.result = sampler->sample(q);
  save_solutions(sol, p.solutions.string());
}

inline void run_evaluate(const ExperimentConfig& cfg) {
  const auto p = artifact_paths(cfg);
  const auto set = burgers::read_dataset_csv(p.dataset.string());
  const auto roster = load_roster(cfg);
  const auto sol = load_solutions(p.solutions.string());

  const auto spectrum = spectrum_from_samples(sol.result.samples);
  const auto rows = ensemble::evaluate_spectrum(spectrum, roster, set.train, set.test,
                                                sol.code, sol.k_learners);
  ensemble::write_levels_csv(p.levels.string(), sol.code.bits, rows);

  std::vector<std::string> names;
  for (size_t i = 0; i < sol.k_learners; ++i) {
    names.push_back(ArtifactPaths::learner_name(i));
  }
  const auto model =
      ensemble::model_from_bits(sol.result.best.bits, sol.code, sol.k_learners, names);
  const auto curve = ensemble::sample_curves(model, roster, cfg.burgers, set.test_times,
                                             cfg.curve_points);
  ensemble::write_curves_csv(p.curves.string(), curve, sol.method);
}

inline void run_sweep_precision(const ExperimentConfig& cfg) {
  const auto p = artifact_paths(cfg);
  const auto set = burgers::read_dataset_csv(p.dataset.string());
  const auto roster = load_roster(cfg);
  const auto prob = assemble_problem(cfg, set, roster);

  const solve::ExactSampler exact(1);
  auto exact_rows = ensemble::precision_sweep(prob, cfg.sweeps.r_values, exact, set.test,
                                              roster, cfg.code.scale, cfg.code.shift);
  solve::SaConfig sc = cfg.solver.sa;
  sc.seed = derive_seed(cfg.seed, "sweep-precision");
  const solve::SaSampler annealer(sc);
  auto sa_rows = ensemble::precision_sweep(prob, cfg.sweeps.r_values, annealer, set.test,
                                           roster, cfg.code.scale, cfg.code.shift);
  ensemble::write_precision_csv(
      p.precision.string(),
      {{"exact", std::move(exact_rows)}, {"sa", std::move(sa_rows)}});
}

inline void run_sweep_lambda(const ExperimentConfig& cfg) {
  const auto p = artifact_paths(cfg);
  const auto set = burgers::read_dataset_csv(p.dataset.string());
  const auto roster = load_roster(cfg);
  const auto prob = assemble_problem(cfg, set, roster);
  const auto sampler = make_sampler(cfg, "sweep-lambda", 1);
  const auto rows = ensemble::lambda_sweep(prob, cfg.sweeps.lambda_grid, *sampler,
                                           set.test, roster, cfg.code);
  ensemble::write_lambda_csv(p.lambda_table.string(), rows);
}

inline void run_stage(const ExperimentConfig& cfg, Stage stage) {
  switch (stage) {
    case Stage::GenData: return run_gen_data(cfg);
    case Stage::Train: return run_train(cfg);
    case Stage::BuildQubo: return run_build_qubo(cfg);
    case Stage::Solve: return run_solve(cfg);
    case Stage::Evaluate: return run_evaluate(cfg);
    case Stage::SweepPrecision: return run_sweep_precision(cfg);
    case Stage::SweepLambda: return run_sweep_lambda(cfg);
  }
  throw ConfigError("unknown stage");
}

/// Run every stage in order, skipping the ones whose artifacts already exist.
inline void run_pipeline(const ExperimentConfig& cfg) {
  for (Stage s : pipeline_stages()) {
    if (!stage_done(cfg, s)) run_stage(cfg, s);
  }
}

}  // namespace qens::experiment
