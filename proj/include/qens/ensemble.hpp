// Ensemble reconstruction and the evaluation sweeps behind the report CSVs:
// solution curves, level-vs-loss tables, the precision (R) sweep and the
// regularization (lambda) sweep.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qens/burgers.hpp"
#include "qens/common.hpp"
#include "qens/mlp.hpp"
#include "qens/qubo.hpp"
#include "qens/solvers.hpp"

namespace qens::ensemble {

/// Affine mixture over a fixed roster of weak learners, f = sum_k w_k h_k.
/// Weight order matches the column order the QUBO was built with.
struct EnsembleModel {
  std::vector<double> weights;
  std::vector<std::string> learner_names;  // optional, aligned when present

  void validate() const {
    if (weights.size() < 2) throw ConfigError("ensemble needs at least 2 weights");
    double sum = 0.0;
    for (double w : weights) {
      if (!std::isfinite(w)) throw ConfigError("non-finite ensemble weight");
      sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-12) {
      throw ConfigError("ensemble weights must sum to 1, got " + fmt_double(sum));
    }
    if (!learner_names.empty() && learner_names.size() != weights.size()) {
      throw ConfigError("learner name count does not match weight count");
    }
  }
};

inline EnsembleModel model_from_bits(std::span<const int> bits,
                                     const qubo::FixedPointCode& code, size_t learners,
                                     std::vector<std::string> names = {}) {
  EnsembleModel m{qubo::reconstruct_weights(bits, code, learners), std::move(names)};
  m.validate();
  return m;
}

/// One row of an evaluation table. The identifier is whatever the sweep
/// varies: level index, precision R, or lambda.
struct EvalRow {
  double identifier = 0.0;
  double train_mse = 0.0;
  double test_mse = 0.0;
  double energy = 0.0;   // winning (or level) energy where a solver was involved
  double seconds = 0.0;  // solver wall time for sweep rows, 0 otherwise
};

// ------------------------------------------------------------- prediction ---

/// M x K matrix of learner forward passes: column k holds learner k's value
/// at every point. Shared by the QUBO build and every evaluator so that
/// matrix-based and direct predictions agree bitwise.
inline Matrix prediction_matrix(std::span<const mlp::MlpParams> learners,
                                std::span<const burgers::Sample> points) {
  if (learners.empty()) throw ConfigError("prediction_matrix: no learners");
  if (points.empty()) throw ConfigError("prediction_matrix: no points");
  Matrix h(points.size(), learners.size());
  for (size_t m = 0; m < points.size(); ++m) {
    for (size_t k = 0; k < learners.size(); ++k) {
      h(m, k) = mlp::forward(learners[k], points[m].t, points[m].x);
    }
  }
  return h;
}

inline std::vector<double> combine_predictions(const Matrix& h, std::span<const double> w) {
  if (w.size() != h.cols) throw ConfigError("combine_predictions: weight count mismatch");
  std::vector<double> out(h.rows, 0.0);
  for (size_t m = 0; m < h.rows; ++m) {
    double pred = 0.0;
    for (size_t k = 0; k < h.cols; ++k) pred += w[k] * h(m, k);
    out[m] = pred;
  }
  return out;
}

inline std::vector<double> sample_targets(std::span<const burgers::Sample> points) {
  std::vector<double> y(points.size());
  for (size_t i = 0; i < points.size(); ++i) y[i] = points[i].u;
  return y;
}

inline std::vector<double> predict_ensemble(const EnsembleModel& model,
                                            std::span<const mlp::MlpParams> learners,
                                            std::span<const burgers::Sample> points) {
  model.validate();
  if (learners.size() != model.weights.size()) {
    throw ConfigError("predict_ensemble: learner roster does not match weights");
  }
  if (points.empty()) return {};
  return combine_predictions(prediction_matrix(learners, points), model.weights);
}

inline double mse_loss(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw ConfigError("mse_loss: empty input");
  if (predictions.size() != targets.size()) throw ConfigError("mse_loss: length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    acc += d * d;
  }
  return acc / static_cast<double>(predictions.size());
}

// -------------------------------------------------------------- evaluators ---

/// Per level: pick the lowest-lexicographic bitstring among the degenerate
/// states, rebuild the weights, and score both splits.
inline std::vector<EvalRow> evaluate_spectrum(const solve::Spectrum& spectrum,
                                              std::span<const mlp::MlpParams> learners,
                                              std::span<const burgers::Sample> train,
                                              std::span<const burgers::Sample> test,
                                              const qubo::FixedPointCode& code,
                                              size_t k_learners) {
  if (spectrum.levels.empty()) throw ConfigError("evaluate_spectrum: empty spectrum");
  if (learners.size() != k_learners) {
    throw ConfigError("evaluate_spectrum: learner roster does not match K");
  }
  const Matrix h_train = prediction_matrix(learners, train);
  const Matrix h_test = prediction_matrix(learners, test);
  const auto y_train = sample_targets(train);
  const auto y_test = sample_targets(test);

  std::vector<EvalRow> rows;
  rows.reserve(spectrum.levels.size());
  for (size_t level = 0; level < spectrum.levels.size(); ++level) {
    const auto& lv = spectrum.levels[level];
    if (lv.states.empty()) throw ConfigError("evaluate_spectrum: level without states");
    const auto& rep = *std::min_element(lv.states.begin(), lv.states.end());
    const auto w = qubo::reconstruct_weights(rep, code, k_learners);
    EvalRow row;
    row.identifier = static_cast<double>(level);
    row.energy = lv.energy;
    row.train_mse = mse_loss(combine_predictions(h_train, w), y_train);
    row.test_mse = mse_loss(combine_predictions(h_test, w), y_test);
    rows.push_back(row);
  }
  return rows;
}

/// For each R: encode, solve, and score the winning weights on both splits.
/// The train split is the one baked into `prob`; seconds cover the solver
/// call only.
inline std::vector<EvalRow> precision_sweep(const qubo::EnsembleProblem& prob,
                                            std::span<const int> r_values,
                                            const solve::Sampler& sampler,
                                            std::span<const burgers::Sample> test,
                                            std::span<const mlp::MlpParams> learners,
                                            double scale = 3.0, double shift = 3.0) {
  prob.validate();
  if (r_values.empty()) throw ConfigError("precision_sweep: empty R grid");
  if (learners.size() != prob.learners()) {
    throw ConfigError("precision_sweep: learner roster does not match problem columns");
  }
  const Matrix h_test = prediction_matrix(learners, test);
  const auto y_test = sample_targets(test);

  std::vector<EvalRow> rows;
  rows.reserve(r_values.size());
  for (int r : r_values) {
    const qubo::FixedPointCode code{r, scale, shift};
    const auto q = qubo::build_qubo(prob, code);
    const auto start = std::chrono::steady_clock::now();
    const auto result = sampler.sample(q);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    const auto w = qubo::reconstruct_weights(result.best.bits, code, prob.learners());
    EvalRow row;
    row.identifier = static_cast<double>(r);
    row.energy = result.best.energy;
    row.seconds = elapsed.count();
    row.train_mse = mse_loss(combine_predictions(prob.predictions, w), prob.targets);
    row.test_mse = mse_loss(combine_predictions(h_test, w), y_test);
    rows.push_back(row);
  }
  return rows;
}

/// For each lambda: rebuild the QUBO at that ridge strength, solve, and
/// report the plain MSE (penalty excluded) of the winning weights. train_mse
/// is the headline column here: it is the quantity the QUBO encodes, so with
/// an exact solver the lambda = 0 row is the grid minimum by construction.
inline std::vector<EvalRow> lambda_sweep(const qubo::EnsembleProblem& prob,
                                         std::span<const double> lambda_grid,
                                         const solve::Sampler& sampler,
                                         std::span<const burgers::Sample> test,
                                         std::span<const mlp::MlpParams> learners,
                                         const qubo::FixedPointCode& code = {}) {
  prob.validate();
  code.validate();
  if (lambda_grid.empty()) throw ConfigError("lambda_sweep: empty lambda grid");
  for (double lambda : lambda_grid) {
    if (!(lambda >= 0.0)) throw ConfigError("lambda_sweep: lambda must be >= 0");
  }
  if (learners.size() != prob.learners()) {
    throw ConfigError("lambda_sweep: learner roster does not match problem columns");
  }
  const Matrix h_test = prediction_matrix(learners, test);
  const auto y_test = sample_targets(test);

  std::vector<EvalRow> rows;
  rows.reserve(lambda_grid.size());
  for (double lambda : lambda_grid) {
    qubo::EnsembleProblem scan = prob;
    scan.lambda = lambda;
    const auto q = qubo::build_qubo(scan, code);
    const auto start = std::chrono::steady_clock::now();
    const auto result = sampler.sample(q);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    const auto w = qubo::reconstruct_weights(result.best.bits, code, prob.learners());
    EvalRow row;
    row.identifier = lambda;
    row.energy = result.best.energy;
    row.seconds = elapsed.count();
    row.train_mse = mse_loss(combine_predictions(prob.predictions, w), prob.targets);
    row.test_mse = mse_loss(combine_predictions(h_test, w), y_test);
    rows.push_back(row);
  }
  return rows;
}

// ------------------------------------------------------------------ curves ---

struct CurvePoint {
  double t = 0.0;
  double x = 0.0;
  double u_analytic = 0.0;
  double u_ensemble = 0.0;
};

/// Ensemble vs analytic solution on a regular x grid at each listed time.
inline std::vector<CurvePoint> sample_curves(const EnsembleModel& model,
                                             std::span<const mlp::MlpParams> learners,
                                             const burgers::BurgersConfig& cfg,
                                             std::span<const double> times, int n_x) {
  cfg.validate();
  if (times.empty()) throw ConfigError("sample_curves: no times");
  if (n_x < 2) throw ConfigError("sample_curves: need at least 2 x samples");
  std::vector<burgers::Sample> pts;
  pts.reserve(times.size() * static_cast<size_t>(n_x));
  for (double t : times) {
    if (!(t >= 0.0) || !(t <= cfg.t_max)) {
      throw ConfigError("sample_curves: time outside [0, t_max]");
    }
    for (int i = 0; i < n_x; ++i) {
      const double x =
          burgers::kDomainRight * static_cast<double>(i) / static_cast<double>(n_x - 1);
      pts.push_back({t, x, 0.0});
    }
  }
  const auto preds = predict_ensemble(model, learners, pts);
  std::vector<CurvePoint> curve(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    curve[i] = {pts[i].t, pts[i].x,
                burgers::analytic_solution(pts[i].t, pts[i].x, cfg), preds[i]};
  }
  return curve;
}

// --------------------------------------------------------------- CSV output ---

namespace detail {
inline std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

inline void finish_csv(std::ofstream& out, const std::string& path) {
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline long long as_index(double v) { return std::llround(v); }
}  // namespace detail

inline void write_curves_csv(const std::string& path, std::span<const CurvePoint> curve,
                             const std::string& method) {
  auto out = detail::open_csv(path);
  out << "t,x,u_analytic,u_ensemble,method\n";
  for (const auto& p : curve) {
    out << fmt_double(p.t) << ',' << fmt_double(p.x) << ',' << fmt_double(p.u_analytic)
        << ',' << fmt_double(p.u_ensemble) << ',' << method << '\n';
  }
  detail::finish_csv(out, path);
}

/// Level table rows carry the level index in `identifier`.
inline void write_levels_csv(const std::string& path, int r_bits,
                             std::span<const EvalRow> rows) {
  auto out = detail::open_csv(path);
  out << "R,level,energy,train_mse,test_mse\n";
  for (const auto& row : rows) {
    out << r_bits << ',' << detail::as_index(row.identifier) << ','
        << fmt_double(row.energy) << ',' << fmt_double(row.train_mse) << ','
        << fmt_double(row.test_mse) << '\n';
  }
  detail::finish_csv(out, path);
}

/// Precision-table rows carry R in `identifier`; one block per method.
inline void write_precision_csv(
    const std::string& path,
    const std::vector<std::pair<std::string, std::vector<EvalRow>>>& blocks) {
  auto out = detail::open_csv(path);
  out << "R,method,train_mse,test_mse,seconds\n";
  for (const auto& [method, rows] : blocks) {
    for (const auto& row : rows) {
      out << detail::as_index(row.identifier) << ',' << method << ','
          << fmt_double(row.train_mse) << ',' << fmt_double(row.test_mse) << ','
          << fmt_double(row.seconds) << '\n';
    }
  }
  detail::finish_csv(out, path);
}

/// Lambda-table rows carry lambda in `identifier`; the headline mse is the
/// plain train-split MSE the QUBO encodes.
inline void write_lambda_csv(const std::string& path, std::span<const EvalRow> rows) {
  auto out = detail::open_csv(path);
  out << "lambda,mse\n";
  for (const auto& row : rows) {
    out << fmt_double(row.identifier) << ',' << fmt_double(row.train_mse) << '\n';
  }
  detail::finish_csv(out, path);
}

}  // namespace qens::ensemble
