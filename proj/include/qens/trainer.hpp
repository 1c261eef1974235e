// Collocation training of one weak learner: sample random points, evaluate
// the summed squared residual G, take a plain gradient step with a decaying
// rate, stop at G <= epsilon or the epoch cap.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "qens/burgers.hpp"
#include "qens/common.hpp"
#include "qens/mlp.hpp"

namespace qens::trainer {

struct TrainConfig {
  int max_epochs = 2000;
  int batch_interior = 64;
  int batch_boundary = 16;
  int batch_initial = 16;
  double alpha0 = 1e-3;       // initial learning rate; 2e-3 diverges on the widest roster nets
  double decay_n0 = 300.0;    // alpha_n = alpha0 / (1 + n / n0)
  double epsilon = 0.0;       // stop once G <= epsilon (0 disables early stops)
  std::uint64_t seed = 1;

  void validate() const {
    if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
    if (batch_interior < 1 || batch_boundary < 1 || batch_initial < 1) {
      throw ConfigError("train batch sizes must be >= 1");
    }
    if (!(alpha0 > 0.0)) throw ConfigError("train.alpha0 must be > 0");
    if (!(decay_n0 > 0.0)) throw ConfigError("train.decay_n0 must be > 0");
    if (!(epsilon >= 0.0)) throw ConfigError("train.epsilon must be >= 0");
  }
};

struct CollocationBatch {
  std::vector<std::pair<double, double>> interior;  // (t, x)
  std::vector<double> boundary_times;               // tau, pairing x=0 with x=2pi
  std::vector<double> initial_xs;                   // a, at t=0
};

struct TrainingReport {
  std::vector<double> g_history;  // one G per epoch, evaluated before the step
  double final_g = 0.0;
  int epochs = 0;
  double seconds = 0.0;  // wall clock; everything else is seed-deterministic
};

inline CollocationBatch sample_collocation(const TrainConfig& cfg,
                                           const burgers::BurgersConfig& bc,
                                           std::uint64_t seed) {
  RngStream rng(seed);
  CollocationBatch batch;
  batch.interior.reserve(cfg.batch_interior);
  for (int i = 0; i < cfg.batch_interior; ++i) {
    const double t = rng.uniform(0.0, bc.t_max);
    const double x = rng.uniform(burgers::kDomainLeft, burgers::kDomainRight);
    batch.interior.emplace_back(t, x);
  }
  batch.boundary_times.reserve(cfg.batch_boundary);
  for (int i = 0; i < cfg.batch_boundary; ++i) {
    batch.boundary_times.push_back(rng.uniform(0.0, bc.t_max));
  }
  batch.initial_xs.reserve(cfg.batch_initial);
  for (int i = 0; i < cfg.batch_initial; ++i) {
    batch.initial_xs.push_back(rng.uniform(burgers::kDomainLeft, burgers::kDomainRight));
  }
  return batch;
}

namespace detail {

// Shared G evaluation: sums of squared terms in a fixed order. With grad
// non-null, also accumulates dG/dtheta via per-point reverse passes.
inline double batch_objective(const mlp::MlpParams& p, const CollocationBatch& batch,
                              const burgers::BurgersConfig& bc, std::vector<double>* grad,
                              mlp::MlpWorkspace& ws_a, mlp::MlpWorkspace& ws_b) {
  double g = 0.0;
  for (const auto& [t, x] : batch.interior) {
    const Jet2 f = mlp::forward_jets(p, t, x, ws_a);
    const double r = f.dt + f.v * f.dx - bc.nu * f.dxx;
    g += r * r;
    if (grad) {
      mlp::backward_jets(p, ws_a, {2 * r * f.dx, 2 * r, 2 * r * f.v, -2 * r * bc.nu},
                         *grad);
    }
  }
  for (double tau : batch.boundary_times) {
    const Jet2 f0 = mlp::forward_jets(p, tau, burgers::kDomainLeft, ws_a);
    const Jet2 f1 = mlp::forward_jets(p, tau, burgers::kDomainRight, ws_b);
    const double d = f0.v - f1.v;
    g += d * d;
    if (grad) {
      mlp::backward_jets(p, ws_a, {2 * d, 0, 0, 0}, *grad);
      mlp::backward_jets(p, ws_b, {-2 * d, 0, 0, 0}, *grad);
    }
  }
  for (double a : batch.initial_xs) {
    const Jet2 f = mlp::forward_jets(p, 0.0, a, ws_a);
    const double r = f.v - burgers::initial_condition(a, bc);
    g += r * r;
    if (grad) mlp::backward_jets(p, ws_a, {2 * r, 0, 0, 0}, *grad);
  }
  return g;
}

}  // namespace detail

inline double residual_G(const mlp::MlpParams& p, const CollocationBatch& batch,
                         const burgers::BurgersConfig& bc) {
  if (batch.interior.empty() && batch.boundary_times.empty() && batch.initial_xs.empty()) {
    throw ConfigError("residual_G needs a non-empty batch");
  }
  mlp::MlpWorkspace ws_a, ws_b;
  const double g = detail::batch_objective(p, batch, bc, nullptr, ws_a, ws_b);
  if (!std::isfinite(g)) throw NumericError("residual G is non-finite");
  return g;
}

/// G and dG/dtheta in one pass over the batch.
inline double residual_G_grad(const mlp::MlpParams& p, const CollocationBatch& batch,
                              const burgers::BurgersConfig& bc, std::vector<double>& grad) {
  grad.assign(p.param_count(), 0.0);
  mlp::MlpWorkspace ws_a, ws_b;
  return detail::batch_objective(p, batch, bc, &grad, ws_a, ws_b);
}

inline void sgd_step(mlp::MlpParams& p, std::span<const double> grad, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("sgd_step: alpha must be > 0");
  p.axpy(-alpha, grad);
}

inline std::pair<mlp::MlpParams, TrainingReport> train_weak_learner(
    const mlp::MlpArchitecture& arch, const TrainConfig& cfg,
    const burgers::BurgersConfig& bc) {
  arch.validate();
  cfg.validate();
  bc.validate();

  const auto start = std::chrono::steady_clock::now();
  mlp::MlpParams params = mlp::init_params(arch, derive_seed(cfg.seed, "init"));
  const std::uint64_t batch_root = derive_seed(cfg.seed, "batches");

  TrainingReport report;
  report.g_history.reserve(cfg.max_epochs);
  std::vector<double> grad;
  mlp::MlpWorkspace ws_a, ws_b;

  for (int n = 0; n < cfg.max_epochs; ++n) {
    const auto batch =
        sample_collocation(cfg, bc, derive_seed(batch_root, static_cast<std::uint64_t>(n)));
    double g;
    try {
      grad.assign(params.param_count(), 0.0);
      g = detail::batch_objective(params, batch, bc, &grad, ws_a, ws_b);
    } catch (const NumericError& e) {
      throw TrainingError(std::string("diverged: ") + e.what(), n);
    }
    if (!std::isfinite(g)) throw TrainingError("diverged: G is non-finite", n);
    report.g_history.push_back(g);
    if (g <= cfg.epsilon) break;

    const double alpha = cfg.alpha0 / (1.0 + static_cast<double>(n) / cfg.decay_n0);
    sgd_step(params, grad, alpha);
  }

  report.final_g = report.g_history.back();
  report.epochs = static_cast<int>(report.g_history.size());
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(params), report};
}

}  // namespace qens::trainer
