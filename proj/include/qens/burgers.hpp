// Analytical benchmark: 1D viscous Burgers equation on [0, 2pi] with the
// two-Gaussian Cole-Hopf solution drifting at speed 4, plus dataset sampling.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "qens/common.hpp"

namespace qens::burgers {

inline constexpr double kDomainLeft = 0.0;
inline constexpr double kDomainRight = 2.0 * std::numbers::pi;

/// Sign convention for the second Gaussian of the heat kernel pair.
/// `Corrected` uses exp(-(x - 4t - 2pi)^2 / (4 nu (t+1))), which solves the
/// equation in the frame moving at speed 4; `Verbatim` flips the drift sign
/// of that term and is kept only for fidelity experiments.
enum class Variant { Corrected, Verbatim };

inline std::string variant_name(Variant v) {
  return v == Variant::Corrected ? "corrected" : "verbatim";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "corrected") return Variant::Corrected;
  if (s == "verbatim") return Variant::Verbatim;
  throw ConfigError("burgers.variant must be 'corrected' or 'verbatim', got '" + s + "'");
}

struct BurgersConfig {
  double nu = 0.07;
  double t_max = 0.5;
  Variant variant = Variant::Corrected;

  void validate() const {
    if (!(nu > 0.0)) throw ConfigError("burgers.nu must be > 0");
    if (!(t_max > 0.0)) throw ConfigError("burgers.t_max must be > 0");
  }
};

/// d(log phi)/dx evaluated without ever forming phi itself: the larger
/// exponential is factored out, so the ratio stays finite even when both
/// Gaussians underflow.
inline double log_phi_dx(double t, double x, const BurgersConfig& cfg) {
  const double spread = 4.0 * cfg.nu * (t + 1.0);
  const double a = x - 4.0 * t;
  const double b = (cfg.variant == Variant::Corrected) ? a - 2.0 * std::numbers::pi
                                                       : x + 4.0 * t - 2.0 * std::numbers::pi;
  const double ea = -a * a / spread;
  const double eb = -b * b / spread;
  const double m = std::max(ea, eb);
  const double wa = std::exp(ea - m);
  const double wb = std::exp(eb - m);
  return (-2.0 / spread) * (a * wa + b * wb) / (wa + wb);
}

/// u(t, x) = -2 nu d(log phi)/dx + 4.
inline double analytic_solution(double t, double x, const BurgersConfig& cfg) {
  const double u = -2.0 * cfg.nu * log_phi_dx(t, x, cfg) + 4.0;
  if (!std::isfinite(u)) {
    throw std::domain_error("burgers solution is non-finite at t=" + fmt_double(t) +
                            ", x=" + fmt_double(x));
  }
  return u;
}

inline double initial_condition(double x, const BurgersConfig& cfg) {
  return analytic_solution(0.0, x, cfg);
}

/// Central-difference estimate of u_t + u u_x - nu u_xx for an arbitrary
/// scalar field. The full five-point stencil must stay inside
/// [0, t_max] x [0, 2pi].
inline double fd_pde_residual(const std::function<double(double, double)>& u_fn, double t,
                              double x, double h, const BurgersConfig& cfg) {
  if (!(h > 0.0)) throw std::domain_error("fd_pde_residual: h must be > 0");
  if (t - h < 0.0 || t + h > cfg.t_max || x - h < kDomainLeft || x + h > kDomainRight) {
    throw std::domain_error("fd_pde_residual: stencil leaves the domain at t=" +
                            fmt_double(t) + ", x=" + fmt_double(x));
  }
  const double u0 = u_fn(t, x);
  const double ut = (u_fn(t + h, x) - u_fn(t - h, x)) / (2.0 * h);
  const double uxp = u_fn(t, x + h);
  const double uxm = u_fn(t, x - h);
  const double ux = (uxp - uxm) / (2.0 * h);
  const double uxx = (uxp - 2.0 * u0 + uxm) / (h * h);
  return ut + u0 * ux - cfg.nu * uxx;
}

// --------------------------------------------------------------- dataset ---

struct Sample {
  double t = 0.0;
  double x = 0.0;
  double u = 0.0;
};

struct SampleSet {
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::vector<double> train_times;
  std::vector<double> test_times;
  std::uint64_t seed = 0;
};

inline void check_time_lists(const BurgersConfig& cfg, const std::vector<double>& train_times,
                             const std::vector<double>& test_times) {
  for (const auto& list : {train_times, test_times}) {
    for (double t : list) {
      if (t < 0.0 || t > cfg.t_max) {
        throw ConfigError("time slice " + fmt_double(t) + " outside [0, t_max]");
      }
    }
  }
  for (double a : train_times) {
    for (double b : test_times) {
      if (a == b) {
        throw ConfigError("train and test time lists overlap at t=" + fmt_double(a));
      }
    }
  }
}

/// For each listed time, draws n_per_time x-values uniformly on [0, 2pi] and
/// labels them with the analytic solution. Pure in (cfg, counts, lists, seed).
inline SampleSet sample_dataset(const BurgersConfig& cfg, int n_per_time,
                                const std::vector<double>& train_times,
                                const std::vector<double>& test_times, std::uint64_t seed) {
  cfg.validate();
  if (n_per_time < 1) throw ConfigError("n_per_time must be >= 1");
  check_time_lists(cfg, train_times, test_times);

  SampleSet set;
  set.train_times = train_times;
  set.test_times = test_times;
  set.seed = seed;

  auto fill = [&](const std::vector<double>& times, std::vector<Sample>& out,
                  std::string_view tag) {
    RngStream rng(derive_seed(seed, tag));
    out.reserve(times.size() * static_cast<size_t>(n_per_time));
    for (double t : times) {
      for (int i = 0; i < n_per_time; ++i) {
        const double x = rng.uniform(kDomainLeft, kDomainRight);
        out.push_back({t, x, analytic_solution(t, x, cfg)});
      }
    }
  };
  fill(train_times, set.train, "train");
  fill(test_times, set.test, "test");
  return set;
}

/// Writes both splits as rows `split,t,x,u` with round-trip safe doubles.
inline void write_dataset_csv(const SampleSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "split,t,x,u\n";
  auto dump = [&](const char* split, const std::vector<Sample>& rows) {
    for (const Sample& s : rows) {
      out << split << ',' << fmt_double(s.t) << ',' << fmt_double(s.x) << ','
          << fmt_double(s.u) << '\n';
    }
  };
  dump("train", set.train);
  dump("test", set.test);
  if (!out) throw std::runtime_error("write failed for " + path);
}

/// Inverse of write_dataset_csv. Time lists are recovered from the rows in
/// order of first appearance; the seed is not stored in the file.
inline SampleSet read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "split,t,x,u") {
    throw std::runtime_error(path + ": expected header 'split,t,x,u'");
  }
  SampleSet set;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string split, field;
    Sample s;
    auto next_double = [&](double& v) {
      if (!std::getline(ss, field, ',')) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": short row");
      }
      v = std::stod(field);
    };
    if (!std::getline(ss, split, ',')) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": short row");
    }
    next_double(s.t);
    next_double(s.x);
    next_double(s.u);
    if (split != "train" && split != "test") {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown split '" +
                               split + "'");
    }
    auto& bucket = (split == "train") ? set.train : set.test;
    auto& times = (split == "train") ? set.train_times : set.test_times;
    if (std::find(times.begin(), times.end(), s.t) == times.end()) times.push_back(s.t);
    bucket.push_back(s);
  }
  return set;
}

}  // namespace qens::burgers
