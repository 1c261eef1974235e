// Fixed-point encoding of affine ensemble weights and assembly of the
// matching QUBO. The normative objective is the constrained least-squares
// J(w) with ridge penalty; QUBO coefficients are derived by substituting the
// bit code into that objective, so energy differences reproduce objective
// differences exactly (the all-zero bitstring is the zero of energy).
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qens/common.hpp"

namespace qens::qubo {

/// w = scale * chi - shift with chi = sum_r 2^-r Q_r over R bits.
struct FixedPointCode {
  int bits = 4;        // R
  double scale = 3.0;  // c
  double shift = 3.0;  // d

  void validate() const {
    if (bits < 1) throw ConfigError("code.R must be >= 1");
    if (!(shift > 0.0)) throw ConfigError("code.d must be > 0");
    if (!(scale > shift / 2.0)) {
      throw ConfigError("code.c must exceed d/2 so the weight range straddles zero");
    }
  }
};

struct EnsembleProblem {
  Matrix predictions;                      // M samples x K learners
  std::vector<double> targets;             // length M
  double lambda = 0.0;                     // ridge strength
  std::vector<std::string> learner_order;  // column names, defaulted if empty

  size_t samples() const { return predictions.rows; }
  size_t learners() const { return predictions.cols; }

  void validate() const {
    if (predictions.rows < 1) throw ConfigError("ensemble problem needs M >= 1 samples");
    if (predictions.cols < 2) throw ConfigError("ensemble problem needs K >= 2 learners");
    if (targets.size() != predictions.rows) {
      throw ConfigError("target length does not match prediction rows");
    }
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!learner_order.empty() && learner_order.size() != predictions.cols) {
      throw ConfigError("learner_order length does not match columns");
    }
    for (double v : predictions.data) {
      if (!std::isfinite(v)) throw ConfigError("non-finite prediction entry");
    }
    for (double v : targets) {
      if (!std::isfinite(v)) throw ConfigError("non-finite target entry");
    }
  }

  std::vector<std::string> column_names() const {
    if (!learner_order.empty()) return learner_order;
    std::vector<std::string> names;
    for (size_t k = 0; k < predictions.cols; ++k) names.push_back("h" + std::to_string(k));
    return names;
  }
};

struct BetaEntry {
  int i = 0;
  int j = 0;
  double value = 0.0;  // total coefficient of the unordered pair {i, j}
};

struct QuboProblem {
  int n_vars = 0;
  std::vector<double> alpha;
  std::vector<BetaEntry> beta;  // i < j, stored once per pair, zeros omitted
  FixedPointCode code;
  // provenance
  size_t meta_learners = 0;  // K
  size_t meta_samples = 0;   // M
  double meta_lambda = 0.0;
  std::vector<std::string> meta_learner_order;

  /// Dense symmetric pair-coefficient matrix (zero diagonal) for solvers.
  Matrix symmetric() const {
    Matrix s(static_cast<size_t>(n_vars), static_cast<size_t>(n_vars));
    for (const auto& e : beta) {
      s(e.i, e.j) = e.value;
      s(e.j, e.i) = e.value;
    }
    return s;
  }
};

// -------------------------------------------------------------- encoding ---

inline double decode_weight(std::span<const int> bits, const FixedPointCode& code) {
  if (bits.size() != static_cast<size_t>(code.bits)) {
    throw ConfigError("decode_weight: expected " + std::to_string(code.bits) + " bits, got " +
                      std::to_string(bits.size()));
  }
  double chi = 0.0;
  for (int r = 0; r < code.bits; ++r) {
    chi += std::ldexp(static_cast<double>(bits[r]), -r);
  }
  return code.scale * chi - code.shift;
}

/// Variables are numbered l = k*R + r for free learners k = 1..K-1, bit
/// r = 0..R-1, so l runs over [R, K*R-1]; position l-R indexes bitstrings.
inline int flat_index(int k, int r, int bits) {
  if (bits < 1 || k < 1 || r < 0 || r >= bits) {
    throw ConfigError("flat_index: (k, r) out of range");
  }
  return k * bits + r;
}

inline std::pair<int, int> unflatten_index(int l, int bits) {
  if (bits < 1 || l < bits) throw ConfigError("unflatten_index: l out of range");
  return {l / bits, l % bits};
}

inline std::vector<double> reconstruct_weights(std::span<const int> bitstring,
                                               const FixedPointCode& code, size_t learners) {
  if (learners < 2) throw ConfigError("reconstruct_weights: need K >= 2");
  const size_t n = (learners - 1) * static_cast<size_t>(code.bits);
  if (bitstring.size() != n) {
    throw ConfigError("reconstruct_weights: expected " + std::to_string(n) + " bits, got " +
                      std::to_string(bitstring.size()));
  }
  std::vector<double> w;
  w.reserve(learners);
  double partial = 0.0;
  for (size_t k = 0; k + 1 < learners; ++k) {
    const double wk =
        decode_weight(bitstring.subspan(k * code.bits, code.bits), code);
    w.push_back(wk);
    partial += wk;
  }
  w.push_back(1.0 - partial);
  return w;
}

// ------------------------------------------------------------ objectives ---

inline double objective_J_full(std::span<const double> w, const EnsembleProblem& prob) {
  prob.validate();
  if (w.size() != prob.learners()) throw ConfigError("objective: |w| must equal K");
  const size_t m_count = prob.samples();
  double mse = 0.0;
  for (size_t m = 0; m < m_count; ++m) {
    double pred = 0.0;
    for (size_t k = 0; k < w.size(); ++k) pred += w[k] * prob.predictions(m, k);
    const double r = pred - prob.targets[m];
    mse += r * r;
  }
  double penalty = 0.0;
  for (double wk : w) penalty += wk * wk;
  return mse / static_cast<double>(m_count) + prob.lambda * penalty;
}

/// J under the affine constraint, written over the free weights w_1..w_{K-1}
/// only: quad/lin collect the sample statistics against the eliminated last
/// column, `constant` is the dropped w-independent remainder, so
/// J_full([w_free, 1-sum]) = w'*quad*w + lin.w + constant.
struct ReducedObjective {
  Matrix quad;              // (K-1) x (K-1)
  std::vector<double> lin;  // K-1
  double constant = 0.0;
};

inline ReducedObjective reduce_objective(const EnsembleProblem& prob) {
  prob.validate();
  const size_t m_count = prob.samples();
  const size_t free = prob.learners() - 1;
  const size_t last = free;  // eliminated column

  ReducedObjective red;
  red.quad = Matrix(free, free);
  red.lin.assign(free, 0.0);

  // gap_k^m = h_k - h_K, err^m = h_K - y.
  double err_sq = 0.0;
  std::vector<double> cross(free, 0.0);  // (1/M) sum_m err * gap_k
  for (size_t m = 0; m < m_count; ++m) {
    const double err = prob.predictions(m, last) - prob.targets[m];
    err_sq += err * err;
    for (size_t k = 0; k < free; ++k) {
      const double gap_k = prob.predictions(m, k) - prob.predictions(m, last);
      cross[k] += err * gap_k;
      for (size_t k2 = 0; k2 <= k; ++k2) {
        const double gap_k2 = prob.predictions(m, k2) - prob.predictions(m, last);
        red.quad(k, k2) += gap_k * gap_k2;
      }
    }
  }
  const double inv_m = 1.0 / static_cast<double>(m_count);
  for (size_t k = 0; k < free; ++k) {
    for (size_t k2 = 0; k2 <= k; ++k2) {
      // ridge couples all free pairs through (1 - sum w)^2; the diagonal
      // additionally keeps its own w_k^2 term.
      double v = red.quad(k, k2) * inv_m + prob.lambda * (k == k2 ? 2.0 : 1.0);
      red.quad(k, k2) = v;
      red.quad(k2, k) = v;
    }
    red.lin[k] = 2.0 * (cross[k] * inv_m - prob.lambda);
  }
  red.constant = err_sq * inv_m + prob.lambda;
  return red;
}

inline double objective_J_reduced(std::span<const double> w_free,
                                  const EnsembleProblem& prob) {
  if (w_free.size() != prob.learners() - 1) {
    throw ConfigError("objective_J_reduced: |w_free| must equal K-1");
  }
  const auto red = reduce_objective(prob);
  double j = 0.0;
  for (size_t k = 0; k < w_free.size(); ++k) {
    for (size_t k2 = 0; k2 < w_free.size(); ++k2) {
      j += w_free[k] * red.quad(k, k2) * w_free[k2];
    }
    j += red.lin[k] * w_free[k];
  }
  return j;
}

// ----------------------------------------------------------------- build ---

inline QuboProblem build_qubo(const EnsembleProblem& prob, const FixedPointCode& code) {
  code.validate();
  const auto red = reduce_objective(prob);  // validates prob
  const size_t free = prob.learners() - 1;
  const int bits = code.bits;
  const int n = static_cast<int>(free) * bits;

  QuboProblem q;
  q.n_vars = n;
  q.code = code;
  q.alpha.assign(n, 0.0);
  q.meta_learners = prob.learners();
  q.meta_samples = prob.samples();
  q.meta_lambda = prob.lambda;
  q.meta_learner_order = prob.column_names();

  // Row sums of the quadratic form feed the shift (-d) part of the code.
  std::vector<double> row_sum(free, 0.0);
  for (size_t k = 0; k < free; ++k) {
    for (size_t k2 = 0; k2 < free; ++k2) row_sum[k] += red.quad(k, k2);
  }

  const double c = code.scale;
  const double d = code.shift;
  for (size_t k = 0; k < free; ++k) {
    for (int r = 0; r < bits; ++r) {
      const int i = static_cast<int>(k) * bits + r;  // bitstring position
      q.alpha[i] = c * c * std::ldexp(1.0, -2 * r) * red.quad(k, k) +
                   c * std::ldexp(1.0, -r) * (red.lin[k] - 2.0 * d * row_sum[k]);
    }
  }
  for (size_t k = 0; k < free; ++k) {
    for (int r = 0; r < bits; ++r) {
      const int i = static_cast<int>(k) * bits + r;
      for (size_t k2 = k; k2 < free; ++k2) {
        for (int r2 = (k2 == k ? r + 1 : 0); r2 < bits; ++r2) {
          const int j = static_cast<int>(k2) * bits + r2;
          // both orderings of the symmetric double sum, collected once
          const double v = 2.0 * c * c * std::ldexp(1.0, -(r + r2)) * red.quad(k, k2);
          if (v != 0.0) q.beta.push_back({i, j, v});
        }
      }
    }
  }

  for (double a : q.alpha) {
    if (!std::isfinite(a)) throw NumericError("QUBO linear coefficient overflow");
  }
  for (const auto& e : q.beta) {
    if (!std::isfinite(e.value)) throw NumericError("QUBO pair coefficient overflow");
  }
  return q;
}

inline double qubo_energy(const QuboProblem& q, std::span<const int> bits) {
  if (bits.size() != static_cast<size_t>(q.n_vars)) {
    throw ConfigError("qubo_energy: bitstring length mismatch");
  }
  double e = 0.0;
  for (int i = 0; i < q.n_vars; ++i) {
    if (bits[i]) e += q.alpha[i];
  }
  for (const auto& b : q.beta) {
    if (bits[b.i] && bits[b.j]) e += b.value;
  }
  return e;
}

// ----------------------------------------------------------- persistence ---

inline nlohmann::ordered_json qubo_to_json(const QuboProblem& q) {
  nlohmann::ordered_json j;
  j["n_vars"] = q.n_vars;
  j["alpha"] = q.alpha;
  auto& jb = j["beta"] = nlohmann::ordered_json::array();
  for (const auto& e : q.beta) {
    jb.push_back(nlohmann::ordered_json::array({e.i, e.j, e.value}));
  }
  j["code"] = {{"R", q.code.bits}, {"c", q.code.scale}, {"d", q.code.shift}};
  j["meta"] = {{"K", q.meta_learners},
               {"M", q.meta_samples},
               {"lambda", q.meta_lambda},
               {"learner_order", q.meta_learner_order}};
  return j;
}

inline QuboProblem qubo_from_json(const nlohmann::ordered_json& j) {
  QuboProblem q;
  try {
    q.n_vars = j.at("n_vars").get<int>();
    q.alpha = j.at("alpha").get<std::vector<double>>();
    for (const auto& row : j.at("beta")) {
      if (row.size() != 3) throw ConfigError("beta rows must be [i, j, value]");
      BetaEntry e{row[0].get<int>(), row[1].get<int>(), row[2].get<double>()};
      if (e.i < 0 || e.j >= q.n_vars || e.i >= e.j) {
        throw ConfigError("beta indices must satisfy 0 <= i < j < n_vars");
      }
      q.beta.push_back(e);
    }
    const auto& jc = j.at("code");
    q.code.bits = jc.at("R").get<int>();
    q.code.scale = jc.at("c").get<double>();
    q.code.shift = jc.at("d").get<double>();
    const auto& jm = j.at("meta");
    q.meta_learners = jm.at("K").get<size_t>();
    q.meta_samples = jm.at("M").get<size_t>();
    q.meta_lambda = jm.at("lambda").get<double>();
    q.meta_learner_order = jm.at("learner_order").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed qubo file: ") + e.what());
  }
  if (q.alpha.size() != static_cast<size_t>(q.n_vars)) {
    throw ConfigError("alpha length does not match n_vars");
  }
  q.code.validate();
  return q;
}

inline void save_qubo(const QuboProblem& q, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << qubo_to_json(q).dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline QuboProblem load_qubo(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return qubo_from_json(j);
}

}  // namespace qens::qubo
