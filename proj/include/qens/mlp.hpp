// Dense feedforward networks on inputs (t, x) with one scalar output.
// Forward passes run either on plain doubles or on second-order jets, so a
// single evaluation yields f, f_t, f_x, f_xx exactly. Parameter gradients of
// squared-residual losses come from reverse accumulation through the taped
// jet forward pass.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qens/common.hpp"
#include "qens/jet.hpp"

namespace qens::mlp {

enum class Activation { Tanh, Sigmoid };

inline std::string activation_name(Activation a) {
  return a == Activation::Tanh ? "tanh" : "sigmoid";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw ConfigError("activation must be 'tanh' or 'sigmoid', got '" + s + "'");
}

struct MlpArchitecture {
  std::vector<int> layer_sizes;  // hidden widths only; input is (t, x), output scalar
  Activation activation = Activation::Tanh;

  void validate() const {
    if (layer_sizes.empty()) throw ConfigError("architecture needs at least one hidden layer");
    for (int w : layer_sizes) {
      if (w < 1) throw ConfigError("hidden layer width must be >= 1");
    }
  }

  // Full width list including the fixed input/output layers: [2, hidden..., 1].
  std::vector<int> dims() const {
    std::vector<int> d;
    d.reserve(layer_sizes.size() + 2);
    d.push_back(2);
    d.insert(d.end(), layer_sizes.begin(), layer_sizes.end());
    d.push_back(1);
    return d;
  }
};

struct MlpParams {
  MlpArchitecture arch;
  std::vector<Matrix> weights;               // weights[l]: dims[l+1] x dims[l]
  std::vector<std::vector<double>> biases;   // biases[l]: dims[l+1]

  size_t param_count() const {
    size_t n = 0;
    for (size_t l = 0; l < weights.size(); ++l) n += weights[l].data.size() + biases[l].size();
    return n;
  }

  // Flat layout [W0 row-major | b0 | W1 | b1 | ...]; gradients use the same order.
  std::vector<double> flatten() const {
    std::vector<double> theta;
    theta.reserve(param_count());
    for (size_t l = 0; l < weights.size(); ++l) {
      theta.insert(theta.end(), weights[l].data.begin(), weights[l].data.end());
      theta.insert(theta.end(), biases[l].begin(), biases[l].end());
    }
    return theta;
  }

  void assign(std::span<const double> theta) {
    if (theta.size() != param_count()) {
      throw ConfigError("parameter vector has wrong length");
    }
    size_t pos = 0;
    for (size_t l = 0; l < weights.size(); ++l) {
      for (double& w : weights[l].data) w = theta[pos++];
      for (double& b : biases[l]) b = theta[pos++];
    }
  }

  // theta <- theta + scale * delta, walking the flat layout without copies.
  void axpy(double scale, std::span<const double> delta) {
    if (delta.size() != param_count()) {
      throw ConfigError("update vector has wrong length");
    }
    size_t pos = 0;
    for (size_t l = 0; l < weights.size(); ++l) {
      for (double& w : weights[l].data) w += scale * delta[pos++];
      for (double& b : biases[l]) b += scale * delta[pos++];
    }
  }

  void validate() const {
    arch.validate();
    const auto d = arch.dims();
    if (weights.size() != d.size() - 1 || biases.size() != d.size() - 1) {
      throw ConfigError("layer count does not match architecture");
    }
    for (size_t l = 0; l + 1 < d.size(); ++l) {
      if (weights[l].rows != static_cast<size_t>(d[l + 1]) ||
          weights[l].cols != static_cast<size_t>(d[l])) {
        throw ConfigError("weight matrix shape mismatch at layer " + std::to_string(l));
      }
      if (biases[l].size() != static_cast<size_t>(d[l + 1])) {
        throw ConfigError("bias length mismatch at layer " + std::to_string(l));
      }
      for (double w : weights[l].data) {
        if (!std::isfinite(w)) throw ConfigError("non-finite weight");
      }
      for (double b : biases[l]) {
        if (!std::isfinite(b)) throw ConfigError("non-finite bias");
      }
    }
  }
};

/// Glorot-style init: W ~ U(-L, L) with L = sqrt(6 / (fan_in + fan_out)),
/// biases zero. Deterministic per (arch, seed).
inline MlpParams init_params(const MlpArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  const auto d = arch.dims();
  MlpParams p;
  p.arch = arch;
  RngStream rng(derive_seed(seed, "mlp-init"));
  for (size_t l = 0; l + 1 < d.size(); ++l) {
    const auto rows = static_cast<size_t>(d[l + 1]);
    const auto cols = static_cast<size_t>(d[l]);
    Matrix w(rows, cols);
    const double limit = std::sqrt(6.0 / static_cast<double>(d[l] + d[l + 1]));
    for (double& v : w.data) v = rng.uniform(-limit, limit);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(rows, 0.0);
  }
  return p;
}

// ------------------------------------------------------------ evaluation ---

inline double activate(Activation act, double z) {
  return act == Activation::Tanh ? std::tanh(z) : 1.0 / (1.0 + std::exp(-z));
}

/// First three derivatives of the activation at pre-activation z.
struct ActDerivs {
  double s1, s2, s3;
};

inline ActDerivs activation_derivs(Activation act, double z) {
  if (act == Activation::Tanh) {
    const double s = std::tanh(z);
    const double s1 = 1.0 - s * s;
    const double s2 = -2.0 * s * s1;
    return {s1, s2, -2.0 * s1 * s1 - 2.0 * s * s2};
  }
  const double s = 1.0 / (1.0 + std::exp(-z));
  const double s1 = s * (1.0 - s);
  const double s2 = s1 * (1.0 - 2.0 * s);
  return {s1, s2, s2 * (1.0 - 2.0 * s) - 2.0 * s1 * s1};
}

inline double forward(const MlpParams& p, double t, double x) {
  std::vector<double> a{t, x};
  std::vector<double> z;
  const size_t layers = p.weights.size();
  for (size_t l = 0; l < layers; ++l) {
    const Matrix& w = p.weights[l];
    z.assign(w.rows, 0.0);
    for (size_t i = 0; i < w.rows; ++i) {
      double acc = p.biases[l][i];
      for (size_t j = 0; j < w.cols; ++j) acc += w(i, j) * a[j];
      z[i] = acc;
    }
    if (l + 1 < layers) {
      for (double& v : z) v = activate(p.arch.activation, v);
    }
    a.swap(z);
  }
  if (!std::isfinite(a[0])) throw NumericError("forward pass produced a non-finite value");
  return a[0];
}

/// Per-point tape of the jet forward pass: pre-activations of every hidden
/// layer plus post-activation values of every layer (index 0 = the inputs).
/// Reused across points so the buffers are allocated once.
struct MlpWorkspace {
  std::vector<std::vector<Jet2>> pre;
  std::vector<std::vector<Jet2>> act;
  std::vector<Jet2> bar_out;
  std::vector<Jet2> bar_in;
};

inline Jet2 forward_jets(const MlpParams& p, double t, double x, MlpWorkspace& ws) {
  const size_t layers = p.weights.size();
  ws.pre.resize(layers);
  ws.act.resize(layers + 1);
  ws.act[0] = {Jet2::time_var(t), Jet2::space_var(x)};
  for (size_t l = 0; l < layers; ++l) {
    const Matrix& w = p.weights[l];
    auto& z = ws.pre[l];
    z.assign(w.rows, Jet2{});
    const auto& a = ws.act[l];
    for (size_t i = 0; i < w.rows; ++i) {
      Jet2 acc = Jet2::constant(p.biases[l][i]);
      for (size_t j = 0; j < w.cols; ++j) acc += a[j] * w(i, j);
      z[i] = acc;
    }
    auto& out = ws.act[l + 1];
    out = z;
    if (l + 1 < layers) {
      for (Jet2& v : out) {
        v = (p.arch.activation == Activation::Tanh) ? qens::tanh(v) : qens::sigmoid(v);
      }
    }
  }
  const Jet2 y = ws.act[layers][0];
  if (!std::isfinite(y.v) || !std::isfinite(y.dt) || !std::isfinite(y.dx) ||
      !std::isfinite(y.dxx)) {
    throw NumericError("jet forward pass produced a non-finite value");
  }
  return y;
}

inline Jet2 forward_jets(const MlpParams& p, double t, double x) {
  MlpWorkspace ws;
  return forward_jets(p, t, x, ws);
}

/// Cotangent weights attached to the four components of the output jet.
struct JetSeed {
  double v = 0.0, dt = 0.0, dx = 0.0, dxx = 0.0;
};

/// Accumulates d(seed . f_jet)/d(theta) into grad (flat layout, same order as
/// flatten()). Requires the tape from the matching forward_jets call; the
/// workspace's scratch cotangent buffers are overwritten.
inline void backward_jets(const MlpParams& p, MlpWorkspace& ws, const JetSeed& seed,
                          std::span<double> grad) {
  const size_t layers = p.weights.size();
  if (grad.size() != p.param_count()) throw ConfigError("gradient buffer has wrong length");

  auto& bar = ws.bar_out;
  auto& bar_prev = ws.bar_in;
  bar.assign(1, Jet2{seed.v, seed.dt, seed.dx, seed.dxx});

  size_t block_start = grad.size();
  for (size_t l = layers; l-- > 0;) {
    // Through the activation of layer l (the output layer is linear).
    if (l + 1 < layers) {
      const auto& z = ws.pre[l];
      for (size_t i = 0; i < bar.size(); ++i) {
        const auto d = activation_derivs(p.arch.activation, z[i].v);
        const Jet2 a = bar[i];
        Jet2 zb;
        zb.v = a.v * d.s1 + a.dt * d.s2 * z[i].dt + a.dx * d.s2 * z[i].dx +
               a.dxx * (d.s3 * z[i].dx * z[i].dx + d.s2 * z[i].dxx);
        zb.dt = a.dt * d.s1;
        zb.dx = a.dx * d.s1 + a.dxx * 2.0 * d.s2 * z[i].dx;
        zb.dxx = a.dxx * d.s1;
        bar[i] = zb;
      }
    }
    // Through z = W a + b: weight/bias gradients and the incoming cotangent.
    const Matrix& w = p.weights[l];
    const auto& a = ws.act[l];
    block_start -= w.data.size() + p.biases[l].size();
    double* gw = grad.data() + block_start;
    double* gb = gw + w.data.size();
    bar_prev.assign(w.cols, Jet2{});
    for (size_t i = 0; i < w.rows; ++i) {
      const Jet2 zb = bar[i];
      gb[i] += zb.v;
      for (size_t j = 0; j < w.cols; ++j) {
        gw[i * w.cols + j] +=
            zb.v * a[j].v + zb.dt * a[j].dt + zb.dx * a[j].dx + zb.dxx * a[j].dxx;
        Jet2& pb = bar_prev[j];
        const double wij = w(i, j);
        pb.v += wij * zb.v;
        pb.dt += wij * zb.dt;
        pb.dx += wij * zb.dx;
        pb.dxx += wij * zb.dxx;
      }
    }
    bar.swap(bar_prev);
  }
}

/// One residual term r evaluated at the network output jet, together with its
/// partial derivatives with respect to the four jet components.
struct ResidualTerm {
  double r = 0.0;
  JetSeed dr;
};

/// Gradient of G = sum_points r(f_jet, t, x)^2 with respect to theta.
template <typename ResidualFn>
std::vector<double> param_gradient(const MlpParams& p,
                                   std::span<const std::pair<double, double>> points,
                                   ResidualFn&& fn) {
  if (points.empty()) throw ConfigError("param_gradient needs a non-empty batch");
  std::vector<double> grad(p.param_count(), 0.0);
  MlpWorkspace ws;
  for (const auto& [t, x] : points) {
    const Jet2 f = forward_jets(p, t, x, ws);
    const ResidualTerm term = fn(f, t, x);
    const JetSeed seed{2.0 * term.r * term.dr.v, 2.0 * term.r * term.dr.dt,
                       2.0 * term.r * term.dr.dx, 2.0 * term.r * term.dr.dxx};
    backward_jets(p, ws, seed, grad);
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericError("non-finite parameter gradient");
  }
  return grad;
}

// ----------------------------------------------------------- persistence ---

/// Model file: layer_sizes (hidden widths), activation, weights (one flat
/// row-major array per layer), biases (one array per layer).
inline nlohmann::ordered_json model_to_json(const MlpParams& p) {
  nlohmann::ordered_json j;
  j["layer_sizes"] = p.arch.layer_sizes;
  j["activation"] = activation_name(p.arch.activation);
  auto& jw = j["weights"] = nlohmann::ordered_json::array();
  for (const Matrix& w : p.weights) jw.push_back(w.data);
  auto& jb = j["biases"] = nlohmann::ordered_json::array();
  for (const auto& b : p.biases) jb.push_back(b);
  return j;
}

inline MlpParams model_from_json(const nlohmann::ordered_json& j) {
  MlpParams p;
  try {
    p.arch.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    p.arch.activation = parse_activation(j.at("activation").get<std::string>());
    const auto d = p.arch.dims();
    const auto& jw = j.at("weights");
    const auto& jb = j.at("biases");
    if (jw.size() != d.size() - 1 || jb.size() != d.size() - 1) {
      throw ConfigError("model file layer count mismatch");
    }
    for (size_t l = 0; l + 1 < d.size(); ++l) {
      Matrix w(static_cast<size_t>(d[l + 1]), static_cast<size_t>(d[l]));
      w.data = jw[l].get<std::vector<double>>();
      if (w.data.size() != w.rows * w.cols) {
        throw ConfigError("model file weight length mismatch at layer " + std::to_string(l));
      }
      p.weights.push_back(std::move(w));
      p.biases.push_back(jb[l].get<std::vector<double>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
  p.validate();
  return p;
}

inline void save_model(const MlpParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << model_to_json(p).dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline MlpParams load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace qens::mlp
