#pragma once

// ADAM, the joint training step and evaluation against ground truth.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dmdnet/error.hpp"
#include "dmdnet/io.hpp"
#include "dmdnet/losses.hpp"
#include "dmdnet/mesh.hpp"
#include "dmdnet/network.hpp"
#include "dmdnet/noise.hpp"

namespace dmdnet::train {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  loss::LossWeights weights;
  net::NetConfig net;
  std::vector<NoiseLevel> noise_grid = default_noise_grid();
  bool rotate = true;
  bool resample_noise = true;  // false: one noise draw reused every step
  std::filesystem::path manifest;
  std::filesystem::path checkpoint;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  std::size_t log_every = 100;

  void validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    if (noise_grid.empty()) throw ConfigError("noise grid is empty");
    weights.validate();
    net.validate();
  }
};

// "gaussian:0.01 impulse:0.02 ..." -> grid entries.
inline std::vector<NoiseLevel> parse_noise_grid(const std::string& text) {
  std::vector<NoiseLevel> grid;
  std::istringstream in(text);
  std::string item;
  while (in >> item) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("noise_grid entry '" + item + "' is not kind:level");
    double level = 0.0;
    try {
      std::size_t used = 0;
      level = std::stod(item.substr(colon + 1), &used);
      if (used != item.size() - colon - 1) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("noise_grid entry '" + item + "' has a bad level");
    }
    if (!(level >= 0.0)) throw ConfigError("noise_grid entry '" + item + "' has a negative level");
    grid.push_back({parse_noise_kind(item.substr(0, colon)), level});
  }
  return grid;
}

inline TrainConfig parse_train_config(std::string_view text, const std::filesystem::path& base = {}) {
  TrainConfig cfg;
  const auto kv = io::parse_key_values(text);
  auto real = [](const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::logic_error&) {
    }
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  };
  auto count = [](const std::string& key, const std::string& v) -> std::uint64_t {
    try {
      std::size_t used = 0;
      if (!v.empty() && v[0] != '-') {
        const auto n = std::stoull(v, &used);
        if (used == v.size()) return n;
      }
    } catch (const std::logic_error&) {
    }
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  };
  auto path = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_relative() && !base.empty() ? base / p : p;
  };
  for (const auto& [key, v] : kv) {
    if (key == "lr") cfg.lr = real(key, v);
    else if (key == "beta1") cfg.beta1 = real(key, v);
    else if (key == "beta2") cfg.beta2 = real(key, v);
    else if (key == "eps") cfg.eps = real(key, v);
    else if (key == "steps") cfg.steps = count(key, v);
    else if (key == "seed") cfg.seed = count(key, v);
    else if (key == "rotate") {
      if (v != "true" && v != "false") throw ConfigError("rotate: expected true or false");
      cfg.rotate = v == "true";
    }
    else if (key == "resample_noise") {
      if (v != "true" && v != "false") throw ConfigError("resample_noise: expected true or false");
      cfg.resample_noise = v == "true";
    }
    else if (key == "manifest") cfg.manifest = path(v);
    else if (key == "checkpoint") cfg.checkpoint = path(v);
    else if (key == "checkpoint_every") cfg.checkpoint_every = count(key, v);
    else if (key == "log_every") cfg.log_every = count(key, v);
    else if (key == "noise_grid") cfg.noise_grid = parse_noise_grid(v);
    else if (key == "vertex") cfg.weights.vertex = real(key, v);
    else if (key == "normal") cfg.weights.normal = real(key, v);
    else if (key == "curvature") cfg.weights.curvature = real(key, v);
    else if (key == "chamfer") cfg.weights.chamfer = real(key, v);
    else if (key == "feature") cfg.weights.feature = real(key, v);
    else if (key == "gamma_mean") cfg.weights.gamma_mean = real(key, v);
    else if (key == "gamma_gauss") cfg.weights.gamma_gauss = real(key, v);
    else if (key == "width") cfg.net.width = count(key, v);
    else if (key == "transformer_width") cfg.net.transformer_width = count(key, v);
    else if (key == "aggs_per_stream") cfg.net.aggs_per_stream = count(key, v);
    else if (key == "fe_blocks") cfg.net.fe_blocks = count(key, v);
    else if (key == "denoiser_blocks") cfg.net.denoiser_blocks = count(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

template <typename T>
struct OptimizerState {
  net::NetParams<T> m;
  net::NetParams<T> v;
  std::uint64_t step = 0;
  std::uint64_t faults = 0;  // rejected steps

  static OptimizerState zeros_like(const net::NetParams<T>& params) {
    OptimizerState s;
    for (const auto& [name, t] : params) {
      s.m.emplace(name, Tensor<T>(t.shape()));
      s.v.emplace(name, Tensor<T>(t.shape()));
    }
    return s;
  }
};

// Bias-corrected ADAM. A non-finite gradient anywhere rejects the whole step:
// parameters and moments stay as they were and the fault is counted.
template <typename T>
bool adam_step(net::NetParams<T>& params, const net::NetParams<T>& grads, OptimizerState<T>& state,
               const TrainConfig& cfg) {
  for (const auto& [name, p] : params) {
    auto g = grads.find(name);
    if (g == grads.end() || g->second.shape() != p.shape())
      throw ShapeError("adam_step: gradient for '" + name + "' missing or misshapen");
    if (state.m.at(name).shape() != p.shape()) throw ShapeError("adam_step: moment shape for '" + name + "'");
  }
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) {
      ++state.faults;
      return false;
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : params) {
    const Tensor<T>& g = grads.at(name);
    Tensor<T>& m = state.m.at(name);
    Tensor<T>& v = state.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps));
    }
  }
  return true;
}

// Per-step stream of seeds: splitmix64 over (seed, step, purpose).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t step, std::uint64_t purpose) {
  std::uint64_t z = seed ^ (step * 0x9E3779B97F4A7C15ULL) ^ (purpose * 0xD1B54A32D192ED03ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// One training sample: ground truth (possibly rotated), its noisy version and
// the reference quantities the losses need.
struct Sample {
  loss::Reference reference;
  Mesh noisy;
  NoiseSpec noise;
};

inline Sample make_sample(const Mesh& canonical_gt, const TrainConfig& cfg, std::uint64_t step) {
  Mesh gt = canonical_gt;
  if (cfg.rotate) gt = gt.with_positions(rotate(gt.positions(), random_rotation(derive_seed(cfg.seed, step, 1))));
  const NoiseSpec spec = mixed_noise_sample(cfg.noise_grid, derive_seed(cfg.seed, cfg.resample_noise ? step : 0, 2));
  Mesh noisy = apply_noise(gt, spec);
  return {loss::Reference(std::move(gt)), std::move(noisy), spec};
}

struct StepResult {
  double loss = 0.0;
  double vertex = 0.0;
  double reference_vertex = 0.0;
  bool applied = false;
};

// Forward, weighted joint loss (feature-extractor term included), backward and
// an ADAM update on one sample.
template <typename T>
StepResult train_on_sample(const Sample& sample, const net::MeshGraph& graph, const TrainConfig& cfg,
                           net::NetParams<T>& params, OptimizerState<T>& state) {
  ad::Tape<T> tape;
  net::BoundParams<T> bound(tape, params);
  ad::Var<T> x = tape.constant(net::positions_tensor<T>(sample.noisy.positions()));
  const auto out = net::forward(x, graph, bound, cfg.net);
  const auto terms = loss::all_terms(out.denoised, out.features, sample.reference, cfg.weights);
  ad::Var<T> total = loss::total_loss(terms, cfg.weights);
  tape.backward(total);

  StepResult r;
  r.loss = static_cast<double>(total.value().item());
  r.vertex = static_cast<double>(terms.vertex.value().item());
  r.reference_vertex = (sample.noisy.positions() - sample.reference.mesh.positions()).rowwise().squaredNorm().mean();
  r.applied = adam_step(params, bound.gradients(tape), state, cfg);
  return r;
}

template <typename T>
StepResult train_step(const Mesh& canonical_gt, const TrainConfig& cfg, net::NetParams<T>& params,
                      OptimizerState<T>& state, std::uint64_t step) {
  const Sample sample = make_sample(canonical_gt, cfg, step);
  return train_on_sample(sample, net::MeshGraph::build(sample.noisy), cfg, params, state);
}

// Sequential loop over a list of canonical meshes; the mesh for each step is
// drawn from the seed. `on_step` sees every result (logging, checkpoints).
template <typename T>
std::vector<StepResult> train_loop(const std::vector<Mesh>& meshes, const TrainConfig& cfg,
                                   net::NetParams<T>& params, OptimizerState<T>& state,
                                   const std::function<void(std::size_t, const StepResult&)>& on_step = {}) {
  if (meshes.empty()) throw ConfigError("no training meshes");
  std::vector<net::MeshGraph> graphs;
  for (const auto& m : meshes) graphs.push_back(net::MeshGraph::build(m));
  std::vector<StepResult> history;
  history.reserve(cfg.steps);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    std::mt19937_64 pick(derive_seed(cfg.seed, s, 0));
    const std::size_t i = meshes.size() == 1 ? 0 : std::uniform_int_distribution<std::size_t>(0, meshes.size() - 1)(pick);
    const Sample sample = make_sample(meshes[i], cfg, s);
    history.push_back(train_on_sample(sample, graphs[i], cfg, params, state));
    if (on_step) on_step(s, history.back());
  }
  return history;
}

}  // namespace dmdnet::train
