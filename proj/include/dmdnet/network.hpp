#pragma once

// Primal/dual graph layers and the feature-extractor -> transformer -> denoiser
// network.

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dmdnet/autodiff.hpp"
#include "dmdnet/error.hpp"
#include "dmdnet/mesh.hpp"
#include "dmdnet/tensor.hpp"

namespace dmdnet::net {

using ad::Tape;
using ad::Var;

struct NetConfig {
  std::size_t width = 32;              // feature width of every AGG in the two-stream blocks
  std::size_t transformer_width = 64;  // columns of the 8 x k transform
  std::size_t aggs_per_stream = 3;
  std::size_t fe_blocks = 2;
  std::size_t denoiser_blocks = 2;

  static constexpr std::size_t kInputWidth = 3;
  static constexpr std::size_t kFeatureWidth = 5;
  static constexpr std::size_t kCombinedWidth = kInputWidth + kFeatureWidth;

  // Width of the pooled vector reshaped into the transform.
  std::size_t pooled_width() const { return kCombinedWidth * transformer_width; }

  void validate() const {
    if (width == 0 || transformer_width == 0 || aggs_per_stream == 0 || fe_blocks == 0 ||
        denoiser_blocks == 0) {
      throw ConfigError("network widths and depths must be at least 1");
    }
  }

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

// Every parameter name and shape for a configuration, in name order.
inline std::map<std::string, Shape> parameter_shapes(const NetConfig& cfg) {
  cfg.validate();
  const std::size_t k = cfg.width, ktf = cfg.transformer_width;
  std::map<std::string, Shape> s;
  auto two_stream_blocks = [&](const std::string& prefix, std::size_t blocks) {
    for (std::size_t b = 0; b < blocks; ++b)
      for (const char* stream : {"primal", "dual"})
        for (std::size_t i = 0; i < cfg.aggs_per_stream; ++i)
          s[prefix + ".block" + std::to_string(b) + "." + stream + ".agg" + std::to_string(i) + ".w"] = {k, k};
  };
  s["fe.lift.w"] = {NetConfig::kInputWidth, k};
  s["fe.lift.b"] = {1, k};
  two_stream_blocks("fe", cfg.fe_blocks);
  s["fe.head.w"] = {k, NetConfig::kFeatureWidth};
  s["fe.head.b"] = {1, NetConfig::kFeatureWidth};

  s["tf.fc1.w"] = {NetConfig::kFeatureWidth, k};
  s["tf.fc1.b"] = {1, k};
  for (std::size_t i = 0; i < 3; ++i) s["tf.dense" + std::to_string(i) + ".w"] = {(i + 1) * k, k};
  s["tf.agg.w"] = {4 * k, k};
  s["tf.fc2.w"] = {k, cfg.pooled_width()};
  s["tf.fc2.b"] = {1, cfg.pooled_width()};
  s["tf.out.w"] = {ktf, ktf};

  s["dn.lift.w"] = {NetConfig::kInputWidth + ktf, k};
  s["dn.lift.b"] = {1, k};
  two_stream_blocks("dn", cfg.denoiser_blocks);
  s["dn.head.w"] = {k, NetConfig::kInputWidth};
  s["dn.head.b"] = {1, NetConfig::kInputWidth};
  return s;
}

template <typename T>
using NetParams = std::map<std::string, Tensor<T>>;

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] with fan_in the weight's row
// count (biases use their weight's fan-in). The denoiser head starts at zero so
// the untrained network is the identity on positions.
template <typename T>
NetParams<T> init_params(const NetConfig& cfg, std::uint64_t seed) {
  const auto shapes = parameter_shapes(cfg);
  NetParams<T> params;
  std::mt19937_64 rng(seed);
  for (const auto& [name, shape] : shapes) {
    Tensor<T> t(shape);
    if (name.rfind("dn.head.", 0) != 0) {
      std::size_t fan_in = shape[0];
      if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0)
        fan_in = shapes.at(name.substr(0, name.size() - 2) + ".w")[0];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    }
    params.emplace(name, std::move(t));
  }
  return params;
}

template <typename T>
NetParams<T> zero_params(const NetConfig& cfg) {
  NetParams<T> params;
  for (const auto& [name, shape] : parameter_shapes(cfg)) params.emplace(name, Tensor<T>(shape));
  return params;
}

// Throws naming the first tensor whose presence or shape disagrees with cfg.
template <typename T>
void check_params(const NetParams<T>& params, const NetConfig& cfg) {
  const auto shapes = parameter_shapes(cfg);
  for (const auto& [name, shape] : shapes) {
    auto it = params.find(name);
    if (it == params.end()) throw ShapeError("missing parameter tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw ShapeError("parameter tensor '" + name + "' has shape " + shape_string(it->second.shape()) +
                       ", expected " + shape_string(shape));
    }
  }
  for (const auto& [name, t] : params)
    if (!shapes.contains(name)) throw ShapeError("unexpected parameter tensor '" + name + "'");
}

// Recovers the configuration a parameter set was built for from its tensor
// names and shapes, then checks every tensor against it.
template <typename T>
NetConfig infer_config(const NetParams<T>& params) {
  auto shape_of = [&](const std::string& name) -> const Shape& {
    auto it = params.find(name);
    if (it == params.end()) throw ShapeError("missing parameter tensor '" + name + "'");
    return it->second.shape();
  };
  auto count = [&](const std::string& prefix) {
    std::size_t n = 0;
    while (params.contains(prefix + std::to_string(n) + (prefix.ends_with("agg") ? ".w" : ".primal.agg0.w"))) ++n;
    return n;
  };
  NetConfig cfg;
  cfg.width = shape_of("fe.lift.w").at(1);
  cfg.transformer_width = shape_of("tf.out.w").at(0);
  cfg.fe_blocks = count("fe.block");
  cfg.denoiser_blocks = count("dn.block");
  cfg.aggs_per_stream = count("fe.block0.primal.agg");
  cfg.validate();
  check_params(params, cfg);
  return cfg;
}

template <typename T>
std::size_t parameter_count(const NetParams<T>& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

// Parameters placed on a tape as differentiable leaves.
template <typename T>
class BoundParams {
 public:
  // Non-trainable binding records no adjoints (inference).
  BoundParams(Tape<T>& tape, const NetParams<T>& params, bool trainable = true) {
    for (const auto& [name, t] : params) vars_.emplace(name, trainable ? tape.variable(t) : tape.constant(t));
  }

  // Binds leaves that already live on a tape.
  explicit BoundParams(std::map<std::string, Var<T>> vars) : vars_(std::move(vars)) {}

  Var<T> operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw ShapeError("unknown parameter '" + name + "'");
    return it->second;
  }

  // Gradient per parameter after Tape::backward; zeros for unreached ones.
  NetParams<T> gradients(const Tape<T>& tape) const {
    NetParams<T> g;
    for (const auto& [name, v] : vars_) g.emplace(name, tape.grad(v));
    return g;
  }

  const std::map<std::string, Var<T>>& vars() const noexcept { return vars_; }

 private:
  std::map<std::string, Var<T>> vars_;
};

// Sparse operators and index lists of one mesh, shared with the tape.
struct MeshGraph {
  std::size_t num_vertices = 0;
  std::size_t num_faces = 0;
  std::shared_ptr<const SparseMatrix> primal;         // normalized vertex adjacency
  std::shared_ptr<const SparseMatrix> dual;           // normalized face adjacency
  std::shared_ptr<const SparseMatrix> primal_to_dual; // (1/3) A_FV
  std::shared_ptr<const SparseMatrix> dual_to_primal; // D_VF^-1 A_VF
  std::shared_ptr<const std::vector<std::size_t>> corners;      // 3f, face-major
  std::shared_ptr<const std::vector<std::size_t>> face_of_corner;
  std::vector<std::size_t> isolated_vertices;

  static MeshGraph build(const Mesh& mesh) {
    MeshOperators ops = MeshOperators::build(mesh);
    MeshGraph g;
    g.num_vertices = mesh.num_vertices();
    g.num_faces = mesh.num_faces();
    g.primal = std::make_shared<const SparseMatrix>(std::move(ops.vertex_adjacency_normalized));
    g.dual = std::make_shared<const SparseMatrix>(std::move(ops.face_adjacency_normalized));
    g.primal_to_dual = std::make_shared<const SparseMatrix>(std::move(ops.primal_to_dual));
    g.dual_to_primal = std::make_shared<const SparseMatrix>(std::move(ops.dual_to_primal));
    g.corners = std::make_shared<const std::vector<std::size_t>>(std::move(ops.face_corners));
    std::vector<std::size_t> owner(3 * g.num_faces);
    for (std::size_t i = 0; i < owner.size(); ++i) owner[i] = i / 3;
    g.face_of_corner = std::make_shared<const std::vector<std::size_t>>(std::move(owner));
    g.isolated_vertices = std::move(ops.isolated_vertices);
    return g;
  }
};

// ---------------------------------------------------------------------------
// Layers

// sigma(A_norm X W) with sigma = ReLU when `activation` is set.
template <typename T>
Var<T> agg(Var<T> x, const std::shared_ptr<const SparseMatrix>& a_norm, Var<T> w, bool activation = true) {
  Var<T> out = ad::matmul(ad::spmm(a_norm, x), w);
  return activation ? ad::relu(out) : out;
}

// Three (or more) AGGs in series. With `residual` each stage is agg(X) + X.
template <typename T>
Var<T> agg_stack(Var<T> x, const std::shared_ptr<const SparseMatrix>& a_norm, const std::vector<Var<T>>& weights,
                 bool residual = true) {
  for (const Var<T>& w : weights) {
    if (residual && w.cols() != x.cols()) {
      throw ShapeError("agg_stack: residual needs square weights, got " + shape_string(w.shape()) +
                       " for input width " + std::to_string(x.cols()));
    }
    Var<T> g = agg(x, a_norm, w);
    x = residual ? ad::add(g, x) : g;
  }
  return x;
}

// Face feature = centroid of its vertex features.
template <typename T>
Var<T> p2d(Var<T> x_v, const MeshGraph& g) {
  return ad::spmm(g.primal_to_dual, x_v);
}

// Vertex feature = mean of incident face features (zero for isolated vertices).
template <typename T>
Var<T> d2p(Var<T> x_f, const MeshGraph& g) {
  return ad::spmm(g.dual_to_primal, x_f);
}

// Per face, mean over its three vertices of |x_v - x_f| (elementwise).
template <typename T>
Var<T> dap(Var<T> x_v, Var<T> x_f, const MeshGraph& g) {
  if (x_v.cols() != x_f.cols() || x_f.rows() != g.num_faces || x_v.rows() != g.num_vertices) {
    throw ShapeError("dap: " + shape_string(x_v.shape()) + " vs " + shape_string(x_f.shape()));
  }
  const std::size_t k = x_v.cols();
  Var<T> corners = ad::row_gather(x_v, g.corners);
  Var<T> faces = ad::row_gather(x_f, g.face_of_corner);
  Var<T> diff = ad::reshape(ad::abs(ad::sub(corners, faces)), Shape{g.num_faces, 3, k});
  return ad::mean_over_axis(diff, 1, true);
}

// Column means, 1 x k.
template <typename T>
Var<T> fap(Var<T> h) {
  return ad::mean_over_rows(h);
}

template <typename T>
Var<T> fully_connected(Var<T> x, Var<T> w, Var<T> b, bool activation) {
  Var<T> out = ad::add_row(ad::matmul(x, w), b);
  return activation ? ad::relu(out) : out;
}

template <typename T>
std::vector<Var<T>> stream_weights(const BoundParams<T>& p, const std::string& prefix, std::size_t count) {
  std::vector<Var<T>> w;
  for (std::size_t i = 0; i < count; ++i) w.push_back(p[prefix + ".agg" + std::to_string(i) + ".w"]);
  return w;
}

// Primal stream on the vertex graph, dual stream on the face graph, fused by
// DAP and brought back to vertices by D2P.
template <typename T>
Var<T> two_stream(Var<T> x_v, const MeshGraph& g, const BoundParams<T>& p, const std::string& prefix,
                  std::size_t aggs) {
  Var<T> primal = agg_stack(x_v, g.primal, stream_weights(p, prefix + ".primal", aggs));
  Var<T> dual = agg_stack(p2d(x_v, g), g.dual, stream_weights(p, prefix + ".dual", aggs));
  return d2p(dap(primal, dual, g), g);
}

template <typename T>
Var<T> two_stream_network(Var<T> x, const MeshGraph& g, const BoundParams<T>& p, const std::string& prefix,
                          std::size_t blocks, std::size_t aggs) {
  Var<T> h = fully_connected(x, p[prefix + ".lift.w"], p[prefix + ".lift.b"], false);
  for (std::size_t b = 0; b < blocks; ++b) h = two_stream(h, g, p, prefix + ".block" + std::to_string(b), aggs);
  return fully_connected(h, p[prefix + ".head.w"], p[prefix + ".head.b"], false);
}

// Noisy positions (n x 3) to predicted local features (n x 5).
template <typename T>
Var<T> feature_extractor(Var<T> x_noisy, const MeshGraph& g, const BoundParams<T>& p, const NetConfig& cfg) {
  return two_stream_network(x_noisy, g, p, "fe", cfg.fe_blocks, cfg.aggs_per_stream);
}

template <typename T>
struct TransformerOutput {
  Var<T> intermediate;  // n x k_tf
  Var<T> transform;     // 8 x k_tf
};

template <typename T>
TransformerOutput<T> transformer(Var<T> features, Var<T> x_noisy, const MeshGraph& g, const BoundParams<T>& p,
                                 const NetConfig& cfg) {
  // Branch A: local features to the pooled transform.
  Var<T> h0 = fully_connected(features, p["tf.fc1.w"], p["tf.fc1.b"], true);
  std::vector<Var<T>> dense{h0};
  for (std::size_t i = 0; i < 3; ++i)
    dense.push_back(agg(ad::concat_columns(dense), g.primal, p["tf.dense" + std::to_string(i) + ".w"]));
  Var<T> pooled_in = agg(ad::concat_columns(dense), g.primal, p["tf.agg.w"]);
  Var<T> z = fully_connected(pooled_in, p["tf.fc2.w"], p["tf.fc2.b"], false);
  Var<T> transform = ad::reshape(fap(z), Shape{NetConfig::kCombinedWidth, cfg.transformer_width});

  // Branch B: transform applied to [noisy | features].
  Var<T> combined = ad::concat_columns<T>({x_noisy, features});
  Var<T> intermediate = agg(ad::matmul(combined, transform), g.primal, p["tf.out.w"]);
  return {intermediate, transform};
}

template <typename T>
struct ForwardOutput {
  Var<T> denoised;      // n x 3
  Var<T> displacement;  // n x 3
  Var<T> features;  // n x 5
  Var<T> intermediate;
};

// Denoised positions are the noisy positions plus the denoiser's displacement.
template <typename T>
ForwardOutput<T> forward(Var<T> x_noisy, const MeshGraph& g, const BoundParams<T>& p, const NetConfig& cfg) {
  if (x_noisy.rows() != g.num_vertices || x_noisy.cols() != NetConfig::kInputWidth) {
    throw ShapeError("forward: expected " + std::to_string(g.num_vertices) + "x3 positions, got " +
                     shape_string(x_noisy.shape()));
  }
  Var<T> features = feature_extractor(x_noisy, g, p, cfg);
  TransformerOutput<T> tf = transformer(features, x_noisy, g, p, cfg);
  Var<T> displacement = two_stream_network(ad::concat_columns<T>({x_noisy, tf.intermediate}), g, p, "dn",
                                           cfg.denoiser_blocks, cfg.aggs_per_stream);
  return {ad::add(x_noisy, displacement), displacement, features, tf.intermediate};
}

template <typename T>
Tensor<T> positions_tensor(const Positions& p) {
  Tensor<T> t({static_cast<std::size_t>(p.rows()), 3});
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (int c = 0; c < 3; ++c) t(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) = static_cast<T>(p(i, c));
  return t;
}

template <typename T>
Positions to_positions(const Tensor<T>& t) {
  Positions p(static_cast<Eigen::Index>(t.rows()), 3);
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t c = 0; c < 3; ++c) p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = static_cast<double>(t(i, c));
  return p;
}

}  // namespace dmdnet::net
