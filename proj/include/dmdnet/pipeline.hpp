#pragma once

// Whole-mesh operations on top of the network: denoising in the canonical
// frame, evaluation against ground truth, the rotation-equivariance study and
// the forward-time benchmark.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dmdnet/error.hpp"
#include "dmdnet/io.hpp"
#include "dmdnet/losses.hpp"
#include "dmdnet/mesh.hpp"
#include "dmdnet/network.hpp"
#include "dmdnet/noise.hpp"
#include "dmdnet/shapes.hpp"
#include "dmdnet/trainer.hpp"

namespace dmdnet {

// Canonicalize, run the network, map the displacement back. The output is the
// input plus displacement / scale, so a network that predicts zero
// displacement returns the input bit-for-bit.
template <typename T>
Mesh denoise_mesh(const Mesh& mesh, const net::NetParams<T>& params, const net::NetConfig& cfg) {
  const auto [canonical, tf] = canonicalize(mesh);
  ad::Tape<T> tape;
  net::BoundParams<T> bound(tape, params, false);
  const auto graph = net::MeshGraph::build(canonical);
  auto x = tape.constant(net::positions_tensor<T>(canonical.positions()));
  const Positions disp = net::to_positions(net::forward(x, graph, bound, cfg).displacement.value());
  return mesh.with_positions(mesh.positions() + disp / tf.scale);
}

inline Mesh denoise_mesh(const Mesh& mesh, const net::NetParams<float>& params, const net::NetConfig& cfg) {
  net::NetParams<double> wide;
  for (const auto& [name, t] : params) wide.emplace(name, t.cast<double>());
  return denoise_mesh<double>(mesh, wide, cfg);
}

// ---------------------------------------------------------------------------

struct EvalRow {
  std::string mesh;
  loss::Metrics model;
  loss::Metrics reference;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::string> skipped;  // "path: reason"

  loss::Metrics mean(bool reference) const {
    loss::Metrics m;
    for (const auto& r : rows) {
      const auto& x = reference ? r.reference : r.model;
      m.vertex += x.vertex;
      m.normal_deg += x.normal_deg;
      m.chamfer += x.chamfer;
    }
    if (!rows.empty()) {
      const double n = static_cast<double>(rows.size());
      m.vertex /= n;
      m.normal_deg /= n;
      m.chamfer /= n;
    }
    return m;
  }
};

// Ground truth is canonicalized, noise with `kind`/`level` is added (seeded
// per mesh from `seed`), and both the denoised and the noisy mesh are compared
// against it.
inline EvalRow evaluate_mesh(const std::string& name, const Mesh& gt, const net::NetParams<float>& params,
                             const net::NetConfig& cfg, NoiseKind kind, double level, std::uint64_t seed) {
  const Mesh canonical = canonicalize(gt).first;
  NoiseSpec spec;
  spec.kind = kind;
  spec.amplitude = level;
  spec.seed = seed;
  const Mesh noisy = apply_noise(canonical, spec);
  const Mesh denoised = denoise_mesh(noisy, params, cfg);
  return {name, loss::compare(denoised, canonical), loss::compare(noisy, canonical)};
}

inline EvalReport evaluate(const std::vector<std::filesystem::path>& meshes, const net::NetParams<float>& params,
                           const net::NetConfig& cfg, NoiseKind kind, double level, std::uint64_t seed) {
  EvalReport report;
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    Mesh gt;
    try {
      gt = io::load_mesh(meshes[i]);
    } catch (const Error& e) {
      report.skipped.push_back(meshes[i].string() + ": " + e.what());
      continue;
    }
    report.rows.push_back(
        evaluate_mesh(meshes[i].string(), gt, params, cfg, kind, level, train::derive_seed(seed, i, 3)));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Rotation equivariance: for each mesh G and rotation R, compare R(D(G)) with
// D(R(G)) under the vertex, normal and Chamfer losses, averaged over all pairs.

struct EquivarianceReport {
  double vertex = 0.0;
  double normal_deg = 0.0;
  double chamfer = 0.0;
  std::size_t pairs = 0;
  std::vector<std::string> skipped;
};

inline EquivarianceReport rotation_equivariance(const std::vector<Mesh>& meshes, const net::NetParams<float>& params,
                                                const net::NetConfig& cfg, std::size_t rotations,
                                                std::uint64_t seed) {
  if (rotations == 0) throw ConfigError("need at least one rotation");
  EquivarianceReport r;
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    const Mesh denoised = denoise_mesh(meshes[i], params, cfg);
    for (std::size_t j = 0; j < rotations; ++j) {
      const Eigen::Matrix3d rot = random_rotation(train::derive_seed(seed, i * rotations + j, 4));
      const Mesh rd = denoised.with_positions(rotate(denoised.positions(), rot));
      const Mesh dr = denoise_mesh(meshes[i].with_positions(rotate(meshes[i].positions(), rot)), params, cfg);
      const loss::Metrics m = loss::compare(rd, dr);
      r.vertex += m.vertex;
      r.normal_deg += m.normal_deg;
      r.chamfer += m.chamfer;
      ++r.pairs;
    }
  }
  if (r.pairs > 0) {
    const double n = static_cast<double>(r.pairs);
    r.vertex /= n;
    r.normal_deg /= n;
    r.chamfer /= n;
  }
  return r;
}

// ---------------------------------------------------------------------------

struct BenchRow {
  std::size_t vertices = 0;
  std::size_t faces = 0;
  double seconds = 0.0;  // mean forward time
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ShapeError("fit_line needs at least two matching points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

// Torus with roughly `vertices` vertices, aspect 2:1 in the two directions.
inline Mesh bench_mesh(std::size_t vertices) {
  const int nv = std::max(3, static_cast<int>(std::lround(std::sqrt(static_cast<double>(vertices) / 2.0))));
  const int nu = std::max(3, static_cast<int>(std::lround(static_cast<double>(vertices) / nv)));
  return shapes::torus(nu, nv);
}

inline BenchRow bench_forward(const Mesh& mesh, const net::NetParams<float>& params, const net::NetConfig& cfg,
                              std::size_t repeats) {
  const Mesh canonical = canonicalize(mesh).first;
  const auto graph = net::MeshGraph::build(canonical);
  const auto x0 = net::positions_tensor<float>(canonical.positions());
  double total = 0.0;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, repeats); ++r) {
    const auto start = std::chrono::steady_clock::now();
    ad::Tape<float> tape;
    net::BoundParams<float> bound(tape, params, false);
    net::forward(tape.constant(x0), graph, bound, cfg);
    total += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return {mesh.num_vertices(), mesh.num_faces(), total / static_cast<double>(std::max<std::size_t>(1, repeats))};
}

// `sizes` geometric steps of vertex count between min and max.
inline std::vector<BenchRow> bench(std::size_t min_vertices, std::size_t max_vertices, std::size_t sizes,
                                   std::size_t repeats, const net::NetParams<float>& params,
                                   const net::NetConfig& cfg) {
  if (min_vertices < 9 || max_vertices < min_vertices || sizes == 0)
    throw ConfigError("bench needs 9 <= min-verts <= max-verts and at least one size");
  std::vector<BenchRow> rows;
  for (std::size_t i = 0; i < sizes; ++i) {
    const double t = sizes == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(sizes - 1);
    const double n = static_cast<double>(min_vertices) *
                     std::pow(static_cast<double>(max_vertices) / static_cast<double>(min_vertices), t);
    rows.push_back(bench_forward(bench_mesh(static_cast<std::size_t>(std::lround(n))), params, cfg, repeats));
  }
  return rows;
}

}  // namespace dmdnet
