#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dmdnet/error.hpp"
#include "dmdnet/sparse.hpp"

namespace dmdnet {

using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Faces = Eigen::Matrix<std::int32_t, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Vec3 = Eigen::Vector3d;

// Triangle mesh: n x 3 positions and f x 3 vertex indices. Manifoldness is not
// required. Immutable once built; use with_positions() to move vertices.
class Mesh {
 public:
  Mesh() = default;

  Mesh(Positions positions, Faces faces)
      : positions_(std::move(positions)), faces_(std::move(faces)) {
    validate();
  }

  const Positions& positions() const noexcept { return positions_; }
  const Faces& faces() const noexcept { return faces_; }

  std::size_t num_vertices() const noexcept { return static_cast<std::size_t>(positions_.rows()); }
  std::size_t num_faces() const noexcept { return static_cast<std::size_t>(faces_.rows()); }

  Vec3 position(std::size_t v) const { return positions_.row(static_cast<Eigen::Index>(v)).transpose(); }

  std::array<std::size_t, 3> face(std::size_t s) const {
    const auto i = static_cast<Eigen::Index>(s);
    return {static_cast<std::size_t>(faces_(i, 0)), static_cast<std::size_t>(faces_(i, 1)),
            static_cast<std::size_t>(faces_(i, 2))};
  }

  Mesh with_positions(Positions positions) const {
    if (positions.rows() != positions_.rows()) {
      throw MeshError("with_positions: expected " + std::to_string(positions_.rows()) +
                      " rows, got " + std::to_string(positions.rows()));
    }
    Mesh out;
    out.positions_ = std::move(positions);
    out.faces_ = faces_;
    return out;
  }

  friend bool operator==(const Mesh& a, const Mesh& b) {
    return a.positions_.rows() == b.positions_.rows() && a.faces_.rows() == b.faces_.rows() &&
           a.positions_ == b.positions_ && a.faces_ == b.faces_;
  }

 private:
  void validate() const {
    const auto n = positions_.rows();
    if (n < 3) throw MeshError("mesh needs at least 3 vertices, got " + std::to_string(n));
    if (faces_.rows() < 1) throw MeshError("mesh needs at least 1 face");
    for (Eigen::Index s = 0; s < faces_.rows(); ++s) {
      for (int c = 0; c < 3; ++c) {
        const auto idx = faces_(s, c);
        if (idx < 0 || idx >= n) {
          throw MeshError("face " + std::to_string(s) + " references vertex " +
                          std::to_string(idx) + " outside [0, " + std::to_string(n) + ")");
        }
      }
      if (faces_(s, 0) == faces_(s, 1) || faces_(s, 1) == faces_(s, 2) ||
          faces_(s, 0) == faces_(s, 2)) {
        throw MeshError("face " + std::to_string(s) + " repeats a vertex");
      }
    }
  }

  Positions positions_;
  Faces faces_;
};

using Edge = std::array<std::size_t, 2>;

// Unique undirected edges (u < v), sorted.
inline std::vector<Edge> unique_edges(const Mesh& mesh) {
  std::vector<Edge> edges;
  edges.reserve(mesh.num_faces() * 3);
  for (std::size_t s = 0; s < mesh.num_faces(); ++s) {
    const auto f = mesh.face(s);
    for (int c = 0; c < 3; ++c) {
      auto u = f[c], v = f[(c + 1) % 3];
      edges.push_back({std::min(u, v), std::max(u, v)});
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

// Vertices lying on an edge used by exactly one face.
inline std::vector<bool> boundary_vertices(const Mesh& mesh) {
  std::vector<Edge> edges;
  edges.reserve(mesh.num_faces() * 3);
  for (std::size_t s = 0; s < mesh.num_faces(); ++s) {
    const auto f = mesh.face(s);
    for (int c = 0; c < 3; ++c) {
      auto u = f[c], v = f[(c + 1) % 3];
      edges.push_back({std::min(u, v), std::max(u, v)});
    }
  }
  std::sort(edges.begin(), edges.end());
  std::vector<bool> boundary(mesh.num_vertices(), false);
  for (std::size_t i = 0; i < edges.size();) {
    std::size_t j = i;
    while (j < edges.size() && edges[j] == edges[i]) ++j;
    if (j - i == 1) boundary[edges[i][0]] = boundary[edges[i][1]] = true;
    i = j;
  }
  return boundary;
}

// Euler characteristic n - m + f.
inline long euler_characteristic(const Mesh& mesh) {
  return static_cast<long>(mesh.num_vertices()) - static_cast<long>(unique_edges(mesh).size()) +
         static_cast<long>(mesh.num_faces());
}

// Symmetric binary n x n matrix, (u, v) = 1 iff u and v share a face edge.
inline SparseMatrix build_vertex_adjacency(const Mesh& mesh) {
  std::vector<SparseMatrix::Triplet> t;
  for (const auto& [u, v] : unique_edges(mesh)) {
    t.push_back({u, v, 1.0});
    t.push_back({v, u, 1.0});
  }
  return SparseMatrix::from_triplets(mesh.num_vertices(), mesh.num_vertices(), std::move(t));
}

// Symmetric binary f x f matrix, faces adjacent iff they share an unordered edge.
// Non-manifold edges connect every pair of their incident faces.
inline SparseMatrix build_face_adjacency(const Mesh& mesh) {
  struct Record {
    Edge edge;
    std::size_t face;
  };
  std::vector<Record> records;
  records.reserve(mesh.num_faces() * 3);
  for (std::size_t s = 0; s < mesh.num_faces(); ++s) {
    const auto f = mesh.face(s);
    for (int c = 0; c < 3; ++c) {
      auto u = f[c], v = f[(c + 1) % 3];
      records.push_back({{std::min(u, v), std::max(u, v)}, s});
    }
  }
  std::sort(records.begin(), records.end(), [](const Record& a, const Record& b) {
    return a.edge != b.edge ? a.edge < b.edge : a.face < b.face;
  });

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < records.size();) {
    std::size_t j = i;
    while (j < records.size() && records[j].edge == records[i].edge) ++j;
    for (std::size_t a = i; a < j; ++a)
      for (std::size_t b = a + 1; b < j; ++b)
        if (records[a].face != records[b].face) pairs.emplace_back(records[a].face, records[b].face);
    i = j;
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  std::vector<SparseMatrix::Triplet> t;
  t.reserve(pairs.size() * 2);
  for (const auto& [a, b] : pairs) {
    t.push_back({a, b, 1.0});
    t.push_back({b, a, 1.0});
  }
  return SparseMatrix::from_triplets(mesh.num_faces(), mesh.num_faces(), std::move(t));
}

// n x f incidence, (v, s) = 1 iff vertex v belongs to face s.
inline SparseMatrix build_vertex_face_adjacency(const Mesh& mesh) {
  std::vector<SparseMatrix::Triplet> t;
  t.reserve(mesh.num_faces() * 3);
  for (std::size_t s = 0; s < mesh.num_faces(); ++s)
    for (auto v : mesh.face(s)) t.push_back({v, s, 1.0});
  return SparseMatrix::from_triplets(mesh.num_vertices(), mesh.num_faces(), std::move(t));
}

// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
inline SparseMatrix normalize_adjacency(const SparseMatrix& adj) {
  if (adj.rows() != adj.cols()) throw ShapeError("normalize_adjacency: matrix is not square");
  const std::size_t n = adj.rows();
  std::vector<SparseMatrix::Triplet> t;
  t.reserve(adj.nnz() + n);
  const auto row_ptr = adj.row_ptr();
  const auto cols = adj.col_index();
  const auto vals = adj.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e) t.push_back({r, cols[e], vals[e]});
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  SparseMatrix with_loops = SparseMatrix::from_triplets(n, n, std::move(t));

  std::vector<double> inv_sqrt = with_loops.row_sums();
  for (auto& d : inv_sqrt) d = 1.0 / std::sqrt(d);

  std::vector<SparseMatrix::Triplet> out;
  out.reserve(with_loops.nnz());
  const auto rp = with_loops.row_ptr();
  const auto ci = with_loops.col_index();
  const auto vv = with_loops.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t e = rp[r]; e < rp[r + 1]; ++e)
      out.push_back({r, ci[e], inv_sqrt[r] * vv[e] * inv_sqrt[ci[e]]});
  return SparseMatrix::from_triplets(n, n, std::move(out));
}

// Maps model coordinates into the origin-centred unit cube:
// canonical = (p + translation) * scale.
struct CanonicalTransform {
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Positions apply(const Positions& p) const {
    return ((p.rowwise() + translation.transpose()) * scale).eval();
  }
  Positions invert(const Positions& p) const {
    return ((p / scale).rowwise() - translation.transpose()).eval();
  }
};

// Bounding-box centre to the origin, longest bounding-box side to 1.
inline std::pair<Mesh, CanonicalTransform> canonicalize(const Mesh& mesh) {
  const Positions& p = mesh.positions();
  const Vec3 lo = p.colwise().minCoeff().transpose();
  const Vec3 hi = p.colwise().maxCoeff().transpose();
  const double extent = (hi - lo).maxCoeff();
  if (!(extent > 0.0) || !std::isfinite(extent)) {
    throw DegenerateGeometry("canonicalize: mesh has zero bounding-box extent");
  }
  CanonicalTransform tf;
  tf.translation = -0.5 * (lo + hi);
  tf.scale = 1.0 / extent;
  return {mesh.with_positions(tf.apply(p)), tf};
}

// Precomputed sparse operators used by the primal/dual layers.
struct MeshOperators {
  SparseMatrix vertex_adjacency_normalized;  // n x n
  SparseMatrix face_adjacency_normalized;    // f x f
  SparseMatrix primal_to_dual;               // f x n, (1/3) A_FV
  SparseMatrix dual_to_primal;               // n x f, D_VF^-1 A_VF
  std::vector<std::size_t> isolated_vertices;  // vertices in no face
  std::vector<std::size_t> face_corners;       // 3f indices, face-major

  static MeshOperators build(const Mesh& mesh) {
    MeshOperators ops;
    ops.vertex_adjacency_normalized = normalize_adjacency(build_vertex_adjacency(mesh));
    ops.face_adjacency_normalized = normalize_adjacency(build_face_adjacency(mesh));
    const SparseMatrix vf = build_vertex_face_adjacency(mesh);
    ops.primal_to_dual = vf.transpose().scaled(1.0 / 3.0);
    std::vector<double> inv_degree = vf.row_sums();
    for (std::size_t v = 0; v < inv_degree.size(); ++v) {
      if (inv_degree[v] == 0.0) {
        ops.isolated_vertices.push_back(v);
      } else {
        inv_degree[v] = 1.0 / inv_degree[v];
      }
    }
    ops.dual_to_primal = vf.scaled_rows(inv_degree);
    ops.face_corners.reserve(mesh.num_faces() * 3);
    for (std::size_t s = 0; s < mesh.num_faces(); ++s)
      for (auto v : mesh.face(s)) ops.face_corners.push_back(v);
    return ops;
  }
};

}  // namespace dmdnet
