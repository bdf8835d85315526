#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "dmdnet/mesh.hpp"

namespace dmdnet::diffgeo {

// Faces with area below this (canonical units) are degenerate.
inline constexpr double kDegenerateArea = 1e-12;
inline constexpr double kCotangentClamp = 1e4;

inline double clamp_cot(double c) { return std::clamp(c, -kCotangentClamp, kCotangentClamp); }

// Per-face and per-vertex quantities shared by the curvature operators.
//
// Corner c of face s is the vertex faces(s, c). `angles(s, c)` is the interior
// angle at that corner and `cotangents(s, c)` its cotangent, which weights the
// edge opposite the corner. Degenerate faces keep zero area, angles and
// cotangents so they drop out of every sum.
struct GeometryCache {
  Positions face_normals;              // f x 3, zero rows for degenerate faces
  Eigen::VectorXd face_areas;          // f
  Eigen::MatrixX3d angles;             // f x 3
  Eigen::MatrixX3d cotangents;         // f x 3
  Eigen::VectorXd mixed_areas;         // n
  std::vector<bool> degenerate_faces;  // f
  std::size_t degenerate_face_count = 0;

  static GeometryCache compute(const Mesh& mesh) {
    const auto f = static_cast<Eigen::Index>(mesh.num_faces());
    GeometryCache g;
    g.face_normals = Positions::Zero(f, 3);
    g.face_areas = Eigen::VectorXd::Zero(f);
    g.angles = Eigen::MatrixX3d::Zero(f, 3);
    g.cotangents = Eigen::MatrixX3d::Zero(f, 3);
    g.mixed_areas = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_vertices()));
    g.degenerate_faces.assign(mesh.num_faces(), false);

    for (Eigen::Index s = 0; s < f; ++s) {
      const auto idx = mesh.face(static_cast<std::size_t>(s));
      const Vec3 p[3] = {mesh.position(idx[0]), mesh.position(idx[1]), mesh.position(idx[2])};
      const Vec3 cross = (p[1] - p[0]).cross(p[2] - p[0]);
      const double area = 0.5 * cross.norm();
      if (!(area >= kDegenerateArea)) {
        g.degenerate_faces[static_cast<std::size_t>(s)] = true;
        ++g.degenerate_face_count;
        continue;
      }
      g.face_areas(s) = area;
      g.face_normals.row(s) = (cross / cross.norm()).transpose();

      bool obtuse[3];
      double sq_len[3];  // squared length of the edge opposite each corner
      for (int c = 0; c < 3; ++c) {
        const Vec3 a = p[(c + 1) % 3] - p[c];
        const Vec3 b = p[(c + 2) % 3] - p[c];
        const double dot = a.dot(b);
        const double cr = a.cross(b).norm();
        g.angles(s, c) = std::atan2(cr, dot);
        g.cotangents(s, c) = clamp_cot(dot / cr);
        obtuse[c] = dot < 0.0;
        sq_len[c] = (p[(c + 2) % 3] - p[(c + 1) % 3]).squaredNorm();
      }

      const bool any_obtuse = obtuse[0] || obtuse[1] || obtuse[2];
      for (int c = 0; c < 3; ++c) {
        double share;
        if (!any_obtuse) {
          // Voronoi region: edges to the two other corners weighted by the
          // cotangent of the angle opposite each of them.
          const int c1 = (c + 1) % 3, c2 = (c + 2) % 3;
          share = (sq_len[c2] * g.cotangents(s, c2) + sq_len[c1] * g.cotangents(s, c1)) / 8.0;
        } else {
          share = obtuse[c] ? area / 2.0 : area / 4.0;
        }
        g.mixed_areas(static_cast<Eigen::Index>(idx[c])) += share;
      }
    }
    return g;
  }
};

inline Positions face_normals(const Mesh& mesh) { return GeometryCache::compute(mesh).face_normals; }

inline std::vector<bool> degenerate_faces(const Mesh& mesh) {
  return GeometryCache::compute(mesh).degenerate_faces;
}

inline Eigen::VectorXd mixed_voronoi_areas(const Mesh& mesh) {
  return GeometryCache::compute(mesh).mixed_areas;
}

// Symmetric n x n matrix of cotangent weights w_vu = sum of cot of the angles
// opposite edge vu.
inline SparseMatrix cotangent_weights(const Mesh& mesh) {
  const GeometryCache g = GeometryCache::compute(mesh);
  std::vector<SparseMatrix::Triplet> t;
  t.reserve(mesh.num_faces() * 6);
  for (std::size_t s = 0; s < mesh.num_faces(); ++s) {
    const auto idx = mesh.face(s);
    for (int c = 0; c < 3; ++c) {
      const double w = g.cotangents(static_cast<Eigen::Index>(s), c);
      const auto u = idx[(c + 1) % 3], v = idx[(c + 2) % 3];
      t.push_back({u, v, w});
      t.push_back({v, u, w});
    }
  }
  return SparseMatrix::from_triplets(mesh.num_vertices(), mesh.num_vertices(), std::move(t));
}

struct CurvatureResult {
  Eigen::VectorXd values;
  std::size_t degenerate_vertices = 0;  // zero mixed area, value forced to 0
};

inline CurvatureResult mean_curvature(const Mesh& mesh, const GeometryCache& g) {
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
  Positions laplace = Positions::Zero(n, 3);
  for (std::size_t s = 0; s < mesh.num_faces(); ++s) {
    const auto idx = mesh.face(s);
    const auto si = static_cast<Eigen::Index>(s);
    for (int c = 0; c < 3; ++c) {
      const auto u = idx[(c + 1) % 3], v = idx[(c + 2) % 3];
      const Vec3 d = mesh.position(u) - mesh.position(v);
      laplace.row(static_cast<Eigen::Index>(u)) += g.cotangents(si, c) * d.transpose();
      laplace.row(static_cast<Eigen::Index>(v)) -= g.cotangents(si, c) * d.transpose();
    }
  }
  CurvatureResult r{Eigen::VectorXd::Zero(n), 0};
  for (Eigen::Index v = 0; v < n; ++v) {
    if (g.mixed_areas(v) > 0.0) {
      r.values(v) = laplace.row(v).norm() / (4.0 * g.mixed_areas(v));
    } else {
      ++r.degenerate_vertices;
    }
  }
  return r;
}

inline CurvatureResult mean_curvature(const Mesh& mesh) {
  return mean_curvature(mesh, GeometryCache::compute(mesh));
}

// Per-vertex angle deficit 2*pi - sum of incident interior angles.
inline Eigen::VectorXd angle_deficits(const Mesh& mesh, const GeometryCache& g) {
  Eigen::VectorXd deficit =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(mesh.num_vertices()), 2.0 * std::numbers::pi);
  for (std::size_t s = 0; s < mesh.num_faces(); ++s) {
    const auto idx = mesh.face(s);
    for (int c = 0; c < 3; ++c)
      deficit(static_cast<Eigen::Index>(idx[c])) -= g.angles(static_cast<Eigen::Index>(s), c);
  }
  return deficit;
}

inline CurvatureResult gaussian_curvature(const Mesh& mesh, const GeometryCache& g) {
  const Eigen::VectorXd deficit = angle_deficits(mesh, g);
  CurvatureResult r{Eigen::VectorXd::Zero(deficit.size()), 0};
  for (Eigen::Index v = 0; v < deficit.size(); ++v) {
    if (g.mixed_areas(v) > 0.0) {
      r.values(v) = deficit(v) / g.mixed_areas(v);
    } else {
      ++r.degenerate_vertices;
    }
  }
  return r;
}

inline CurvatureResult gaussian_curvature(const Mesh& mesh) {
  return gaussian_curvature(mesh, GeometryCache::compute(mesh));
}

enum class NormalWeighting { Area, Angle };

struct VertexNormalResult {
  Positions normals;               // n x 3
  std::vector<std::size_t> unset;  // vertices without a non-degenerate face
};

inline VertexNormalResult vertex_normals(const Mesh& mesh, const GeometryCache& g,
                                         NormalWeighting weighting = NormalWeighting::Area) {
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
  VertexNormalResult r{Positions::Zero(n, 3), {}};
  for (std::size_t s = 0; s < mesh.num_faces(); ++s) {
    if (g.degenerate_faces[s]) continue;
    const auto si = static_cast<Eigen::Index>(s);
    const auto idx = mesh.face(s);
    for (int c = 0; c < 3; ++c) {
      const double w = weighting == NormalWeighting::Area ? g.face_areas(si) : g.angles(si, c);
      r.normals.row(static_cast<Eigen::Index>(idx[c])) += w * g.face_normals.row(si);
    }
  }
  for (Eigen::Index v = 0; v < n; ++v) {
    const double len = r.normals.row(v).norm();
    if (len > 0.0) {
      r.normals.row(v) /= len;
    } else {
      r.normals.row(v).setZero();
      r.unset.push_back(static_cast<std::size_t>(v));
    }
  }
  return r;
}

inline VertexNormalResult vertex_normals(const Mesh& mesh,
                                         NormalWeighting weighting = NormalWeighting::Area) {
  return vertex_normals(mesh, GeometryCache::compute(mesh), weighting);
}

// n x 5 rows of [vertex normal | mean curvature | Gaussian curvature].
struct LocalFeatures {
  Eigen::Matrix<double, Eigen::Dynamic, 5, Eigen::RowMajor> values;
  std::size_t degenerate_faces = 0;
  std::size_t degenerate_vertices = 0;
  std::vector<std::size_t> normal_unset;
  std::vector<bool> boundary;  // curvature at these vertices is unreliable
};

inline LocalFeatures local_features(const Mesh& mesh,
                                    NormalWeighting weighting = NormalWeighting::Area) {
  const GeometryCache g = GeometryCache::compute(mesh);
  const auto normals = vertex_normals(mesh, g, weighting);
  const auto kh = mean_curvature(mesh, g);
  const auto kg = gaussian_curvature(mesh, g);
  LocalFeatures out;
  out.values.resize(static_cast<Eigen::Index>(mesh.num_vertices()), 5);
  out.values.leftCols<3>() = normals.normals;
  out.values.col(3) = kh.values;
  out.values.col(4) = kg.values;
  out.degenerate_faces = g.degenerate_face_count;
  out.degenerate_vertices = kh.degenerate_vertices;
  out.normal_unset = normals.unset;
  out.boundary = boundary_vertices(mesh);
  return out;
}

}  // namespace dmdnet::diffgeo
