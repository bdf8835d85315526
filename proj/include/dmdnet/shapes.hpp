#pragma once

// Procedural test meshes.

#include <cmath>
#include <map>
#include <numbers>
#include <utility>
#include <vector>

#include "dmdnet/mesh.hpp"

namespace dmdnet::shapes {

namespace detail {

inline Mesh from_vectors(const std::vector<Vec3>& pts, const std::vector<std::array<int, 3>>& tris) {
  Positions p(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  Faces f(static_cast<Eigen::Index>(tris.size()), 3);
  for (std::size_t i = 0; i < tris.size(); ++i)
    f.row(static_cast<Eigen::Index>(i)) << tris[i][0], tris[i][1], tris[i][2];
  return Mesh(std::move(p), std::move(f));
}

}  // namespace detail

inline Mesh triangle() {
  return detail::from_vectors({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
}

// Regular tetrahedron with outward-facing counter-clockwise faces.
inline Mesh tetrahedron() {
  return detail::from_vectors({{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}},
                              {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}});
}

inline Mesh two_triangles() {
  return detail::from_vectors({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}}, {{0, 1, 2}, {1, 3, 2}});
}

// Axis-aligned cube [0, side]^3, two triangles per side, outward normals.
inline Mesh cube(double side = 1.0) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 8; ++i) pts.emplace_back(side * (i & 1), side * ((i >> 1) & 1), side * ((i >> 2) & 1));
  return detail::from_vectors(pts, {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                                    {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}});
}

// Planar (nx x ny)-vertex grid in z = 0 with the given spacing.
inline Mesh grid(int nx, int ny, double spacing = 1.0) {
  std::vector<Vec3> pts;
  std::vector<std::array<int, 3>> tris;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) pts.emplace_back(spacing * i, spacing * j, 0.0);
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      const int a = j * nx + i, b = a + 1, c = a + nx, d = c + 1;
      tris.push_back({a, b, d});
      tris.push_back({a, d, c});
    }
  return detail::from_vectors(pts, tris);
}

// Icosahedron refined by midpoint subdivision, projected to a sphere.
inline Mesh icosphere(int subdivisions, double radius = 1.0) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> pts = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                           {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : pts) p.normalize();
  std::vector<std::array<int, 3>> tris = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                          {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                          {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                          {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      pts.push_back((0.5 * (pts[static_cast<std::size_t>(a)] + pts[static_cast<std::size_t>(b)])).normalized());
      const int id = static_cast<int>(pts.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(tris.size() * 4);
    for (const auto& tri : tris) {
      const int ab = mid(tri[0], tri[1]), bc = mid(tri[1], tri[2]), ca = mid(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    tris = std::move(next);
  }
  for (auto& p : pts) p *= radius;
  return detail::from_vectors(pts, tris);
}

// Closed torus with nu x nv vertices (major radius R around z, tube radius r).
inline Mesh torus(int nu, int nv, double major = 1.0, double minor = 0.4) {
  std::vector<Vec3> pts;
  std::vector<std::array<int, 3>> tris;
  for (int i = 0; i < nu; ++i) {
    const double u = 2.0 * std::numbers::pi * i / nu;
    for (int j = 0; j < nv; ++j) {
      const double v = 2.0 * std::numbers::pi * j / nv;
      pts.emplace_back((major + minor * std::cos(v)) * std::cos(u),
                       (major + minor * std::cos(v)) * std::sin(u), minor * std::sin(v));
    }
  }
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      const int a = i * nv + j, b = ((i + 1) % nu) * nv + j;
      const int c = i * nv + (j + 1) % nv, d = ((i + 1) % nu) * nv + (j + 1) % nv;
      tris.push_back({a, b, d});
      tris.push_back({a, d, c});
    }
  return detail::from_vectors(pts, tris);
}

}  // namespace dmdnet::shapes
