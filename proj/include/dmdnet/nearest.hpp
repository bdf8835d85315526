#pragma once

// Nearest-neighbour queries between point sets. Ties resolve to the smallest
// reference index in both the brute-force and the grid path, so the two agree
// exactly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "dmdnet/error.hpp"
#include "dmdnet/mesh.hpp"

namespace dmdnet {

inline double squared_distance(const Positions& a, Eigen::Index i, const Positions& b, Eigen::Index j) {
  const double dx = a(i, 0) - b(j, 0);
  const double dy = a(i, 1) - b(j, 1);
  const double dz = a(i, 2) - b(j, 2);
  return dx * dx + dy * dy + dz * dz;
}

inline std::vector<std::size_t> nearest_brute_force(const Positions& query, const Positions& reference) {
  if (reference.rows() == 0) throw ShapeError("nearest neighbour: empty reference set");
  std::vector<std::size_t> out(static_cast<std::size_t>(query.rows()));
  for (Eigen::Index i = 0; i < query.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index arg = 0;
    for (Eigen::Index j = 0; j < reference.rows(); ++j) {
      const double d = squared_distance(query, i, reference, j);
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(arg);
  }
  return out;
}

// Uniform grid over the reference bounding box with cell size
// diagonal / n^(1/3), buckets stored in compressed form.
class UniformGrid {
 public:
  explicit UniformGrid(const Positions& reference) : ref_(reference) {
    if (reference.rows() == 0) throw ShapeError("nearest neighbour: empty reference set");
    lo_ = reference.colwise().minCoeff().transpose();
    const Vec3 hi = reference.colwise().maxCoeff().transpose();
    const double diag = (hi - lo_).norm();
    const double n = static_cast<double>(reference.rows());
    cell_ = diag > 0.0 ? diag / std::cbrt(n) : 1.0;
    for (int a = 0; a < 3; ++a)
      dims_[a] = std::max<long>(1, static_cast<long>(std::floor((hi(a) - lo_(a)) / cell_)) + 1);

    const std::size_t cells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
    start_.assign(cells + 1, 0);
    std::vector<std::size_t> cell_of(static_cast<std::size_t>(reference.rows()));
    for (Eigen::Index j = 0; j < reference.rows(); ++j) {
      const auto c = flat(cell_coord(reference.row(j).transpose()));
      cell_of[static_cast<std::size_t>(j)] = c;
      ++start_[c + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) start_[c + 1] += start_[c];
    items_.resize(static_cast<std::size_t>(reference.rows()));
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t j = 0; j < cell_of.size(); ++j) items_[fill[cell_of[j]]++] = j;
  }

  std::size_t nearest(const Positions& query, Eigen::Index i) const {
    const auto c = raw_coord(query.row(i).transpose());
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    // Rings closer than the grid contain no cells.
    long first = 0;
    for (int a = 0; a < 3; ++a) first = std::max({first, -c[a], c[a] - (dims_[a] - 1)});
    for (long r = first;; ++r) {
      bool covers_all = true;
      for (int a = 0; a < 3; ++a) covers_all = covers_all && c[a] - r <= 0 && c[a] + r >= dims_[a] - 1;
      visit_ring(c, r, [&](std::size_t cell) {
        for (std::size_t e = start_[cell]; e < start_[cell + 1]; ++e) {
          const std::size_t j = items_[e];
          const double d = squared_distance(query, i, ref_, static_cast<Eigen::Index>(j));
          if (d < best || (d == best && j < arg)) {
            best = d;
            arg = j;
          }
        }
      });
      if (covers_all) break;
      // Every unvisited point lies outside the ring-r block, at least r cells away.
      const double bound = static_cast<double>(r) * cell_;
      if (bound * bound > best) break;
    }
    return arg;
  }

 private:
  using Coord = std::array<long, 3>;

  Coord raw_coord(const Vec3& p) const {
    Coord c;
    for (int a = 0; a < 3; ++a) c[a] = static_cast<long>(std::floor((p(a) - lo_(a)) / cell_));
    return c;
  }

  Coord cell_coord(const Vec3& p) const {
    Coord c = raw_coord(p);
    for (int a = 0; a < 3; ++a) c[a] = std::clamp<long>(c[a], 0, dims_[a] - 1);
    return c;
  }

  std::size_t flat(const Coord& c) const {
    return static_cast<std::size_t>((c[2] * dims_[1] + c[1]) * dims_[0] + c[0]);
  }

  // Cells at Chebyshev distance exactly r from c, clipped to the grid.
  template <typename F>
  void visit_ring(const Coord& c, long r, F&& f) const {
    const long x0 = std::max(c[0] - r, 0L), x1 = std::min(c[0] + r, dims_[0] - 1);
    const long y0 = std::max(c[1] - r, 0L), y1 = std::min(c[1] + r, dims_[1] - 1);
    const long z0 = std::max(c[2] - r, 0L), z1 = std::min(c[2] + r, dims_[2] - 1);
    for (long z = z0; z <= z1; ++z)
      for (long y = y0; y <= y1; ++y)
        for (long x = x0; x <= x1; ++x) {
          const long ring = std::max({std::labs(x - c[0]), std::labs(y - c[1]), std::labs(z - c[2])});
          if (ring == r) f(flat({x, y, z}));
        }
  }

  const Positions& ref_;
  Vec3 lo_;
  double cell_ = 1.0;
  long dims_[3] = {1, 1, 1};
  std::vector<std::size_t> start_;
  std::vector<std::size_t> items_;
};

inline std::vector<std::size_t> nearest_grid(const Positions& query, const Positions& reference) {
  const UniformGrid grid(reference);
  std::vector<std::size_t> out(static_cast<std::size_t>(query.rows()));
  for (Eigen::Index i = 0; i < query.rows(); ++i) out[static_cast<std::size_t>(i)] = grid.nearest(query, i);
  return out;
}

}  // namespace dmdnet
