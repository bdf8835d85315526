#pragma once

// Vertex, normal, curvature, Chamfer and feature-extractor losses on the tape,
// plus plain-valued metrics built from them.

#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "dmdnet/autodiff.hpp"
#include "dmdnet/diffgeo.hpp"
#include "dmdnet/error.hpp"
#include "dmdnet/mesh.hpp"
#include "dmdnet/nearest.hpp"
#include "dmdnet/network.hpp"

namespace dmdnet::loss {

using ad::Tape;
using ad::Var;

struct LossWeights {
  double vertex = 1.0;
  double normal = 0.2;
  double curvature = 0.01;
  double chamfer = 0.05;
  double feature = 1.0;
  double gamma_mean = 1e-6;
  double gamma_gauss = 1.0;

  void validate() const {
    for (double w : {vertex, normal, curvature, chamfer, feature, gamma_mean, gamma_gauss})
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
  }
};

namespace detail {

using Index = std::shared_ptr<const std::vector<std::size_t>>;

inline Index make_index(std::vector<std::size_t> v) {
  return std::make_shared<const std::vector<std::size_t>>(std::move(v));
}

template <typename T>
Tensor<T> column(const std::vector<double>& v) {
  Tensor<T> t({v.size(), 1});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<T>(v[i]);
  return t;
}

// Vertex index of corner `slot` for each listed face.
inline Index slot_indices(const Mesh& mesh, const std::vector<std::size_t>& faces, int slot) {
  std::vector<std::size_t> idx;
  idx.reserve(faces.size());
  for (auto s : faces) idx.push_back(mesh.face(s)[static_cast<std::size_t>(slot)]);
  return make_index(std::move(idx));
}

// n x |faces| scatter matrix from corner `slot` of each listed face to its vertex.
inline std::shared_ptr<const SparseMatrix> corner_scatter(const Mesh& mesh, const std::vector<std::size_t>& faces,
                                                          int slot) {
  std::vector<SparseMatrix::Triplet> t;
  t.reserve(faces.size());
  for (std::size_t i = 0; i < faces.size(); ++i)
    t.push_back({mesh.face(faces[i])[static_cast<std::size_t>(slot)], i, 1.0});
  return std::make_shared<const SparseMatrix>(
      SparseMatrix::from_triplets(mesh.num_vertices(), faces.size(), std::move(t)));
}

template <typename T>
std::vector<std::size_t> non_degenerate_faces(const Mesh& connectivity, const Tensor<T>& positions) {
  std::vector<std::size_t> keep;
  for (std::size_t s = 0; s < connectivity.num_faces(); ++s) {
    const auto f = connectivity.face(s);
    Vec3 p[3];
    for (int c = 0; c < 3; ++c)
      for (std::size_t a = 0; a < 3; ++a) p[c](static_cast<Eigen::Index>(a)) = static_cast<double>(positions(f[c], a));
    if (0.5 * (p[1] - p[0]).cross(p[2] - p[0]).norm() >= diffgeo::kDegenerateArea) keep.push_back(s);
  }
  return keep;
}

template <typename T>
Var<T> broadcast3(Var<T> col) {
  return ad::concat_columns<T>({col, col, col});
}

}  // namespace detail

// Differentiable per-vertex curvature of `positions` on the connectivity of
// `connectivity`. Degenerate faces (area below threshold) are left out; the
// obtuse/non-obtuse branch of the mixed area is fixed by the current values.
template <typename T>
struct TapedCurvature {
  Var<T> mixed_area;  // n x 1
  Var<T> laplace_norm;  // n x 1, |sum_u w_vu (p_v - p_u)|
  Var<T> angle_deficit; // n x 1
  std::vector<double> area_values;
};

template <typename T>
TapedCurvature<T> taped_curvature(Var<T> positions, const Mesh& connectivity) {
  Tape<T>& tape = *positions.tape;
  const std::vector<std::size_t> faces = detail::non_degenerate_faces(connectivity, positions.value());
  const std::size_t n = connectivity.num_vertices();
  if (faces.empty()) throw DegenerateGeometry("curvature: every face is degenerate");

  Var<T> p[3];
  std::shared_ptr<const SparseMatrix> scatter[3];
  for (int c = 0; c < 3; ++c) {
    p[c] = ad::row_gather(positions, detail::slot_indices(connectivity, faces, c));
    scatter[c] = detail::corner_scatter(connectivity, faces, c);
  }

  Var<T> cot[3], angle[3], sq_len[3];
  std::vector<double> dots[3];
  for (int c = 0; c < 3; ++c) {
    Var<T> a = ad::sub(p[(c + 1) % 3], p[c]);
    Var<T> b = ad::sub(p[(c + 2) % 3], p[c]);
    Var<T> dot = ad::dot_rows(a, b);
    Var<T> cr = ad::norm_rows(ad::cross_product_rows(a, b));
    angle[c] = ad::atan2(cr, dot);
    cot[c] = ad::clamp(ad::div(dot, cr), static_cast<T>(-diffgeo::kCotangentClamp),
                       static_cast<T>(diffgeo::kCotangentClamp));
    sq_len[c] = ad::squared_norm_rows(ad::sub(p[(c + 2) % 3], p[(c + 1) % 3]));
    for (T v : dot.value().data()) dots[c].push_back(static_cast<double>(v));
  }
  Var<T> area = ad::scale(ad::norm_rows(ad::cross_product_rows(ad::sub(p[1], p[0]), ad::sub(p[2], p[0]))), T(0.5));

  // Mixed-area share of each corner.
  const std::size_t m = faces.size();
  std::vector<double> voronoi_mask(m), coef[3];
  for (int c = 0; c < 3; ++c) coef[c].assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const bool obtuse[3] = {dots[0][i] < 0.0, dots[1][i] < 0.0, dots[2][i] < 0.0};
    const bool any = obtuse[0] || obtuse[1] || obtuse[2];
    voronoi_mask[i] = any ? 0.0 : 1.0;
    if (any)
      for (int c = 0; c < 3; ++c) coef[c][i] = obtuse[c] ? 0.5 : 0.25;
  }
  Var<T> mask = tape.constant(detail::column<T>(voronoi_mask));

  Var<T> mixed, laplace, angle_sum;
  for (int c = 0; c < 3; ++c) {
    const int c1 = (c + 1) % 3, c2 = (c + 2) % 3;
    Var<T> voronoi = ad::scale(ad::add(ad::mul(sq_len[c2], cot[c2]), ad::mul(sq_len[c1], cot[c1])), T(0.125));
    Var<T> share = ad::add(ad::mul(voronoi, mask), ad::mul(area, tape.constant(detail::column<T>(coef[c]))));
    Var<T> to_vertex = ad::spmm(scatter[c], share);
    mixed = c == 0 ? to_vertex : ad::add(mixed, to_vertex);

    // cot of corner c weights its opposite edge (c1, c2).
    Var<T> weighted = ad::mul(detail::broadcast3(cot[c]), ad::sub(p[c1], p[c2]));
    Var<T> contrib = ad::sub(ad::spmm(scatter[c1], weighted), ad::spmm(scatter[c2], weighted));
    laplace = c == 0 ? contrib : ad::add(laplace, contrib);

    Var<T> angles = ad::spmm(scatter[c], angle[c]);
    angle_sum = c == 0 ? angles : ad::add(angle_sum, angles);
  }
  Var<T> deficit = ad::add_scalar(ad::scale(angle_sum, T(-1)), static_cast<T>(2.0 * std::numbers::pi));

  TapedCurvature<T> out{mixed, ad::norm_rows(laplace), deficit, {}};
  out.area_values.resize(n);
  for (std::size_t v = 0; v < n; ++v) out.area_values[v] = static_cast<double>(mixed.value()[v]);
  return out;
}

// (1/n) sum |P_out(v) - P_gt(v)|^2
template <typename T>
Var<T> vertex_loss(Var<T> p_out, Var<T> p_gt) {
  if (p_out.shape() != p_gt.shape()) {
    throw ShapeError("vertex_loss: " + shape_string(p_out.shape()) + " vs " + shape_string(p_gt.shape()));
  }
  return ad::mean_over_rows(ad::squared_norm_rows(ad::sub(p_out, p_gt)));
}

// Mean angle (radians) between corresponding face normals. Faces degenerate in
// either mesh are excluded from the sum and the count.
template <typename T>
Var<T> normal_loss(Var<T> p_out, const Mesh& gt) {
  Tape<T>& tape = *p_out.tape;
  if (p_out.rows() != gt.num_vertices()) throw ShapeError("normal_loss: vertex count mismatch");
  const diffgeo::GeometryCache g = diffgeo::GeometryCache::compute(gt);
  std::vector<std::size_t> faces;
  for (auto s : detail::non_degenerate_faces(gt, p_out.value()))
    if (!g.degenerate_faces[s]) faces.push_back(s);
  if (faces.empty()) throw DegenerateGeometry("normal_loss: every face is degenerate");

  Var<T> p[3];
  for (int c = 0; c < 3; ++c) p[c] = ad::row_gather(p_out, detail::slot_indices(gt, faces, c));
  Var<T> normals = ad::normalize_rows(ad::cross_product_rows(ad::sub(p[1], p[0]), ad::sub(p[2], p[0])));
  Tensor<T> gt_normals({faces.size(), 3});
  for (std::size_t i = 0; i < faces.size(); ++i)
    for (std::size_t a = 0; a < 3; ++a)
      gt_normals(i, a) = static_cast<T>(g.face_normals(static_cast<Eigen::Index>(faces[i]), static_cast<Eigen::Index>(a)));
  Var<T> cosines = ad::dot_rows(normals, tape.constant(std::move(gt_normals)));
  return ad::mean_over_rows(ad::acos_clamped(cosines));
}

// Ground-truth curvature targets, computed once per reference mesh.
struct CurvatureTargets {
  Eigen::VectorXd mean;
  Eigen::VectorXd gauss;
  Eigen::VectorXd mixed_area;

  static CurvatureTargets compute(const Mesh& gt) {
    const auto g = diffgeo::GeometryCache::compute(gt);
    return {diffgeo::mean_curvature(gt, g).values, diffgeo::gaussian_curvature(gt, g).values, g.mixed_areas};
  }
};

// gamma_H * L_H + gamma_G * L_G with L_X = mean_v |k_out - k_gt| * k_gt^2.
// Vertices with zero mixed area in either mesh are left out of both means.
template <typename T>
Var<T> curvature_loss(Var<T> p_out, const Mesh& gt, const CurvatureTargets& target, double gamma_mean,
                      double gamma_gauss) {
  Tape<T>& tape = *p_out.tape;
  TapedCurvature<T> k = taped_curvature(p_out, gt);
  std::vector<std::size_t> valid;
  for (std::size_t v = 0; v < gt.num_vertices(); ++v)
    if (k.area_values[v] > 0.0 && target.mixed_area(static_cast<Eigen::Index>(v)) > 0.0) valid.push_back(v);
  if (valid.empty()) throw DegenerateGeometry("curvature_loss: no vertex has positive mixed area");
  const auto idx = detail::make_index(valid);

  Var<T> area = ad::row_gather(k.mixed_area, idx);
  Var<T> mean_out = ad::div(ad::row_gather(k.laplace_norm, idx), ad::scale(area, T(4)));
  Var<T> gauss_out = ad::div(ad::row_gather(k.angle_deficit, idx), area);

  auto term = [&](Var<T> out, const Eigen::VectorXd& gt_values) {
    std::vector<double> target_v, weight;
    for (auto v : valid) {
      const double x = gt_values(static_cast<Eigen::Index>(v));
      target_v.push_back(x);
      weight.push_back(x * x);
    }
    Var<T> err = ad::abs(ad::sub(out, tape.constant(detail::column<T>(target_v))));
    return ad::mean_over_rows(ad::mul(err, tape.constant(detail::column<T>(weight))));
  };
  return ad::add(ad::scale(term(mean_out, target.mean), static_cast<T>(gamma_mean)),
                 ad::scale(term(gauss_out, target.gauss), static_cast<T>(gamma_gauss)));
}

template <typename T>
Var<T> curvature_loss(Var<T> p_out, const Mesh& gt, double gamma_mean, double gamma_gauss) {
  return curvature_loss(p_out, gt, CurvatureTargets::compute(gt), gamma_mean, gamma_gauss);
}

// Symmetric mean of squared nearest-neighbour distances. Correspondences are
// found on the current values and held fixed for the adjoint.
template <typename T>
Var<T> chamfer_loss(Var<T> p_out, Var<T> p_gt, bool use_grid = true) {
  if (p_out.rows() == 0 || p_gt.rows() == 0) throw ShapeError("chamfer_loss: empty point set");
  const Positions out = net::to_positions(p_out.value());
  const Positions gt = net::to_positions(p_gt.value());
  auto search = use_grid ? nearest_grid : nearest_brute_force;
  Var<T> to_gt = ad::row_gather(p_gt, search(out, gt));
  Var<T> to_out = ad::row_gather(p_out, search(gt, out));
  return ad::add(ad::mean_over_rows(ad::squared_norm_rows(ad::sub(p_out, to_gt))),
                 ad::mean_over_rows(ad::squared_norm_rows(ad::sub(to_out, p_gt))));
}

// (1/n) sum |fe(v) - gt(v)|^2 over the 5 feature columns.
template <typename T>
Var<T> feature_extractor_loss(Var<T> fe_out, const diffgeo::LocalFeatures& gt) {
  const auto n = static_cast<std::size_t>(gt.values.rows());
  if (fe_out.rows() != n || fe_out.cols() != 5) {
    throw ShapeError("feature_extractor_loss: expected " + std::to_string(n) + "x5, got " +
                     shape_string(fe_out.shape()));
  }
  Tensor<T> target({n, 5});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      target(i, j) = static_cast<T>(gt.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  return ad::mean_over_rows(ad::squared_norm_rows(ad::sub(fe_out, fe_out.tape->constant(std::move(target)))));
}

template <typename T>
struct LossTerms {
  Var<T> vertex;
  Var<T> normal;
  Var<T> curvature;
  Var<T> chamfer;
  Var<T> feature;
};

template <typename T>
Var<T> total_loss(const LossTerms<T>& t, const LossWeights& w) {
  Var<T> sum = ad::scale(t.vertex, static_cast<T>(w.vertex));
  sum = ad::add(sum, ad::scale(t.normal, static_cast<T>(w.normal)));
  sum = ad::add(sum, ad::scale(t.curvature, static_cast<T>(w.curvature)));
  sum = ad::add(sum, ad::scale(t.chamfer, static_cast<T>(w.chamfer)));
  return ad::add(sum, ad::scale(t.feature, static_cast<T>(w.feature)));
}

// Ground-truth data the training losses compare against.
struct Reference {
  Mesh mesh;
  CurvatureTargets curvature;
  diffgeo::LocalFeatures features;

  explicit Reference(Mesh gt)
      : mesh(std::move(gt)), curvature(CurvatureTargets::compute(mesh)), features(diffgeo::local_features(mesh)) {}
};

template <typename T>
LossTerms<T> all_terms(Var<T> p_out, Var<T> fe_out, const Reference& ref, const LossWeights& w) {
  Tape<T>& tape = *p_out.tape;
  Var<T> p_gt = tape.constant(net::positions_tensor<T>(ref.mesh.positions()));
  return {vertex_loss(p_out, p_gt), normal_loss(p_out, ref.mesh),
          curvature_loss(p_out, ref.mesh, ref.curvature, w.gamma_mean, w.gamma_gauss), chamfer_loss(p_out, p_gt),
          feature_extractor_loss(fe_out, ref.features)};
}

// ---------------------------------------------------------------------------
// Plain metrics between two meshes with the same connectivity.

struct Metrics {
  double vertex = 0.0;      // squared canonical units
  double normal_deg = 0.0;  // degrees
  double chamfer = 0.0;     // squared canonical units
};

inline Metrics compare(const Mesh& a, const Mesh& b) {
  if (a.num_vertices() != b.num_vertices() || a.faces() != b.faces())
    throw MeshError("compare: meshes differ in connectivity");
  Tape<double> tape;
  Var<double> pa = tape.constant(net::positions_tensor<double>(a.positions()));
  Var<double> pb = tape.constant(net::positions_tensor<double>(b.positions()));
  Metrics m;
  m.vertex = vertex_loss(pa, pb).value().item();
  m.normal_deg = normal_loss(pa, b).value().item() * 180.0 / std::numbers::pi;
  m.chamfer = chamfer_loss(pa, pb).value().item();
  return m;
}

}  // namespace dmdnet::loss
