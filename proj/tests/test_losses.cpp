#include <gtest/gtest.h>

#include <numbers>

#include "gradient_cases.hpp"

using namespace testing_support;
using V = ad::Var<double>;

namespace {

constexpr double kPi = std::numbers::pi;

Tensor<double> rows(std::size_t n, std::initializer_list<double> values) { return Tensor<double>::matrix(n, 3, values); }

Mesh mesh_of(const Tensor<double>& p, const Faces& f) { return Mesh(net::to_positions(p), f); }

}  // namespace

class LossGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(LossGradient, MatchesFiniteDifferences) {
  const auto c = loss_cases()[GetParam()];
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = c.make(seed * 104729 + 3);
    const auto r = check_gradient(inst.fn, inst.inputs, 1e-5);
    EXPECT_LT(r.rel_error, 1e-4) << c.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllLosses, LossGradient, ::testing::Range<std::size_t>(0, loss_cases().size()),
                         [](const auto& info) { return loss_cases()[info.param].name; });

TEST(VertexLoss, Examples) {
  ad::Tape<double> t;
  auto zero = rows(2, {0, 0, 0, 0, 0, 0});
  EXPECT_EQ(loss::vertex_loss(t.constant(zero), t.constant(zero)).value().item(), 0.0);
  EXPECT_EQ(loss::vertex_loss(t.constant(rows(1, {1, 0, 0})), t.constant(rows(1, {0, 0, 0}))).value().item(), 1.0);
  EXPECT_EQ(loss::vertex_loss(t.constant(rows(2, {1, 0, 0, 0, 2, 0})), t.constant(zero)).value().item(), 2.5);
  EXPECT_THROW(loss::vertex_loss(t.constant(zero), t.constant(rows(1, {0, 0, 0}))), ShapeError);
}

TEST(NormalLoss, Examples) {
  const Mesh tri = shapes::triangle();
  ad::Tape<double> t;
  EXPECT_EQ(loss::normal_loss(t.constant(net::positions_tensor<double>(tri.positions())), tri).value().item(), 0.0);
  // Rotated 90 degrees about the x axis.
  auto up = rows(3, {0, 0, 0, 1, 0, 0, 0, 0, 1});
  EXPECT_DOUBLE_EQ(loss::normal_loss(t.constant(up), tri).value().item(), kPi / 2);

  Positions p(6, 3);
  p << 0, 0, 0, 1, 0, 0, 0, 1, 0, 3, 0, 0, 4, 0, 0, 3, 1, 0;
  Faces f(2, 3);
  f << 0, 1, 2, 3, 4, 5;
  const Mesh two(p, f);
  Positions flipped = p;
  flipped.row(4) = p.row(5);
  flipped.row(5) = p.row(4);
  EXPECT_DOUBLE_EQ(loss::normal_loss(t.constant(net::positions_tensor<double>(flipped)), two).value().item(), kPi / 2);
}

TEST(NormalLoss, SkipsDegenerateFaces) {
  Positions p(6, 3);
  p << 0, 0, 0, 1, 0, 0, 0, 1, 0, 3, 0, 0, 4, 0, 0, 3, 1, 0;
  Faces f(2, 3);
  f << 0, 1, 2, 3, 4, 5;
  const Mesh gt(p, f);
  Positions out = p;
  out.row(5) = out.row(3);  // second face collapses
  out.row(2) << 0, 0, 1;
  ad::Tape<double> t;
  EXPECT_DOUBLE_EQ(loss::normal_loss(t.constant(net::positions_tensor<double>(out)), gt).value().item(), kPi / 2);
  out.row(2) = out.row(0);
  EXPECT_THROW(loss::normal_loss(t.constant(net::positions_tensor<double>(out)), gt), DegenerateGeometry);
}

TEST(NormalLoss, JointRotationInvariance) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto pair = cases::mesh_pair(seed, 0.1);
    const Eigen::Matrix3d r = random_rotation(seed + 50);
    ad::Tape<double> t;
    const double a = loss::normal_loss(t.constant(pair.out), pair.gt).value().item();
    const Mesh gt_r = pair.gt.with_positions(rotate(pair.gt.positions(), r));
    const double b =
        loss::normal_loss(t.constant(net::positions_tensor<double>(rotate(net::to_positions(pair.out), r))), gt_r)
            .value()
            .item();
    EXPECT_NEAR(a, b, 1e-9);
    EXPECT_GT(a, 0.0);
  }
}

TEST(CurvatureLoss, IdenticalAndPlanar) {
  const Mesh m = random_mesh(1, false);
  ad::Tape<double> t;
  EXPECT_NEAR(loss::curvature_loss(t.constant(net::positions_tensor<double>(m.positions())), m, 1.0, 1.0).value().item(), 0.0,
              1e-9);
  // A flat ground truth has zero curvature away from its boundary; drop the
  // boundary targets and any bumped output scores zero.
  const Mesh plane = shapes::grid(5, 5, 0.25);
  const auto bumped = jitter(plane.positions(), 0.05, 3);
  loss::CurvatureTargets targets = loss::CurvatureTargets::compute(plane);
  const auto boundary = boundary_vertices(plane);
  for (std::size_t v = 0; v < boundary.size(); ++v) {
    const auto i = static_cast<Eigen::Index>(v);
    if (boundary[v]) targets.mean(i) = targets.gauss(i) = 0.0;
    else ASSERT_LT(std::abs(targets.gauss(i)) + std::abs(targets.mean(i)), 1e-9);
  }
  EXPECT_NEAR(loss::curvature_loss(t.constant(net::positions_tensor<double>(bumped)), plane, targets, 1.0, 1.0).value().item(),
              0.0, 1e-15);
}

TEST(CurvatureLoss, SingleVertexSubstitution) {
  // Scale a tetrahedron so vertex 0 has Gaussian curvature exactly 2 and keep
  // only that vertex in the mean.
  Mesh tet = shapes::tetrahedron();
  const double k1 = diffgeo::gaussian_curvature(tet).values(0);
  tet = tet.with_positions(tet.positions() * std::sqrt(k1 / 2.0));
  ASSERT_NEAR(diffgeo::gaussian_curvature(tet).values(0), 2.0, 1e-12);
  loss::CurvatureTargets targets = loss::CurvatureTargets::compute(tet);
  targets.mixed_area.tail(3).setZero();
  targets.gauss(0) = 1.0;
  ad::Tape<double> t;
  const double l = loss::curvature_loss(t.constant(net::positions_tensor<double>(tet.positions())), tet, targets, 0.0, 1.0)
                       .value()
                       .item();
  EXPECT_NEAR(l, 1.0, 1e-12);
}

TEST(ChamferLoss, Examples) {
  ad::Tape<double> t;
  auto a = rows(1, {0, 0, 0}), b = rows(1, {1, 0, 0});
  EXPECT_EQ(loss::chamfer_loss(t.constant(a), t.constant(b)).value().item(), 2.0);
  EXPECT_EQ(loss::chamfer_loss(t.constant(a), t.constant(a)).value().item(), 0.0);
  EXPECT_THROW(loss::chamfer_loss(t.constant(a), t.constant(Tensor<double>({0, 3}))), Error);
}

TEST(ChamferLoss, GridEqualsBruteForce) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_tensor<double>({1 + rng() % 200, 3}, rng), b = random_tensor<double>({1 + rng() % 200, 3}, rng);
    ad::Tape<double> t;
    const double grid = loss::chamfer_loss(t.constant(a), t.constant(b), true).value().item();
    const double brute = loss::chamfer_loss(t.constant(a), t.constant(b), false).value().item();
    ASSERT_EQ(grid, brute);
  }
}

TEST(ChamferLoss, BoundedByTwiceVertexLoss) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto pair = cases::mesh_pair(seed, 0.05 * static_cast<double>(seed + 1));
    ad::Tape<double> t;
    auto out = t.constant(pair.out), gt = t.constant(net::positions_tensor<double>(pair.gt.positions()));
    const double c = loss::chamfer_loss(out, gt).value().item(), v = loss::vertex_loss(out, gt).value().item();
    EXPECT_LE(c, 2 * v + 1e-15);
  }
  // Tiny offsets keep each point's nearest neighbour its own correspondent.
  const Mesh m = shapes::icosphere(1);
  Positions shifted = m.positions();
  shifted.col(0).array() += 1e-3;
  ad::Tape<double> t;
  auto out = t.constant(net::positions_tensor<double>(shifted)), gt = t.constant(net::positions_tensor<double>(m.positions()));
  EXPECT_NEAR(loss::chamfer_loss(out, gt).value().item(), 2 * loss::vertex_loss(out, gt).value().item(), 1e-18);
}

TEST(FeatureLoss, Examples) {
  const Mesh m = random_mesh(2);
  const auto features = diffgeo::local_features(m);
  Tensor<double> exact({m.num_vertices(), 5});
  for (std::size_t i = 0; i < m.num_vertices(); ++i)
    for (std::size_t j = 0; j < 5; ++j) exact(i, j) = features.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  ad::Tape<double> t;
  EXPECT_EQ(loss::feature_extractor_loss(t.constant(exact), features).value().item(), 0.0);

  diffgeo::LocalFeatures one;
  one.values.resize(1, 5);
  one.values << 0, 0, 1, 0.5, 0.25;
  EXPECT_EQ(loss::feature_extractor_loss(t.constant(Tensor<double>::matrix(1, 5, {0, 0, 0, 0.5, 0.25})), one).value().item(), 1.0);
  EXPECT_THROW(loss::feature_extractor_loss(t.constant(Tensor<double>({1, 4})), one), ShapeError);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i)
    EXPECT_GE(loss::feature_extractor_loss(t.constant(random_tensor<double>({m.num_vertices(), 5}, rng)), features).value().item(), 0.0);
}

TEST(TotalLoss, WeightsCombine) {
  ad::Tape<double> t;
  auto one = t.constant(Tensor<double>::scalar(1.0));
  const loss::LossTerms<double> terms{one, one, one, one, one};
  EXPECT_DOUBLE_EQ(loss::total_loss(terms, loss::LossWeights{}).value().item(), 2.26);
  loss::LossWeights zero{0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(loss::total_loss(terms, zero).value().item(), 0.0);
}

TEST(TotalLoss, DefaultWeights) {
  const loss::LossWeights w;
  EXPECT_EQ(w.vertex, 1.0);
  EXPECT_EQ(w.normal, 0.2);
  EXPECT_EQ(w.curvature, 0.01);
  EXPECT_EQ(w.chamfer, 0.05);
  EXPECT_EQ(w.feature, 1.0);
  EXPECT_EQ(w.gamma_mean, 1e-6);
  EXPECT_EQ(w.gamma_gauss, 1.0);
  loss::LossWeights bad;
  bad.normal = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Metrics, CompareIdenticalIsZero) {
  const Mesh m = random_mesh(3);
  const auto r = loss::compare(m, m);
  EXPECT_EQ(r.vertex, 0.0);
  // acos near 1 turns a one-ulp cosine error into ~1e-8 rad.
  EXPECT_LT(r.normal_deg, 1e-5);
  EXPECT_EQ(r.chamfer, 0.0);
  EXPECT_THROW(loss::compare(m, shapes::triangle()), MeshError);
}
