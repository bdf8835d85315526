#include <gtest/gtest.h>

#include <map>

#include "support.hpp"

using namespace testing_support;

namespace {

// ~10^4 coordinates.
Mesh big_mesh() { return shapes::torus(60, 56); }

NoiseSpec spec(NoiseKind kind, double a, std::uint64_t seed = 1) {
  NoiseSpec s;
  s.kind = kind;
  s.amplitude = a;
  s.seed = seed;
  return s;
}

Eigen::ArrayXd deltas(const Mesh& a, const Mesh& b) {
  const Positions d = b.positions() - a.positions();
  return Eigen::Map<const Eigen::ArrayXd>(d.data(), d.size());
}

}  // namespace

TEST(Noise, GaussianVariance) {
  const Mesh m = big_mesh();
  ASSERT_GE(m.positions().size(), 10000);
  const double sigma = 0.05;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = deltas(m, apply_noise(m, spec(NoiseKind::Gaussian, sigma, seed)));
    const double mean = d.mean();
    const double var = (d - mean).square().sum() / static_cast<double>(d.size() - 1);
    EXPECT_GE(var, 0.95 * sigma * sigma);
    EXPECT_LE(var, 1.05 * sigma * sigma);
    // Mean squared vertex displacement is 3 sigma^2.
    EXPECT_NEAR(d.square().sum() / static_cast<double>(m.num_vertices()), 3 * sigma * sigma, 0.05 * 3 * sigma * sigma);
  }
}

TEST(Noise, ImpulseFraction) {
  const Mesh m = big_mesh();
  const auto d = deltas(m, apply_noise(m, spec(NoiseKind::Impulse, 0.1, 7)));
  Eigen::Index moved = 0, plus = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d(i) == 0.0) continue;
    ++moved;
    plus += d(i) > 0;
    EXPECT_NEAR(std::abs(d(i)), 0.1, 1e-12);
  }
  const double frac = static_cast<double>(moved) / static_cast<double>(d.size());
  EXPECT_GE(frac, 0.27);
  EXPECT_LE(frac, 0.33);
  EXPECT_NEAR(static_cast<double>(plus) / static_cast<double>(moved), 0.5, 0.05);
}

TEST(Noise, UniformMoments) {
  const Mesh m = big_mesh();
  const double a = 0.04;
  const auto d = deltas(m, apply_noise(m, spec(NoiseKind::Uniform, a, 3)));
  EXPECT_LE(d.abs().maxCoeff(), a);
  EXPECT_NEAR(d.square().mean(), a * a / 3.0, 0.05 * a * a / 3.0);
}

TEST(Noise, GammaMoments) {
  const Mesh m = big_mesh();
  const double a = 0.01;
  const auto d = deltas(m, apply_noise(m, spec(NoiseKind::Gamma, a, 4)));
  // Gamma(2, scale 1/2): E[X] = 1, E[X^2] = 1.5. Signs are symmetric.
  EXPECT_NEAR(d.square().mean(), 1.5 * a * a, 0.05 * 1.5 * a * a);
  EXPECT_NEAR(d.abs().mean(), a, 0.03 * a);
  EXPECT_NEAR(d.mean(), 0.0, 0.05 * a);
}

TEST(Noise, ZeroAmplitudeIsIdentity) {
  const Mesh m = random_mesh(2);
  for (auto k : {NoiseKind::Gaussian, NoiseKind::Uniform, NoiseKind::Gamma, NoiseKind::Impulse})
    EXPECT_EQ(apply_noise(m, spec(k, 0.0)), m);
}

TEST(Noise, DeterministicAndKeepsFaces) {
  const Mesh m = random_mesh(3);
  for (auto k : {NoiseKind::Gaussian, NoiseKind::Uniform, NoiseKind::Gamma, NoiseKind::Impulse}) {
    const Mesh a = apply_noise(m, spec(k, 0.02, 9)), b = apply_noise(m, spec(k, 0.02, 9));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.faces(), m.faces());
    EXPECT_FALSE(apply_noise(m, spec(k, 0.02, 10)) == a);
  }
}

TEST(Noise, RejectsInvalidSpec) {
  const Mesh m = shapes::triangle();
  EXPECT_THROW(apply_noise(m, spec(NoiseKind::Gaussian, -1.0)), ConfigError);
  EXPECT_THROW(apply_noise(m, spec(NoiseKind::Gaussian, std::nan(""))), ConfigError);
  EXPECT_THROW(apply_noise(m, spec(NoiseKind::Gaussian, INFINITY)), ConfigError);
  auto s = spec(NoiseKind::Impulse, 0.1);
  s.impulse_plus = 0.6;
  EXPECT_THROW(apply_noise(m, s), ConfigError);
  EXPECT_THROW(parse_noise_kind("laplace"), ConfigError);
  EXPECT_EQ(parse_noise_kind(to_string(NoiseKind::Gamma)), NoiseKind::Gamma);
}

TEST(Noise, RotationIsProper) {
  Eigen::Vector3d mean_z = Eigen::Vector3d::Zero();
  const int samples = 10000;
  for (int i = 0; i < samples; ++i) {
    const Eigen::Matrix3d r = random_rotation(static_cast<std::uint64_t>(i));
    if (i < 200) {
      EXPECT_LT((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    }
    mean_z += r.col(2);
  }
  EXPECT_LT((mean_z / samples).norm(), 0.05);
  EXPECT_EQ(random_rotation(5), random_rotation(5));
}

TEST(Noise, MixedSampleIsUniformOverGrid) {
  const auto grid = default_noise_grid();
  ASSERT_EQ(grid.size(), 20u);
  std::map<std::pair<int, double>, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto s = mixed_noise_sample(grid, static_cast<std::uint64_t>(i));
    ++counts[{static_cast<int>(s.kind), s.amplitude}];
  }
  EXPECT_EQ(counts.size(), 20u);
  for (const auto& [key, c] : counts) {
    EXPECT_GE(c, 0.03 * draws);
    EXPECT_LE(c, 0.07 * draws);
  }
  const auto a = mixed_noise_sample(grid, 77), b = mixed_noise_sample(grid, 77);
  EXPECT_EQ(a.kind, b.kind);
  EXPECT_EQ(a.amplitude, b.amplitude);
  EXPECT_EQ(a.seed, b.seed);
}

TEST(Noise, MixedSampleEdgeCases) {
  EXPECT_THROW(mixed_noise_sample({}, 1), ConfigError);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto x = mixed_noise_sample({{NoiseKind::Uniform, 0.3}}, s);
    EXPECT_EQ(x.kind, NoiseKind::Uniform);
    EXPECT_EQ(x.amplitude, 0.3);
  }
}
