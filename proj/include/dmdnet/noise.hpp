#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Geometry>

#include "dmdnet/error.hpp"
#include "dmdnet/mesh.hpp"

namespace dmdnet {

enum class NoiseKind { Gaussian, Uniform, Gamma, Impulse };

inline std::string_view to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::Uniform: return "uniform";
    case NoiseKind::Gamma: return "gamma";
    case NoiseKind::Impulse: return "impulse";
  }
  return "?";
}

inline NoiseKind parse_noise_kind(std::string_view s) {
  if (s == "gaussian") return NoiseKind::Gaussian;
  if (s == "uniform") return NoiseKind::Uniform;
  if (s == "gamma") return NoiseKind::Gamma;
  if (s == "impulse") return NoiseKind::Impulse;
  throw ConfigError("unknown noise kind '" + std::string(s) + "'");
}

// One noise family and level. `amplitude` is sigma for gaussian and the scale
// `a` for the others. Levels are in canonical (unit-cube) units.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::Gaussian;
  double amplitude = 0.0;
  double impulse_plus = 0.15;
  double impulse_minus = 0.15;
  std::uint64_t seed = 0;

  void validate() const {
    if (!std::isfinite(amplitude)) throw ConfigError("noise amplitude is not finite");
    if (amplitude < 0.0) throw ConfigError("noise amplitude is negative");
    if (!(impulse_plus >= 0.0 && impulse_plus <= 0.5 && impulse_minus >= 0.0 && impulse_minus <= 0.5))
      throw ConfigError("impulse probabilities must lie in [0, 0.5]");
  }
};

// Gamma(shape 2, rate 2): the parametrisation whose second moment matches the
// reported reference errors for a * Gamma(2, 2) noise.
inline constexpr double kGammaShape = 2.0;
inline constexpr double kGammaScale = 0.5;

// P' = P + N, one independent draw per coordinate in row-major order.
inline Mesh apply_noise(const Mesh& mesh, const NoiseSpec& spec) {
  spec.validate();
  Positions p = mesh.positions();
  if (spec.amplitude == 0.0) return mesh.with_positions(std::move(p));

  std::mt19937_64 rng(spec.seed);
  const double a = spec.amplitude;
  double* data = p.data();
  const auto count = static_cast<std::size_t>(p.size());
  switch (spec.kind) {
    case NoiseKind::Gaussian: {
      std::normal_distribution<double> dist(0.0, a);
      for (std::size_t i = 0; i < count; ++i) data[i] += dist(rng);
      break;
    }
    case NoiseKind::Uniform: {
      std::uniform_real_distribution<double> dist(-1.0, 1.0);
      for (std::size_t i = 0; i < count; ++i) data[i] += a * dist(rng);
      break;
    }
    case NoiseKind::Gamma: {
      std::gamma_distribution<double> dist(kGammaShape, kGammaScale);
      std::bernoulli_distribution sign(0.5);
      for (std::size_t i = 0; i < count; ++i) {
        const double magnitude = dist(rng);
        data[i] += sign(rng) ? a * magnitude : -a * magnitude;
      }
      break;
    }
    case NoiseKind::Impulse: {
      std::uniform_real_distribution<double> dist(0.0, 1.0);
      for (std::size_t i = 0; i < count; ++i) {
        const double u = dist(rng);
        if (u < spec.impulse_plus) {
          data[i] += a;
        } else if (u < spec.impulse_plus + spec.impulse_minus) {
          data[i] -= a;
        }
      }
      break;
    }
  }
  return mesh.with_positions(std::move(p));
}

// Uniformly distributed rotation (normalised Gaussian quaternion).
inline Eigen::Matrix3d random_rotation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::Quaterniond q;
  do {
    q = Eigen::Quaterniond(dist(rng), dist(rng), dist(rng), dist(rng));
  } while (q.norm() < 1e-12);
  q.normalize();
  return q.toRotationMatrix();
}

inline Positions rotate(const Positions& p, const Eigen::Matrix3d& r) {
  return (p * r.transpose()).eval();
}

struct NoiseLevel {
  NoiseKind kind;
  double amplitude;
};

// Four families times five levels.
inline std::vector<NoiseLevel> default_noise_grid() {
  std::vector<NoiseLevel> grid;
  for (double s : {0.005, 0.01, 0.015, 0.02, 0.03}) grid.push_back({NoiseKind::Gaussian, s});
  for (double s : {0.01, 0.02, 0.03, 0.04, 0.05}) grid.push_back({NoiseKind::Uniform, s});
  for (double s : {0.005, 0.0075, 0.01, 0.0125, 0.015}) grid.push_back({NoiseKind::Gamma, s});
  for (double s : {0.01, 0.02, 0.03, 0.04, 0.05}) grid.push_back({NoiseKind::Impulse, s});
  return grid;
}

// Uniform draw over the grid; the returned spec carries a fresh noise seed
// derived from `seed`.
inline NoiseSpec mixed_noise_sample(const std::vector<NoiseLevel>& grid, std::uint64_t seed) {
  if (grid.empty()) throw ConfigError("noise grid is empty");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
  const NoiseLevel& level = grid[pick(rng)];
  NoiseSpec spec;
  spec.kind = level.kind;
  spec.amplitude = level.amplitude;
  spec.seed = rng();
  return spec;
}

}  // namespace dmdnet
