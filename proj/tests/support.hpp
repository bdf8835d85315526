#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "dmdnet/dmdnet.hpp"

namespace testing_support {

using namespace dmdnet;

inline Positions jitter(const Positions& p, double amount, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amount, amount);
  Positions q = p;
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] += u(rng);
  return q;
}

// Small irregular closed or open meshes for randomized checks.
inline Mesh random_mesh(std::uint64_t seed, bool allow_open = true) {
  std::mt19937_64 rng(seed);
  const int pick = static_cast<int>(rng() % (allow_open ? 3 : 2));
  Mesh base;
  if (pick == 0) base = shapes::icosphere(1, 1.0);
  else if (pick == 1) base = shapes::torus(6 + static_cast<int>(rng() % 3), 5 + static_cast<int>(rng() % 2));
  else base = shapes::grid(4 + static_cast<int>(rng() % 3), 4 + static_cast<int>(rng() % 3), 0.3);
  return base.with_positions(jitter(base.positions(), 0.02, seed + 17));
}

// Relabels vertices by `perm` (new index i holds old vertex perm[i]) and
// shuffles face order and the corner rotation inside each face.
struct Permuted {
  Mesh mesh;
  std::vector<std::size_t> vertex_perm;
};

inline Permuted permute(const Mesh& mesh, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto n = mesh.num_vertices();
  std::vector<std::size_t> perm(n), inverse(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < n; ++i) inverse[perm[i]] = i;
  Positions p(static_cast<Eigen::Index>(n), 3);
  for (std::size_t i = 0; i < n; ++i) p.row(static_cast<Eigen::Index>(i)) = mesh.positions().row(static_cast<Eigen::Index>(perm[i]));
  std::vector<std::size_t> face_order(mesh.num_faces());
  std::iota(face_order.begin(), face_order.end(), 0);
  std::shuffle(face_order.begin(), face_order.end(), rng);
  Faces f(static_cast<Eigen::Index>(mesh.num_faces()), 3);
  for (std::size_t s = 0; s < face_order.size(); ++s) {
    const auto old = mesh.face(face_order[s]);
    const auto r = rng() % 3;
    for (int c = 0; c < 3; ++c)
      f(static_cast<Eigen::Index>(s), c) = static_cast<std::int32_t>(inverse[old[(static_cast<std::size_t>(c) + r) % 3]]);
  }
  return {Mesh(std::move(p), std::move(f)), perm};
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

// Random values bounded away from zero in magnitude (kinks of relu/abs).
inline Tensor<double> random_away_from_zero(Shape shape, std::mt19937_64& rng, double margin = 0.05) {
  std::uniform_real_distribution<double> u(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

// Builds a scalar on a fresh tape from the given inputs.
using ScalarFn = std::function<ad::Var<double>(ad::Tape<double>&, const std::vector<ad::Var<double>>&)>;

struct GradCheck {
  double rel_error = 0.0;
  double analytic_norm = 0.0;
};

// Central differences over every input entry, compared norm-wise against the
// tape's gradient.
inline GradCheck check_gradient(const ScalarFn& f, const std::vector<Tensor<double>>& inputs, double h = 1e-6) {
  std::vector<Tensor<double>> analytic;
  {
    ad::Tape<double> tape;
    std::vector<ad::Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    tape.backward(f(tape, vars));
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
  }
  auto eval = [&](const std::vector<Tensor<double>>& in) {
    ad::Tape<double> tape;
    std::vector<ad::Var<double>> vars;
    for (const auto& t : in) vars.push_back(tape.constant(t));
    return f(tape, vars).value().item();
  };
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  std::vector<Tensor<double>> work = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x = inputs[k][i];
      work[k][i] = x + h;
      const double up = eval(work);
      work[k][i] = x - h;
      const double down = eval(work);
      work[k][i] = x;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
  }
  const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
  return {std::sqrt(diff2) / scale, std::sqrt(a2)};
}

// sum(x * weights): a scalar that exercises every output entry.
inline ad::Var<double> weighted_sum(ad::Var<double> x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = random_tensor<double>(x.shape(), rng);
  return ad::sum_all(ad::mul(x, x.tape->constant(std::move(w))));
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dmdnet_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
