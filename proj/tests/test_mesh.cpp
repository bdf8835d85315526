#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace testing_support;

namespace {

Mesh make(std::vector<std::array<double, 3>> pts, std::vector<std::array<int, 3>> tris) {
  Positions p(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) p.row(static_cast<Eigen::Index>(i)) << pts[i][0], pts[i][1], pts[i][2];
  Faces f(static_cast<Eigen::Index>(tris.size()), 3);
  for (std::size_t i = 0; i < tris.size(); ++i) f.row(static_cast<Eigen::Index>(i)) << tris[i][0], tris[i][1], tris[i][2];
  return Mesh(std::move(p), std::move(f));
}

Eigen::MatrixXd dense_vertex_adjacency(const Mesh& m) {
  const auto n = static_cast<Eigen::Index>(m.num_vertices());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t s = 0; s < m.num_faces(); ++s) {
    const auto f = m.face(s);
    for (int c = 0; c < 3; ++c) {
      const auto u = static_cast<Eigen::Index>(f[c]), v = static_cast<Eigen::Index>(f[(c + 1) % 3]);
      a(u, v) = a(v, u) = 1.0;
    }
  }
  return a;
}

// Two faces are adjacent when they have two vertices in common.
Eigen::MatrixXd dense_face_adjacency(const Mesh& m) {
  const auto f = static_cast<Eigen::Index>(m.num_faces());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(f, f);
  for (Eigen::Index i = 0; i < f; ++i)
    for (Eigen::Index j = 0; j < f; ++j) {
      if (i == j) continue;
      const auto fi = m.face(static_cast<std::size_t>(i)), fj = m.face(static_cast<std::size_t>(j));
      int shared = 0;
      for (auto x : fi)
        for (auto y : fj) shared += x == y;
      if (shared >= 2) a(i, j) = 1.0;
    }
  return a;
}

}  // namespace

TEST(Mesh, RejectsTooFewVertices) {
  EXPECT_THROW(make({{0, 0, 0}, {1, 0, 0}}, {{0, 1, 0}}), MeshError);
}

TEST(Mesh, RejectsNoFaces) {
  Positions p = Positions::Zero(3, 3);
  EXPECT_THROW(Mesh(p, Faces(0, 3)), MeshError);
}

TEST(Mesh, RejectsOutOfRangeIndex) {
  try {
    make({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 3}});
    FAIL();
  } catch (const MeshError& e) {
    EXPECT_NE(std::string(e.what()).find("vertex 3"), std::string::npos);
  }
  EXPECT_THROW(make({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, -1, 2}}), MeshError);
}

TEST(Mesh, RejectsRepeatedVertexInFace) {
  EXPECT_THROW(make({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 1}}), MeshError);
}

TEST(Mesh, WithPositionsChecksRowCount) {
  const Mesh m = shapes::triangle();
  EXPECT_THROW(m.with_positions(Positions::Zero(4, 3)), MeshError);
  const Mesh moved = m.with_positions(m.positions() * 2.0);
  EXPECT_EQ(moved.faces(), m.faces());
}

TEST(Mesh, EulerCharacteristic) {
  for (int s = 0; s <= 3; ++s) {
    const Mesh m = shapes::icosphere(s);
    EXPECT_EQ(euler_characteristic(m), 2);
    EXPECT_EQ(unique_edges(m).size() * 2, m.num_faces() * 3);
  }
  EXPECT_EQ(euler_characteristic(shapes::torus(12, 8)), 0);
  EXPECT_EQ(euler_characteristic(shapes::grid(5, 4)), 1);
  EXPECT_EQ(euler_characteristic(shapes::cube()), 2);
}

TEST(Mesh, UniqueEdgesAreSortedAndDistinct) {
  const Mesh m = random_mesh(3);
  const auto e = unique_edges(m);
  std::set<Edge> seen;
  for (const auto& x : e) {
    EXPECT_LT(x[0], x[1]);
    EXPECT_TRUE(seen.insert(x).second);
  }
  EXPECT_TRUE(std::is_sorted(e.begin(), e.end()));
}

TEST(Mesh, BoundaryVertices) {
  const auto grid = shapes::grid(4, 3);
  const auto b = boundary_vertices(grid);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 4; ++i) EXPECT_EQ(b[static_cast<std::size_t>(j * 4 + i)], i == 0 || i == 3 || j == 0 || j == 2);
  for (bool x : boundary_vertices(shapes::icosphere(2))) EXPECT_FALSE(x);
}

TEST(Mesh, VertexAdjacencyMatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Mesh m = permute(random_mesh(seed), seed).mesh;
    EXPECT_TRUE(build_vertex_adjacency(m).to_dense().isApprox(dense_vertex_adjacency(m)));
  }
}

TEST(Mesh, FaceAdjacencyMatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Mesh m = permute(random_mesh(seed), seed).mesh;
    EXPECT_EQ(build_face_adjacency(m).to_dense(), dense_face_adjacency(m));
  }
}

TEST(Mesh, FaceAdjacencyNonManifoldEdge) {
  // Three faces on edge (0, 1): every pair is adjacent.
  const Mesh m = make({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}}, {{0, 1, 2}, {1, 0, 3}, {0, 1, 4}});
  Eigen::MatrixXd expect = Eigen::MatrixXd::Ones(3, 3) - Eigen::MatrixXd::Identity(3, 3);
  EXPECT_EQ(build_face_adjacency(m).to_dense(), expect);
}

TEST(Mesh, NormalizeAdjacencyMatchesDense) {
  const Mesh m = random_mesh(5);
  const Eigen::MatrixXd a = dense_vertex_adjacency(m) + Eigen::MatrixXd::Identity(m.num_vertices(), m.num_vertices());
  const Eigen::VectorXd d = a.rowwise().sum().array().rsqrt();
  const Eigen::MatrixXd expect = d.asDiagonal() * a * d.asDiagonal();
  EXPECT_LT((normalize_adjacency(build_vertex_adjacency(m)).to_dense() - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Mesh, NormalizeAdjacencyRejectsNonSquare) {
  EXPECT_THROW(normalize_adjacency(SparseMatrix(2, 3)), ShapeError);
}

TEST(Mesh, OperatorsRowSums) {
  const Mesh m = random_mesh(7);
  const auto ops = MeshOperators::build(m);
  for (double s : ops.dual_to_primal.row_sums()) EXPECT_NEAR(s, 1.0, 1e-15);
  for (double s : ops.primal_to_dual.row_sums()) EXPECT_NEAR(s, 1.0, 1e-15);
  EXPECT_TRUE(ops.isolated_vertices.empty());
  EXPECT_EQ(ops.face_corners.size(), m.num_faces() * 3);
}

TEST(Mesh, IsolatedVertexIsReported) {
  const Mesh m = make({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}}, {{0, 1, 2}});
  const auto ops = MeshOperators::build(m);
  ASSERT_EQ(ops.isolated_vertices.size(), 1u);
  EXPECT_EQ(ops.isolated_vertices[0], 3u);
  EXPECT_EQ(ops.dual_to_primal.row_sums()[3], 0.0);
}

TEST(Mesh, CanonicalizeUnitCube) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Mesh m = random_mesh(seed);
    m = m.with_positions((m.positions() * (0.1 + static_cast<double>(seed))).rowwise() + Eigen::RowVector3d(3, -2, 7));
    const auto [c, tf] = canonicalize(m);
    const Vec3 lo = c.positions().colwise().minCoeff().transpose(), hi = c.positions().colwise().maxCoeff().transpose();
    EXPECT_NEAR((hi - lo).maxCoeff(), 1.0, 1e-12);
    EXPECT_LT((lo + hi).norm(), 1e-12);
    EXPECT_LT((tf.invert(c.positions()) - m.positions()).cwiseAbs().maxCoeff(), 1e-12);
  }
  const Mesh flat = make({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}}, {{0, 1, 2}});
  EXPECT_THROW(canonicalize(flat), DegenerateGeometry);
}

TEST(Sparse, MultiplyMatchesDense) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<SparseMatrix::Triplet> t;
  for (int i = 0; i < 40; ++i) t.push_back({rng() % 7, rng() % 5, u(rng)});
  const auto s = SparseMatrix::from_triplets(7, 5, t);
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(7, 5);
  for (const auto& x : t) dense(static_cast<Eigen::Index>(x.row), static_cast<Eigen::Index>(x.col)) += x.value;
  EXPECT_LT((s.to_dense() - dense).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((s.transpose().to_dense() - dense.transpose()).cwiseAbs().maxCoeff(), 1e-15);

  const std::size_t k = 3;
  std::vector<double> x(5 * k), y(7 * k);
  for (auto& v : x) v = u(rng);
  s.multiply<double>(x, k, y);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(x.data(), 5, 3);
  const Eigen::MatrixXd expect = dense * xm;
  for (Eigen::Index r = 0; r < 7; ++r)
    for (Eigen::Index c = 0; c < 3; ++c) EXPECT_NEAR(y[static_cast<std::size_t>(r * 3 + c)], expect(r, c), 1e-14);
  EXPECT_THROW(SparseMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), ShapeError);
}

TEST(Nearest, GridMatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 30; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng() % 150), m = static_cast<Eigen::Index>(1 + rng() % 150);
    Positions ref(n, 3), q(m, 3);
    for (Eigen::Index i = 0; i < ref.size(); ++i) ref.data()[i] = u(rng);
    // Queries partly outside the reference box.
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = 2.0 * u(rng);
    EXPECT_EQ(nearest_grid(q, ref), nearest_brute_force(q, ref));
  }
}

TEST(Nearest, TiesResolveToLowestIndex) {
  Positions ref(4, 3);
  ref << 1, 0, 0, -1, 0, 0, 0, 1, 0, 1, 0, 0;
  Positions q = Positions::Zero(1, 3);
  EXPECT_EQ(nearest_brute_force(q, ref)[0], 0u);
  EXPECT_EQ(nearest_grid(q, ref)[0], 0u);
  Positions dup(3, 3);
  dup << 0, 0, 0, 0, 0, 0, 0, 0, 0;
  EXPECT_EQ(nearest_grid(q, dup)[0], 0u);
}

TEST(Mesh, AdjacencyHandExamples) {
  const Eigen::MatrixXd off3 = Eigen::MatrixXd::Ones(3, 3) - Eigen::MatrixXd::Identity(3, 3);
  const Eigen::MatrixXd off4 = Eigen::MatrixXd::Ones(4, 4) - Eigen::MatrixXd::Identity(4, 4);
  EXPECT_EQ(build_vertex_adjacency(shapes::triangle()).to_dense(), off3);
  EXPECT_EQ(build_face_adjacency(shapes::triangle()).to_dense(), Eigen::MatrixXd::Zero(1, 1));
  EXPECT_EQ(build_vertex_face_adjacency(shapes::triangle()).to_dense(), Eigen::MatrixXd::Ones(3, 1));

  const Mesh tet = shapes::tetrahedron();
  EXPECT_EQ(build_vertex_adjacency(tet).to_dense(), off4);
  EXPECT_EQ(build_face_adjacency(tet).to_dense(), off4);
  const auto vf = build_vertex_face_adjacency(tet);
  for (double s : vf.row_sums()) EXPECT_EQ(s, 3.0);
  for (double s : vf.col_sums()) EXPECT_EQ(s, 3.0);
  EXPECT_EQ(normalize_adjacency(build_vertex_adjacency(tet)).to_dense(), Eigen::MatrixXd::Constant(4, 4, 0.25));

  const Mesh two = make({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}}, {{0, 1, 2}, {1, 2, 3}});
  const auto edges = unique_edges(two);
  EXPECT_EQ(edges, (std::vector<Edge>{{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 3}}));
  Eigen::MatrixXd pair(2, 2);
  pair << 0, 1, 1, 0;
  EXPECT_EQ(build_face_adjacency(two).to_dense(), pair);
  EXPECT_EQ(build_vertex_face_adjacency(two).row_sums(), (std::vector<double>{1, 2, 2, 1}));

  EXPECT_EQ(normalize_adjacency(SparseMatrix(1, 1)).to_dense(), Eigen::MatrixXd::Ones(1, 1));
  const auto edge = SparseMatrix::from_triplets(2, 2, {{0, 1, 1.0}, {1, 0, 1.0}});
  EXPECT_LT((normalize_adjacency(edge).to_dense() - Eigen::MatrixXd::Constant(2, 2, 0.5)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Mesh, NormalizedSpectralRadiusAtMostOne) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Mesh m = random_mesh(seed);
    const Eigen::MatrixXd a = normalize_adjacency(build_vertex_adjacency(m)).to_dense();
    EXPECT_LT((a - a.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    // Power iteration on A^2 bounds |lambda|^2.
    Eigen::VectorXd x = Eigen::VectorXd::Ones(a.rows()).normalized();
    double rho2 = 0;
    for (int it = 0; it < 500; ++it) {
      Eigen::VectorXd y = a * (a * x);
      rho2 = y.norm();
      x = y / rho2;
    }
    EXPECT_LE(std::sqrt(rho2), 1.0 + 1e-9);
  }
}

TEST(Mesh, AdjacencyIsPermutationEquivariant) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Mesh m = random_mesh(seed);
    const auto p = permute(m, seed + 40);
    const Eigen::MatrixXd a = build_vertex_adjacency(m).to_dense();
    const Eigen::MatrixXd b = build_vertex_adjacency(p.mesh).to_dense();
    for (std::size_t i = 0; i < p.vertex_perm.size(); ++i)
      for (std::size_t j = 0; j < p.vertex_perm.size(); ++j)
        ASSERT_EQ(b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)),
                  a(static_cast<Eigen::Index>(p.vertex_perm[i]), static_cast<Eigen::Index>(p.vertex_perm[j])));
  }
}

TEST(Mesh, CanonicalizeHandExamples) {
  const auto [c, tf] = canonicalize(shapes::cube(2.0));
  EXPECT_EQ(tf.scale, 0.5);
  EXPECT_EQ(tf.translation, Vec3(-1, -1, -1));
  EXPECT_EQ(c.positions().minCoeff(), -0.5);
  EXPECT_EQ(c.positions().maxCoeff(), 0.5);

  const auto [same, id] = canonicalize(c);
  EXPECT_EQ(id.scale, 1.0);
  EXPECT_EQ(id.translation, Vec3::Zero());
  EXPECT_EQ(same.positions(), c.positions());

  const Mesh flat = make({{0, 0, 5}, {1, 0, 5}, {0, 1, 5}}, {{0, 1, 2}});
  const auto [fc, ftf] = canonicalize(flat);
  EXPECT_TRUE(fc.positions().col(2).isZero());
  EXPECT_EQ(fc.positions().col(0).minCoeff(), -0.5);
  EXPECT_EQ(fc.positions().col(1).maxCoeff(), 0.5);
}
