#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "retrieval/involution.hpp"

using namespace retrieval;

namespace {

// X_{i,j} entry by entry: sum_{a} V_j(a, r) V_i(a, c) / (image_a sqrt(pi_r pi_c)).
Matrix x_by_loops(const Matrix& vi, const Matrix& vj, const Vector& pi, const Vector& image) {
  const auto n = pi.size();
  Matrix x = Matrix::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c)
      for (Eigen::Index a = 0; a < n; ++a) x(r, c) += vj(a, r) * vi(a, c) / (image[a] * std::sqrt(pi[r] * pi[c]));
  return x;
}

Matrix y_by_loops(const Matrix& vi, const Matrix& vj, const Vector& pi, const Vector& image) {
  const auto n = pi.size();
  Matrix y = Matrix::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c)
      for (Eigen::Index a = 0; a < n; ++a) y(r, c) += vi(r, a) * vj(c, a) / (pi[a] * std::sqrt(image[r] * image[c]));
  return y;
}

std::size_t off_diagonal(const BoolGrid& g) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) c += (i != j && g[i][j]) ? 1 : 0;
  return c;
}

}  // namespace

TEST(OrderVertices, PrefixLengths) {
  const ProbabilityVector half{0.5, 0.5};
  EXPECT_EQ(order_vertices_permutations_first(enumerate_vertices(half, half)).second, 2u);
  EXPECT_EQ(order_vertices_permutations_first(enumerate_vertices(ProbabilityVector{0.75, 0.25}, half)).second, 0u);
  const auto u3 = ProbabilityVector::uniform(3);
  const auto [p, l] = order_vertices_permutations_first(enumerate_vertices(u3, u3));
  EXPECT_EQ(l, 6u);
  for (std::size_t k = 0; k < l; ++k) {
    const Matrix map = p.vertices()[k] * DiagonalEmbedding(u3).inverse();
    EXPECT_TRUE(is_permutation_matrix(map));
  }
}

TEST(OrderVertices, MixedPolytopeKeepsPermutationsInFront) {
  // pi = (0.2, 0.3, 0.5), image = (0.3, 0.2, 0.5): relabelings of pi exist.
  const ProbabilityVector pi{0.2, 0.3, 0.5}, image{0.3, 0.2, 0.5};
  const auto [p, l] = order_vertices_permutations_first(enumerate_vertices(image, pi));
  ASSERT_GT(l, 0u);
  ASSERT_LT(l, p.vertex_count());
  for (std::size_t k = 0; k < p.vertex_count(); ++k) {
    const Matrix map = p.vertices()[k] * DiagonalEmbedding(pi).inverse();
    EXPECT_EQ(is_permutation_matrix(map, 1e-9), k < l) << k;
  }
}

TEST(ComputeXY, MatchLoopOracles) {
  const ProbabilityVector pi{0.1, 0.6, 0.1, 0.2}, image{0.1, 0.2, 0.3, 0.4};
  const auto p = enumerate_vertices(image, pi);
  for (std::size_t i = 0; i < p.vertex_count(); i += 7) {
    for (std::size_t j = 0; j < p.vertex_count(); j += 5) {
      const auto& vi = p.vertices()[i];
      const auto& vj = p.vertices()[j];
      EXPECT_LE((compute_X(i, j, p, pi, image) - x_by_loops(vi, vj, pi.values(), image.values())).cwiseAbs().maxCoeff(),
                1e-12);
      EXPECT_LE((compute_Y(i, j, p, pi, image) - y_by_loops(vi, vj, pi.values(), image.values())).cwiseAbs().maxCoeff(),
                1e-12);
    }
  }
}

TEST(ComputeXY, DiagonalIsSymmetricPsd) {
  const ProbabilityVector pi{0.1, 0.2, 0.7}, image{0.3, 0.6, 0.1};
  const auto p = enumerate_vertices(image, pi);
  for (std::size_t i = 0; i < p.vertex_count(); ++i) {
    const Matrix x = compute_X(i, i, p, pi, image);
    const Matrix y = compute_Y(i, i, p, pi, image);
    EXPECT_LE((x - x.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((y - y.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE(is_psd(x));
    EXPECT_TRUE(is_psd(y));
  }
}

TEST(ComputeXY, RejectsBadIndicesAndPolytopes) {
  const ProbabilityVector pi{0.1, 0.2, 0.7}, image{0.3, 0.6, 0.1};
  const auto p = enumerate_vertices(image, pi);
  EXPECT_THROW(compute_X(p.vertex_count(), 0, p, pi, image), InvariantError);
  EXPECT_THROW(compute_Y(0, p.vertex_count(), p, pi, image), InvariantError);
  EXPECT_THROW(compute_X(0, 0, p, image, pi), InvariantError);
}

TEST(IsPsd, AsymmetryIsFailure) {
  Matrix m(2, 2);
  m << 1.0, 1e-8, 0.0, 1.0;
  EXPECT_FALSE(is_psd(m));
  m(0, 1) = 1e-10;
  EXPECT_TRUE(is_psd(m));
  m << 1.0, 0.0, 0.0, -1e-9;
  EXPECT_FALSE(is_psd(m));
}

TEST(PsdScan, ThreeStateInstanceIsDiagonalOnly) {
  const auto scan = psd_scan(ProbabilityVector{0.1, 0.2, 0.7}, ProbabilityVector{0.3, 0.6, 0.1});
  EXPECT_EQ(off_diagonal(scan.joint_psd), 0u);
  EXPECT_EQ(off_diagonal(scan.x_psd), 0u);
  EXPECT_EQ(off_diagonal(scan.y_psd), 0u);
  EXPECT_TRUE(scan.identity_only());
  EXPECT_TRUE(scan.observation_compliant());
}

TEST(PsdScan, FourStateInstanceNeedsBothConditions) {
  const auto scan = psd_scan(ProbabilityVector{0.1, 0.6, 0.1, 0.2}, ProbabilityVector{0.1, 0.2, 0.3, 0.4});
  EXPECT_GT(off_diagonal(scan.x_psd), 0u);
  EXPECT_GT(off_diagonal(scan.y_psd), 0u);
  EXPECT_EQ(off_diagonal(scan.joint_psd), 0u);
  EXPECT_TRUE(scan.identity_only());
}

TEST(PsdScan, GridsAgreeWithPairwiseProducts) {
  const ProbabilityVector pi{0.1, 0.6, 0.1, 0.2}, image{0.1, 0.2, 0.3, 0.4};
  const auto p = enumerate_vertices(image, pi);
  const auto scan = psd_scan(p, pi, image);
  for (std::size_t i = 0; i < scan.vertex_count; ++i) {
    for (std::size_t j = 0; j < scan.vertex_count; ++j) {
      EXPECT_EQ(scan.x_psd[i][j], is_psd(compute_X(i, j, p, pi, image)));
      EXPECT_EQ(scan.y_psd[i][j], is_psd(compute_Y(i, j, p, pi, image)));
      EXPECT_EQ(scan.joint_psd[i][j], scan.x_psd[i][j] && scan.y_psd[i][j]);
    }
  }
}

TEST(PsdScan, UniformMarginalsKeepDiagonal) {
  for (std::size_t n : {2u, 3u, 4u}) {
    const auto u = ProbabilityVector::uniform(n);
    const auto scan = psd_scan(u, u);
    for (std::size_t i = 0; i < scan.vertex_count; ++i) EXPECT_TRUE(scan.joint_psd[i][i]);
    EXPECT_EQ(scan.permutation_prefix_length, scan.vertex_count);
    EXPECT_TRUE(scan.observation_compliant());
  }
}

TEST(PsdScan, DiagonalAlwaysJointAndVerdictRelabelingInvariant) {
  Rng rng(90);
  for (int t = 0; t < 15; ++t) {
    const std::size_t n = 3 + t % 2;
    const auto pi = random_probability_vector(n, rng);
    const auto image = random_probability_vector(n, rng);
    const auto scan = psd_scan(pi, image);
    for (std::size_t i = 0; i < scan.vertex_count; ++i) EXPECT_TRUE(scan.joint_psd[i][i]);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    const Matrix p = permutation_matrix(perm).matrix();
    const auto relabeled = psd_scan(ProbabilityVector(p * pi.values()), ProbabilityVector(p * image.values()));
    EXPECT_EQ(relabeled.vertex_count, scan.vertex_count);
    EXPECT_EQ(relabeled.identity_only(), scan.identity_only());
    EXPECT_EQ(off_diagonal(relabeled.joint_psd), off_diagonal(scan.joint_psd));
    EXPECT_EQ(off_diagonal(relabeled.x_psd), off_diagonal(scan.x_psd));
  }
}

TEST(PsdScan, DimensionCap) {
  const auto u = ProbabilityVector::uniform(9);
  EXPECT_THROW(psd_scan(u, u), InvariantError);
}

TEST(Hunter, DeterministicAndReported) {
  const auto a = hunt_counterexamples(3, 25, 500);
  const auto b = hunt_counterexamples(3, 25, 500);
  ASSERT_EQ(a.trials.size(), 25u);
  for (std::size_t t = 0; t < a.trials.size(); ++t) {
    EXPECT_EQ(a.trials[t].seed, 500 + t);
    EXPECT_EQ(a.trials[t].pi.values(), b.trials[t].pi.values());
  }
  EXPECT_EQ(a.counterexample_count(), 0u);
  const auto path = std::filesystem::temp_directory_path() / "retrieval_hunt_report.txt";
  write_hunt_report(a, path);
  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 27u);
  std::filesystem::remove(path);
  EXPECT_THROW(hunt_counterexamples(6, 1, 0), InvariantError);
}
