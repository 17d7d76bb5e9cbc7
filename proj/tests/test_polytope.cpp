#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "retrieval/polytope.hpp"
#include "retrieval/random.hpp"

using namespace retrieval;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

bool contains(const std::vector<Matrix>& list, const Matrix& m, double tol = 1e-12) {
  return std::any_of(list.begin(), list.end(), [&](const Matrix& v) { return (v - m).cwiseAbs().maxCoeff() <= tol; });
}

// Every basic solution: choose 2n-1 cells, solve the row/column system on
// them by least squares, keep exact nonnegative solutions.
std::vector<Matrix> subset_oracle(const Vector& rows, const Vector& cols) {
  const int n = static_cast<int>(rows.size());
  const int cells = n * n, pick = 2 * n - 1;
  std::vector<Matrix> found;
  std::vector<int> chosen(static_cast<std::size_t>(pick));
  std::vector<bool> mask(static_cast<std::size_t>(cells), false);
  std::fill(mask.begin(), mask.begin() + pick, true);
  do {
    int k = 0;
    for (int c = 0; c < cells; ++c)
      if (mask[static_cast<std::size_t>(c)]) chosen[static_cast<std::size_t>(k++)] = c;
    Matrix a = Matrix::Zero(2 * n, pick);
    Vector b(2 * n);
    b << rows, cols;
    for (int t = 0; t < pick; ++t) {
      a(chosen[static_cast<std::size_t>(t)] / n, t) = 1.0;
      a(n + chosen[static_cast<std::size_t>(t)] % n, t) = 1.0;
    }
    Eigen::FullPivLU<Matrix> lu(a);
    if (lu.rank() < pick) continue;
    const Vector x = a.colPivHouseholderQr().solve(b);
    if ((a * x - b).cwiseAbs().maxCoeff() > 1e-12 || x.minCoeff() < -1e-12) continue;
    Matrix v = Matrix::Zero(n, n);
    for (int t = 0; t < pick; ++t) v(chosen[static_cast<std::size_t>(t)] / n, chosen[static_cast<std::size_t>(t)] % n) = std::max(0.0, x[t]);
    if (!contains(found, v, 1e-10)) found.push_back(v);
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return found;
}

}  // namespace

TEST(EnumerateVertices, ScaledBirkhoffTwoStates) {
  const auto p = enumerate_vertices(ProbabilityVector{0.5, 0.5}, ProbabilityVector{0.5, 0.5});
  ASSERT_EQ(p.vertex_count(), 2u);
  EXPECT_TRUE(contains(p.vertices(), 0.5 * Matrix::Identity(2, 2)));
  EXPECT_TRUE(contains(p.vertices(), mat2(0, 0.5, 0.5, 0)));
}

TEST(EnumerateVertices, OneParameterFamilyEndpoints) {
  // [[a, 0.75 - a], [0.5 - a, a - 0.25]] with a in [0.25, 0.5].
  const auto p = enumerate_vertices(ProbabilityVector{0.75, 0.25}, ProbabilityVector{0.5, 0.5});
  ASSERT_EQ(p.vertex_count(), 2u);
  for (double a : {0.25, 0.5}) EXPECT_TRUE(contains(p.vertices(), mat2(a, 0.75 - a, 0.5 - a, a - 0.25)));
}

TEST(EnumerateVertices, UniformGivesFactorialManyScaledPermutations) {
  std::size_t factorial = 1;
  for (std::size_t n = 2; n <= 5; ++n) {
    factorial *= n;
    const auto u = ProbabilityVector::uniform(n);
    const auto p = enumerate_vertices(u, u);
    EXPECT_EQ(p.vertex_count(), factorial) << "n = " << n;
    EXPECT_EQ(p.permutation_prefix_length(), factorial);
    for (const auto& v : p.vertices()) EXPECT_TRUE(is_permutation_matrix(v * static_cast<double>(n), 1e-12));
  }
}

TEST(EnumerateVertices, MatchesSubsetOracle) {
  Rng rng(3);
  for (int n : {2, 3, 4}) {
    for (int t = 0; t < 3; ++t) {
      const auto sigma = random_probability_vector(static_cast<std::size_t>(n), rng);
      const auto pi = random_probability_vector(static_cast<std::size_t>(n), rng);
      const auto p = enumerate_vertices(sigma, pi);
      const auto oracle = subset_oracle(sigma.values(), pi.values());
      EXPECT_EQ(p.vertex_count(), oracle.size()) << "n = " << n;
      for (const auto& v : oracle) EXPECT_TRUE(contains(p.vertices(), v, 1e-10));
    }
  }
}

TEST(EnumerateVertices, MatchesSubsetOracleOnDegenerateMarginals) {
  // Partial sums coincide, so several bases share a vertex.
  const ProbabilityVector sigma{0.2, 0.3, 0.5}, pi{0.5, 0.3, 0.2};
  const auto p = enumerate_vertices(sigma, pi);
  const auto oracle = subset_oracle(sigma.values(), pi.values());
  EXPECT_EQ(p.vertex_count(), oracle.size());
  for (const auto& v : oracle) EXPECT_TRUE(contains(p.vertices(), v, 1e-10));
}

TEST(EnumerateVertices, VerticesAreExtreme) {
  Rng rng(9);
  const auto p = enumerate_vertices(random_probability_vector(3, rng), random_probability_vector(3, rng));
  const auto& vs = p.vertices();
  for (std::size_t k = 0; k < vs.size(); ++k)
    for (std::size_t a = 0; a < vs.size(); ++a)
      for (std::size_t b = a + 1; b < vs.size(); ++b) {
        if (a == k || b == k) continue;
        EXPECT_GT((0.5 * (vs[a] + vs[b]) - vs[k]).cwiseAbs().maxCoeff(), 1e-10);
      }
}

TEST(EnumerateVertices, CanonicalOrder) {
  Rng rng(21);
  const auto pi = random_probability_vector(4, rng);
  const auto p = enumerate_vertices(pi, pi);
  const std::size_t l = p.permutation_prefix_length();
  EXPECT_GE(l, 1u);  // the scaled identity is always a vertex
  for (std::size_t k = l; k < p.vertex_count(); ++k) EXPECT_FALSE(detail::is_permutation_type(p.vertices()[k]));
  auto in_order = [&](std::size_t from, std::size_t to) {
    for (std::size_t k = from + 1; k < to; ++k)
      EXPECT_LT(detail::lex_key(p.vertices()[k - 1]), detail::lex_key(p.vertices()[k]));
  };
  in_order(0, l);
  in_order(l, p.vertex_count());
}

TEST(EnumerateVertices, Deterministic) {
  Rng rng(4);
  const auto s = random_probability_vector(4, rng), q = random_probability_vector(4, rng);
  const auto a = enumerate_vertices(s, q), b = enumerate_vertices(s, q);
  ASSERT_EQ(a.vertex_count(), b.vertex_count());
  for (std::size_t k = 0; k < a.vertex_count(); ++k) EXPECT_EQ(a.vertices()[k], b.vertices()[k]);
}

TEST(EnumerateVertices, DimensionCapAndMismatch) {
  EXPECT_THROW(enumerate_vertices(ProbabilityVector::uniform(9), ProbabilityVector::uniform(9)), InvariantError);
  EXPECT_THROW(enumerate_vertices(ProbabilityVector::uniform(2), ProbabilityVector::uniform(3)), InvariantError);
}

TEST(TransportationPolytope, RejectsInvalidVertexLists) {
  const ProbabilityVector h{0.5, 0.5};
  const Matrix a = 0.5 * Matrix::Identity(2, 2), b = mat2(0, 0.5, 0.5, 0);
  EXPECT_NO_THROW(TransportationPolytope(h, h, {a, b}));
  EXPECT_THROW(TransportationPolytope(h, h, {a, a}), InvariantError);
  EXPECT_THROW(TransportationPolytope(h, h, {0.5 * (a + b)}), InvariantError);  // cyclic support
  EXPECT_THROW(TransportationPolytope(h, h, {mat2(0.5, 0.5, 0, 0)}), InvariantError);
}

TEST(VertexTransposeDual, TransposesInOrder) {
  const auto p = enumerate_vertices(ProbabilityVector{0.75, 0.25}, ProbabilityVector{0.5, 0.5});
  const auto d = vertex_transpose_dual(p);
  EXPECT_EQ(d.sigma().values(), p.pi().values());
  EXPECT_EQ(d.pi().values(), p.sigma().values());
  for (std::size_t k = 0; k < p.vertex_count(); ++k) EXPECT_EQ(d.vertices()[k], p.vertices()[k].transpose());
  EXPECT_TRUE(contains(d.vertices(), mat2(0.25, 0.25, 0.5, 0)));
  const auto back = vertex_transpose_dual(d);
  for (std::size_t k = 0; k < p.vertex_count(); ++k) EXPECT_EQ(back.vertices()[k], p.vertices()[k]);
}

TEST(MapFromCoefficients, Examples) {
  const ProbabilityVector h{0.5, 0.5};
  const auto p = enumerate_vertices(h, h);
  const auto single = map_from_coefficients(CoefficientVector::indicator(2, 1), p);
  EXPECT_LE((single.matrix() - p.vertices()[1] * 2.0).cwiseAbs().maxCoeff(), 1e-15);
  const auto mixing = map_from_coefficients(CoefficientVector(Vector::Constant(2, 0.5)), p);
  EXPECT_LE((mixing.matrix() - Matrix::Constant(2, 2, 0.5)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(map_from_coefficients(CoefficientVector::indicator(3, 0), p), InvariantError);
}

TEST(MapFromCoefficients, FixedTransitionForRandomCoefficients) {
  Rng rng(8);
  for (int t = 0; t < 10; ++t) {
    const auto sigma = random_probability_vector(4, rng), pi = random_probability_vector(4, rng);
    const auto p = enumerate_vertices(sigma, pi);
    const auto psi = map_from_coefficients(CoefficientVector(dirichlet_sample(p.vertex_count(), rng)), p);
    EXPECT_TRUE(is_left_stochastic(psi.matrix(), 1e-12));
    EXPECT_LE((psi.matrix() * pi.values() - sigma.values()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(CoefficientsFromMap, RecoversVertexIndicator) {
  const auto p = enumerate_vertices(ProbabilityVector{0.75, 0.25}, ProbabilityVector{0.5, 0.5});
  const Matrix jinv = p.pi().values().cwiseInverse().asDiagonal();
  for (std::size_t k = 0; k < 2; ++k) {
    const auto l = coefficients_from_map(StochasticMatrix(p.vertices()[k] * jinv), p);
    EXPECT_NEAR(l[k], 1.0, 1e-12);
  }
}

TEST(CoefficientsFromMap, RoundTrip) {
  Rng rng(13);
  for (int n : {2, 3, 4, 5}) {
    const auto sigma = random_probability_vector(static_cast<std::size_t>(n), rng);
    const auto pi = random_probability_vector(static_cast<std::size_t>(n), rng);
    const auto p = enumerate_vertices(sigma, pi);
    for (int t = 0; t < 3; ++t) {
      const auto psi = map_from_coefficients(CoefficientVector(dirichlet_sample(p.vertex_count(), rng)), p);
      const auto back = map_from_coefficients(coefficients_from_map(psi, p), p);
      EXPECT_LE((back.matrix() - psi.matrix()).cwiseAbs().maxCoeff(), 1e-9) << "n = " << n;
    }
  }
}

TEST(CoefficientsFromMap, RejectsWrongTransition) {
  const auto p = enumerate_vertices(ProbabilityVector{0.75, 0.25}, ProbabilityVector{0.5, 0.5});
  EXPECT_THROW(coefficients_from_map(StochasticMatrix::identity(2), p), InvariantError);
}

TEST(CoefficientVector, Invariants) {
  EXPECT_THROW(CoefficientVector(Vector::Constant(2, 0.4)), InvariantError);
  Vector v(2);
  v << 1.1, -0.1;
  EXPECT_THROW(CoefficientVector{v}, InvariantError);
}
