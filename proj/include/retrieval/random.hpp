#pragma once

// Random instance generators (Dirichlet(1) distributions and column-wise
// Dirichlet stochastic matrices).

#include <cstdint>
#include <random>
#include <vector>

#include "retrieval/core.hpp"

namespace retrieval {

using Rng = std::mt19937_64;

/// Uniform draw from the open simplex, entries kept above the positivity floor.
inline Vector dirichlet_sample(std::size_t dim, Rng& rng) {
  std::exponential_distribution<double> expo(1.0);
  Vector w(static_cast<Eigen::Index>(dim));
  for (auto& x : w) x = expo(rng);
  w /= w.sum();
  // Draws below the floor have probability ~1e-12 per entry.
  for (auto& x : w) x = std::max(x, 2.0 * kPositivityFloor);
  return w / w.sum();
}

inline ProbabilityVector random_probability_vector(std::size_t dim, Rng& rng) {
  return ProbabilityVector(dirichlet_sample(dim, rng));
}

inline StochasticMatrix random_stochastic_matrix(std::size_t dim, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(dim);
  Matrix m(n, n);
  for (Eigen::Index j = 0; j < n; ++j) m.col(j) = dirichlet_sample(dim, rng);
  return StochasticMatrix(m);
}

/// Permutation matrix P with P e_j = e_{perm[j]}.
inline StochasticMatrix permutation_matrix(const std::vector<int>& perm) {
  const auto n = static_cast<Eigen::Index>(perm.size());
  Matrix p = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) p(perm[static_cast<std::size_t>(j)], j) = 1.0;
  return StochasticMatrix(p);
}

}  // namespace retrieval
