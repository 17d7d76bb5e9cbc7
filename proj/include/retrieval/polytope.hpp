#pragma once

// The transportation polytope U(sigma, pi): nonnegative square matrices whose
// columns sum to pi and whose rows sum to sigma. Maps with the fixed
// transition pi -> sigma are exactly L J_pi^{-1} for L in U(sigma, pi).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <set>
#include <unordered_set>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "retrieval/core.hpp"

namespace retrieval {

inline constexpr std::size_t kMaxPolytopeDim = 8;
/// Entrywise distance under which two vertices are the same vertex.
inline constexpr double kDedupeTol = 1e-10;
/// Residual allowed when decomposing a map into vertex coefficients.
inline constexpr double kFitTol = 1e-8;

/// Convex weights over the vertex list of a polytope.
class CoefficientVector {
 public:
  explicit CoefficientVector(Vector lambda) : l_(std::move(lambda)) {
    if (l_.size() == 0) throw InvariantError("coefficient vector: empty");
    for (Eigen::Index k = 0; k < l_.size(); ++k) {
      if (!std::isfinite(l_[k]) || l_[k] < -kNormTol) {
        std::ostringstream os;
        os << "coefficient vector: entry " << k << " = " << l_[k] << " is negative";
        throw InvariantError(os.str());
      }
      l_[k] = std::max(l_[k], 0.0);
    }
    if (std::abs(l_.sum() - 1.0) > kNormTol) {
      std::ostringstream os;
      os.precision(17);
      os << "coefficient vector: entries sum to " << l_.sum() << ", not 1";
      throw InvariantError(os.str());
    }
  }

  static CoefficientVector indicator(std::size_t size, std::size_t k) {
    Vector l = Vector::Zero(static_cast<Eigen::Index>(size));
    l[static_cast<Eigen::Index>(k)] = 1.0;
    return CoefficientVector(l);
  }

  const Vector& values() const noexcept { return l_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(l_.size()); }
  double operator[](std::size_t k) const { return l_[static_cast<Eigen::Index>(k)]; }

 private:
  Vector l_;
};

namespace detail {

// Support of a vertex as a bipartite graph (rows 0..n-1, columns n..2n-1) is a
// forest iff union-find never closes a cycle.
inline bool support_is_forest(const Matrix& v, double tol) {
  const auto n = v.rows();
  std::vector<Eigen::Index> parent(static_cast<std::size_t>(2 * n));
  std::iota(parent.begin(), parent.end(), Eigen::Index{0});
  auto find = [&](Eigen::Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      auto& p = parent[static_cast<std::size_t>(x)];
      p = parent[static_cast<std::size_t>(p)];
      x = p;
    }
    return x;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      if (v(i, j) <= tol) continue;
      const auto a = find(i), b = find(n + j);
      if (a == b) return false;
      parent[static_cast<std::size_t>(a)] = b;
    }
  }
  return true;
}

// Each column carries a single nonzero, so V J_pi^{-1} is a permutation.
inline bool is_permutation_type(const Matrix& v, double tol = kDedupeTol) {
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    if ((v.col(j).array() > tol).count() != 1) return false;
  }
  return true;
}

inline std::vector<std::int64_t> lex_key(const Matrix& v) {
  std::vector<std::int64_t> key;
  key.reserve(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) key.push_back(std::llround(v(i, j) * 1e12));
  return key;
}

// Permutation-type vertices first, then ascending lexicographic order of the
// row-major flattening.
inline void canonical_sort(std::vector<Matrix>& vertices) {
  std::vector<std::pair<std::pair<int, std::vector<std::int64_t>>, std::size_t>> keyed;
  keyed.reserve(vertices.size());
  for (std::size_t k = 0; k < vertices.size(); ++k)
    keyed.push_back({{is_permutation_type(vertices[k]) ? 0 : 1, lex_key(vertices[k])}, k});
  std::sort(keyed.begin(), keyed.end());
  std::vector<Matrix> sorted;
  sorted.reserve(vertices.size());
  for (const auto& entry : keyed) sorted.push_back(std::move(vertices[entry.second]));
  vertices = std::move(sorted);
}

// Vertices are enumerated as basic feasible solutions. Row sums get +eps and
// the last column +n*eps (symbolic eps), which makes the problem
// nondegenerate: every feasible basis is a spanning tree of K_{n,n} with
// strictly positive flow and adjacent bases differ by one pivot. A BFS over
// that pivot graph visits every perturbed basis; solving the unperturbed sums
// on each basis tree and deduplicating yields every vertex of U(sigma, pi).
class VertexEnumerator {
 public:
  VertexEnumerator(const Vector& row_sums, const Vector& col_sums)
      : n_(static_cast<int>(row_sums.size())), rows_(row_sums), cols_(col_sums) {}

  std::vector<Matrix> run() {
    std::vector<Matrix> out;
    std::unordered_set<std::uint64_t> visited;
    std::set<std::vector<std::int64_t>> seen;
    std::deque<std::uint64_t> queue;
    const std::uint64_t start = northwest_corner();
    visited.insert(start);
    queue.push_back(start);
    while (!queue.empty()) {
      const std::uint64_t tree = queue.front();
      queue.pop_front();
      const auto flow = solve(tree);
      Matrix v = Matrix::Zero(n_, n_);
      for (int e = 0; e < n_ * n_; ++e)
        if (tree >> e & 1u) v(e / n_, e % n_) = std::max(flow[static_cast<std::size_t>(e)].value, 0.0);
      std::vector<std::int64_t> key(static_cast<std::size_t>(n_ * n_));
      for (int e = 0; e < n_ * n_; ++e) key[static_cast<std::size_t>(e)] = std::llround(v(e / n_, e % n_) * 1e11);
      if (seen.insert(std::move(key)).second) out.push_back(std::move(v));
      for (int e = 0; e < n_ * n_; ++e) {
        if (tree >> e & 1u) continue;
        const std::uint64_t next = pivot(tree, flow, e);
        if (visited.insert(next).second) queue.push_back(next);
      }
    }
    return out;
  }

 private:
  // value + slope * eps, ordered lexicographically.
  struct Perturbed {
    double value = 0.0;
    double slope = 0.0;
    Perturbed& operator-=(const Perturbed& o) {
      value -= o.value;
      slope -= o.slope;
      return *this;
    }
  };
  static constexpr double kZero = 1e-12;
  static bool less(const Perturbed& a, const Perturbed& b) {
    if (std::abs(a.value - b.value) > kZero) return a.value < b.value;
    return a.slope < b.slope;
  }

  Perturbed row_supply(int i) const { return {rows_[i], 1.0}; }
  Perturbed col_demand(int j) const { return {cols_[j], j == n_ - 1 ? static_cast<double>(n_) : 0.0}; }

  std::uint64_t northwest_corner() const {
    std::vector<Perturbed> r(static_cast<std::size_t>(n_)), c(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) r[static_cast<std::size_t>(i)] = row_supply(i);
    for (int j = 0; j < n_; ++j) c[static_cast<std::size_t>(j)] = col_demand(j);
    std::uint64_t tree = 0;
    int i = 0, j = 0;
    while (i < n_ && j < n_) {
      tree |= std::uint64_t{1} << (i * n_ + j);
      auto& ri = r[static_cast<std::size_t>(i)];
      auto& cj = c[static_cast<std::size_t>(j)];
      if (less(ri, cj)) {
        cj -= ri;
        ++i;
      } else {
        ri -= cj;
        ++j;
      }
    }
    return tree;
  }

  // Flow on the tree edges, found by peeling leaves.
  std::vector<Perturbed> solve(std::uint64_t tree) const {
    const int nodes = 2 * n_;
    std::vector<Perturbed> residual(static_cast<std::size_t>(nodes));
    for (int i = 0; i < n_; ++i) residual[static_cast<std::size_t>(i)] = row_supply(i);
    for (int j = 0; j < n_; ++j) residual[static_cast<std::size_t>(n_ + j)] = col_demand(j);
    std::vector<int> degree(static_cast<std::size_t>(nodes), 0);
    for (int e = 0; e < n_ * n_; ++e) {
      if (!(tree >> e & 1u)) continue;
      ++degree[static_cast<std::size_t>(e / n_)];
      ++degree[static_cast<std::size_t>(n_ + e % n_)];
    }
    std::vector<Perturbed> flow(static_cast<std::size_t>(n_ * n_));
    std::uint64_t open = tree;
    std::vector<int> leaves;
    for (int v = 0; v < nodes; ++v)
      if (degree[static_cast<std::size_t>(v)] == 1) leaves.push_back(v);
    while (!leaves.empty()) {
      const int leaf = leaves.back();
      leaves.pop_back();
      if (degree[static_cast<std::size_t>(leaf)] != 1) continue;
      int edge = -1;
      for (int k = 0; k < n_ && edge < 0; ++k) {
        const int e = leaf < n_ ? leaf * n_ + k : k * n_ + (leaf - n_);
        if (open >> e & 1u) edge = e;
      }
      const int other = leaf < n_ ? n_ + edge % n_ : edge / n_;
      const Perturbed amount = residual[static_cast<std::size_t>(leaf)];
      flow[static_cast<std::size_t>(edge)] = amount;
      residual[static_cast<std::size_t>(other)] -= amount;
      open &= ~(std::uint64_t{1} << edge);
      --degree[static_cast<std::size_t>(leaf)];
      if (--degree[static_cast<std::size_t>(other)] == 1) leaves.push_back(other);
    }
    return flow;
  }

  // Enter edge e, leave the lexicographically smallest decreasing edge on the cycle.
  std::uint64_t pivot(std::uint64_t tree, const std::vector<Perturbed>& flow, int entering) const {
    const int nodes = 2 * n_;
    const int row = entering / n_, col = n_ + entering % n_;
    // Path in the tree from col back to row.
    std::vector<int> parent_edge(static_cast<std::size_t>(nodes), -1), parent(static_cast<std::size_t>(nodes), -1);
    std::vector<int> stack{col};
    parent[static_cast<std::size_t>(col)] = col;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      if (v == row) break;
      for (int k = 0; k < n_; ++k) {
        const int e = v < n_ ? v * n_ + k : k * n_ + (v - n_);
        const int w = v < n_ ? n_ + k : k;
        if (!(tree >> e & 1u) || parent[static_cast<std::size_t>(w)] >= 0) continue;
        parent[static_cast<std::size_t>(w)] = v;
        parent_edge[static_cast<std::size_t>(w)] = e;
        stack.push_back(w);
      }
    }
    // Walking from row back to col, edges alternate -, +, -, ... starting
    // with the one adjacent to the entering edge at row.
    int leaving = -1;
    bool decreasing = true;
    for (int v = row; v != col; v = parent[static_cast<std::size_t>(v)]) {
      const int e = parent_edge[static_cast<std::size_t>(v)];
      if (decreasing && (leaving < 0 || less(flow[static_cast<std::size_t>(e)], flow[static_cast<std::size_t>(leaving)])))
        leaving = e;
      decreasing = !decreasing;
    }
    return (tree | std::uint64_t{1} << entering) & ~(std::uint64_t{1} << leaving);
  }

  int n_;
  Vector rows_, cols_;
};

// Indices (a, b), a < b, of two matrices within tol of each other entrywise,
// or (0, 0) if there are none. Sorting by a fixed positive projection keeps
// near-equal matrices within a narrow window of each other.
inline std::pair<std::size_t, std::size_t> find_near_duplicate(const std::vector<Matrix>& ms, double tol) {
  if (ms.size() < 2) return {0, 0};
  const auto size = ms.front().size();
  // Weights additive in (row, column) would be constant on the polytope, so
  // draw them pseudo-randomly from a fixed seed.
  std::mt19937_64 gen(0x5eed);
  std::uniform_real_distribution<double> unit(1.0, 2.0);
  Vector weights(size);
  for (auto& w : weights) w = unit(gen);
  const double window = tol * weights.sum();
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(ms.size());
  for (std::size_t k = 0; k < ms.size(); ++k)
    keyed.push_back({Eigen::Map<const Vector>(ms[k].data(), size).dot(weights), k});
  std::sort(keyed.begin(), keyed.end());
  for (std::size_t a = 0; a < keyed.size(); ++a) {
    for (std::size_t b = a + 1; b < keyed.size() && keyed[b].first - keyed[a].first <= window; ++b) {
      const auto i = keyed[a].second, j = keyed[b].second;
      if ((ms[i] - ms[j]).cwiseAbs().maxCoeff() <= tol) return {std::min(i, j), std::max(i, j)};
    }
  }
  return {0, 0};
}

// Euclidean projection onto the probability simplex.
inline Vector project_to_simplex(const Vector& y) {
  Vector u = y;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    cumulative += u[k];
    const double t = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) theta = t;
  }
  return (y.array() - theta).max(0.0).matrix();
}

}  // namespace detail

/// U(sigma, pi) together with its vertex list in canonical order.
class TransportationPolytope {
 public:
  TransportationPolytope(ProbabilityVector sigma, ProbabilityVector pi, std::vector<Matrix> vertices)
      : sigma_(std::move(sigma)), pi_(std::move(pi)), vertices_(std::move(vertices)) {
    require_same_dim(sigma_.dim(), pi_.dim(), "transportation polytope");
    if (vertices_.empty()) throw InternalError("transportation polytope: empty vertex list");
    const auto n = static_cast<Eigen::Index>(pi_.dim());
    for (std::size_t k = 0; k < vertices_.size(); ++k) {
      const Matrix& v = vertices_[k];
      std::ostringstream os;
      os << "transportation polytope: vertex " << k;
      if (v.rows() != n || v.cols() != n) throw InvariantError(os.str() + " has the wrong shape");
      if ((v.array() < 0.0).any()) throw InvariantError(os.str() + " has a negative entry");
      if ((v.colwise().sum().transpose() - pi_.values()).cwiseAbs().maxCoeff() > kNormTol)
        throw InvariantError(os.str() + " violates the column sums");
      if ((v.rowwise().sum() - sigma_.values()).cwiseAbs().maxCoeff() > kNormTol)
        throw InvariantError(os.str() + " violates the row sums");
      if (!detail::support_is_forest(v, kDedupeTol)) throw InvariantError(os.str() + " has a cyclic support");
    }
    const auto pair = detail::find_near_duplicate(vertices_, kDedupeTol);
    if (pair.first != pair.second) {
      std::ostringstream os;
      os << "transportation polytope: vertex " << pair.second << " duplicates vertex " << pair.first;
      throw InvariantError(os.str());
    }
  }

  /// Row-sum targets.
  const ProbabilityVector& sigma() const noexcept { return sigma_; }
  /// Column-sum targets.
  const ProbabilityVector& pi() const noexcept { return pi_; }
  const std::vector<Matrix>& vertices() const noexcept { return vertices_; }
  std::size_t vertex_count() const noexcept { return vertices_.size(); }
  std::size_t dim() const noexcept { return pi_.dim(); }

  /// Number of leading vertices V with V J_pi^{-1} a permutation matrix.
  std::size_t permutation_prefix_length() const {
    std::size_t l = 0;
    while (l < vertices_.size() && detail::is_permutation_type(vertices_[l])) ++l;
    return l;
  }

 private:
  ProbabilityVector sigma_;
  ProbabilityVector pi_;
  std::vector<Matrix> vertices_;
};

/// All vertices of U(sigma, pi): row sums sigma, column sums pi.
inline TransportationPolytope enumerate_vertices(const ProbabilityVector& sigma, const ProbabilityVector& pi) {
  require_same_dim(sigma.dim(), pi.dim(), "enumerate_vertices");
  if (pi.dim() > kMaxPolytopeDim) {
    std::ostringstream os;
    os << "enumerate_vertices: dimension " << pi.dim() << " exceeds the cap of " << kMaxPolytopeDim;
    throw InvariantError(os.str());
  }
  auto raw = detail::VertexEnumerator(sigma.values(), pi.values()).run();
  std::vector<Matrix> vertices = std::move(raw);
  for (;;) {
    const auto pair = detail::find_near_duplicate(vertices, kDedupeTol);
    if (pair.first == pair.second) break;
    vertices.erase(vertices.begin() + static_cast<std::ptrdiff_t>(pair.second));
  }
  if (vertices.empty()) throw InternalError("enumerate_vertices: no vertex found");
  detail::canonical_sort(vertices);
  return TransportationPolytope(sigma, pi, std::move(vertices));
}

/// U(pi, sigma) with the k-th vertex the transpose of P's k-th vertex.
inline TransportationPolytope vertex_transpose_dual(const TransportationPolytope& p) {
  std::vector<Matrix> vertices;
  vertices.reserve(p.vertex_count());
  for (const auto& v : p.vertices()) vertices.push_back(v.transpose());
  return TransportationPolytope(p.pi(), p.sigma(), std::move(vertices));
}

/// sum_k lambda_k V_k, the L-matrix of the combination.
inline Matrix combine_vertices(const Vector& lambda, const TransportationPolytope& p) {
  if (static_cast<std::size_t>(lambda.size()) != p.vertex_count())
    throw InvariantError("combine_vertices: coefficient count does not match the vertex count");
  Matrix l = Matrix::Zero(static_cast<Eigen::Index>(p.dim()), static_cast<Eigen::Index>(p.dim()));
  for (std::size_t k = 0; k < p.vertex_count(); ++k) l += lambda[static_cast<Eigen::Index>(k)] * p.vertices()[k];
  return l;
}

/// (sum_k lambda_k V_k) J_pi^{-1}.
inline StochasticMatrix map_from_coefficients(const CoefficientVector& lambda, const TransportationPolytope& p) {
  if (lambda.size() != p.vertex_count())
    throw InvariantError("map_from_coefficients: coefficient count does not match the vertex count");
  return StochasticMatrix(combine_vertices(lambda.values(), p) * DiagonalEmbedding(p.pi()).inverse());
}

/// One convex decomposition of Psi J_pi over the vertices of P.
///
/// Greedy extraction: repeatedly pick the vertex whose support lies inside the
/// support of the remainder and allows the largest step, subtract it, and
/// repeat. Each step zeroes at least one entry of the remainder, so at most
/// dim^2 steps are taken. A projected-gradient least-squares pass polishes
/// the result if the greedy pass leaves a residual above kFitTol.
inline CoefficientVector coefficients_from_map(const StochasticMatrix& psi, const TransportationPolytope& p) {
  require_same_dim(psi.dim(), p.dim(), "coefficients_from_map");
  const Matrix target = psi.matrix() * DiagonalEmbedding(p.pi()).matrix();
  const double transition_gap = (target.rowwise().sum() - p.sigma().values()).cwiseAbs().maxCoeff();
  if (transition_gap > kFitTol) {
    std::ostringstream os;
    os << "coefficients_from_map: map does not send pi to sigma (gap " << transition_gap << ")";
    throw InvariantError(os.str());
  }

  const std::size_t count = p.vertex_count();
  Vector lambda = Vector::Zero(static_cast<Eigen::Index>(count));
  Matrix remaining = target;
  double weight_left = 1.0;
  for (std::size_t step = 0; step <= p.dim() * p.dim() && weight_left > 1e-15; ++step) {
    std::size_t best = count;
    double best_step = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      const Matrix& v = p.vertices()[k];
      double t = weight_left;
      bool fits = true;
      for (Eigen::Index idx = 0; idx < v.size() && fits; ++idx) {
        const double vk = v.data()[idx];
        if (vk <= kDedupeTol) continue;
        const double rk = remaining.data()[idx];
        if (rk <= 1e-14) fits = false;
        t = std::min(t, rk / vk);
      }
      if (fits && t > best_step) {
        best_step = t;
        best = k;
      }
    }
    if (best == count) break;
    const Matrix& v = p.vertices()[best];
    lambda[static_cast<Eigen::Index>(best)] += best_step;
    remaining -= best_step * v;
    for (Eigen::Index idx = 0; idx < remaining.size(); ++idx) {
      double& x = remaining.data()[idx];
      if (x < 1e-14 || (v.data()[idx] > kDedupeTol && x < 1e-12 * best_step)) x = 0.0;
    }
    weight_left -= best_step;
  }

  auto residual = [&](const Vector& l) { return (combine_vertices(l, p) - target).norm(); };
  if (lambda.sum() > 0.0) lambda /= lambda.sum();
  if (residual(lambda) > kFitTol || lambda.sum() == 0.0) {
    // Projected gradient on ||sum_k l_k V_k - target||_F^2 over the simplex.
    Matrix basis(target.size(), static_cast<Eigen::Index>(count));
    for (std::size_t k = 0; k < count; ++k)
      basis.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Vector>(p.vertices()[k].data(), target.size());
    const Eigen::Map<const Vector> goal(target.data(), target.size());
    const Matrix gram = basis.transpose() * basis;
    const Vector linear = basis.transpose() * goal;
    const double lipschitz = std::max(gram.operatorNorm(), 1e-300);
    if (lambda.sum() == 0.0) lambda.setConstant(1.0 / static_cast<double>(count));
    Vector y = lambda, previous = lambda;
    double momentum = 1.0;
    for (int it = 0; it < 200000 && residual(lambda) > 0.1 * kFitTol; ++it) {
      const Vector next = detail::project_to_simplex(y - (gram * y - linear) / lipschitz);
      const double m2 = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
      y = next + ((momentum - 1.0) / m2) * (next - previous);
      previous = next;
      momentum = m2;
      lambda = next;
    }
  }
  const double fit = residual(lambda);
  if (fit > kFitTol) {
    std::ostringstream os;
    os << "coefficients_from_map: map is not in the polytope (residual " << fit << ")";
    throw InvariantError(os.str());
  }
  return CoefficientVector(lambda / lambda.sum());
}

}  // namespace retrieval
