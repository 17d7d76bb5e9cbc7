#pragma once

// Retrieval maps for a fixed pair (Phi, pi): the Bayes reverse, the axiom
// report, the Gamma matrix and the determinant-maximizing optimal retrieval.

#include <cmath>
#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "retrieval/core.hpp"
#include "retrieval/detail/linalg.hpp"
#include "retrieval/detail/lp.hpp"
#include "retrieval/polytope.hpp"

namespace retrieval {

/// Symmetry tolerance for Gamma (equivalently, detailed balance).
inline constexpr double kSymTol = 1e-9;
/// Tolerance on reported optimal determinants.
inline constexpr double kOptTol = 1e-6;
/// Largest vertex count accepted by the grid oracle.
inline constexpr std::size_t kOracleMaxVertices = 6;

/// (Phi, pi) together with Phi pi and, computed on first use, U(pi, Phi pi).
class RetrievalProblem {
 public:
  RetrievalProblem(StochasticMatrix phi, ProbabilityVector prior)
      : phi_(std::move(phi)), prior_(std::move(prior)), image_(image_of(phi_, prior_)), cache_(std::make_shared<Cache>()) {}

  const StochasticMatrix& phi() const noexcept { return phi_; }
  const ProbabilityVector& prior() const noexcept { return prior_; }
  /// Phi pi.
  const ProbabilityVector& image_prior() const noexcept { return image_; }
  std::size_t dim() const noexcept { return prior_.dim(); }

  /// U(pi, Phi pi): row sums pi, column sums Phi pi. Enumerated once, on demand.
  const TransportationPolytope& polytope() const {
    std::call_once(cache_->once, [this] { cache_->polytope.emplace(enumerate_vertices(prior_, image_)); });
    return *cache_->polytope;
  }

 private:
  struct Cache {
    std::once_flag once;
    std::optional<TransportationPolytope> polytope;
  };

  static ProbabilityVector image_of(const StochasticMatrix& phi, const ProbabilityVector& prior) {
    require_same_dim(phi.dim(), prior.dim(), "retrieval problem");
    try {
      return ProbabilityVector(phi.matrix() * prior.values());
    } catch (const InvariantError& e) {
      throw InvariantError(std::string("retrieval problem: Phi pi is not strictly positive (") + e.what() + ")");
    }
  }

  StochasticMatrix phi_;
  ProbabilityVector prior_;
  ProbabilityVector image_;
  std::shared_ptr<Cache> cache_;
};

/// J_pi Phi^T J_{Phi pi}^{-1}.
inline StochasticMatrix bayes_reverse(const RetrievalProblem& problem) {
  return StochasticMatrix(problem.prior().values().asDiagonal() * problem.phi().matrix().transpose() *
                          problem.image_prior().values().cwiseInverse().asDiagonal());
}

/// The R map of the Bayes reverse is the identity on coefficients.
inline CoefficientVector coefficient_transform_bayes(const CoefficientVector& lambda_phi) { return lambda_phi; }

struct AxiomCheck {
  bool holds = true;
  /// Size of the violated quantity (zero when there is nothing to violate).
  double magnitude = 0.0;
  std::string witness;
};

struct AxiomReport {
  AxiomCheck stochastic;
  AxiomCheck inverse_consistency;
  AxiomCheck prior_retrieved;
  AxiomCheck detailed_balance;
  AxiomCheck nonneg_spectrum;

  bool all_hold() const {
    return stochastic.holds && inverse_consistency.holds && prior_retrieved.holds && detailed_balance.holds &&
           nonneg_spectrum.holds;
  }
};

namespace detail {

inline AxiomCheck make_check(double magnitude, double tol, std::string what) {
  std::ostringstream os;
  os.precision(6);
  os << what << " = " << magnitude;
  return {magnitude <= tol, magnitude, os.str()};
}

}  // namespace detail

/// Axioms 1-5 for a candidate retrieval of `problem`. The candidate is a raw
/// matrix so that non-stochastic candidates (e.g. Phi^{-1}) can be reported.
inline AxiomReport check_axioms(const Matrix& candidate, const RetrievalProblem& problem, double tol = kCheckTol) {
  const auto n = static_cast<Eigen::Index>(problem.dim());
  if (candidate.rows() != n || candidate.cols() != n) throw InvariantError("check_axioms: dimension mismatch");
  const Matrix& phi = problem.phi().matrix();
  AxiomReport r;

  const double negativity = std::max(0.0, -candidate.minCoeff());
  const double column_gap = (candidate.colwise().sum().array() - 1.0).abs().maxCoeff();
  r.stochastic = detail::make_check(std::max(negativity, column_gap), tol, "max(negative entry, column-sum gap)");

  if (is_permutation_matrix(phi, tol)) {
    r.inverse_consistency =
        detail::make_check((candidate - phi.transpose()).cwiseAbs().maxCoeff(), tol, "max |candidate - Phi^T|");
  } else {
    r.inverse_consistency = {true, 0.0, "not applicable: Phi is not a permutation"};
  }

  r.prior_retrieved = detail::make_check(
      (candidate * problem.image_prior().values() - problem.prior().values()).cwiseAbs().maxCoeff(), tol,
      "max |candidate(Phi pi) - pi|");

  const Matrix composite = candidate * phi;
  r.detailed_balance =
      detail::make_check(detailed_balance_residual(composite, problem.prior()), tol, "detailed-balance residual");
  r.nonneg_spectrum = detail::make_check(spectrum_violation(composite, problem.prior(), tol), tol,
                                         "max(-Re, |Im|) over the spectrum of candidate*Phi");
  return r;
}

inline AxiomReport check_axioms(const StochasticMatrix& candidate, const RetrievalProblem& problem,
                                double tol = kCheckTol) {
  return check_axioms(candidate.matrix(), problem, tol);
}

/// J_pi^{-1/2} (candidate Phi) J_pi^{1/2}. Symmetric exactly when the
/// composition is detailed balanced; an asymmetric result is reported, not rejected.
class GammaMatrix {
 public:
  explicit GammaMatrix(Matrix entries) : g_(std::move(entries)) {}

  const Matrix& matrix() const noexcept { return g_; }
  double asymmetry() const { return detail::asymmetry(g_); }
  bool is_symmetric(double tol = kSymTol) const { return asymmetry() <= tol; }
  double determinant() const { return g_.determinant(); }
  /// Eigenvalues of the symmetric part, ascending.
  Vector eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<Matrix> es(detail::symmetric_part(g_), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }

 private:
  Matrix g_;
};

inline GammaMatrix gamma_matrix(const Matrix& candidate, const RetrievalProblem& problem) {
  const Vector s = problem.prior().values().array().sqrt();
  return GammaMatrix(s.cwiseInverse().asDiagonal() * (candidate * problem.phi().matrix()) * s.asDiagonal());
}

inline GammaMatrix gamma_matrix(const StochasticMatrix& candidate, const RetrievalProblem& problem) {
  return gamma_matrix(candidate.matrix(), problem);
}

/// Gamma[lambda] for coefficients over the vertices of problem.polytope().
inline GammaMatrix gamma_from_coefficients(const Vector& lambda, const RetrievalProblem& problem) {
  const Matrix l = combine_vertices(lambda, problem.polytope());
  return gamma_matrix(Matrix(l * problem.image_prior().values().cwiseInverse().asDiagonal()), problem);
}

struct OptimalRetrieval {
  StochasticMatrix map;
  CoefficientVector coefficients;
  /// det(map * Phi).
  double determinant;
};

namespace detail {

// Maximizes log det Gamma over L in U(pi, Phi pi) with Gamma(L) symmetric,
// where Gamma(L) = J_pi^{-1/2} L A and A = J_{Phi pi}^{-1} Phi J_pi^{1/2}. The
// map is L J_{Phi pi}^{-1}. Entries of L are indexed row-major, e = i*n + k.
class MaxDetSolver {
 public:
  static constexpr double kMuStart = 1.0;
  static constexpr double kMuEnd = 1e-10;
  static constexpr double kMuFactor = 0.2;
  static constexpr double kDecrementTol = 1e-10;
  static constexpr int kMaxIter = 500;
  // LP maxima below this are treated as entries forced to zero.
  static constexpr double kSupportTol = 1e-12;
  // Entries below this after the barrier stages are fixed to zero in the polish.
  static constexpr double kActiveTol = 1e-8;

  explicit MaxDetSolver(const RetrievalProblem& problem)
      : n_(static_cast<Eigen::Index>(problem.dim())),
        scale_(problem.prior().values().array().rsqrt()),
        a_(problem.image_prior().values().cwiseInverse().asDiagonal() * problem.phi().matrix() *
           problem.prior().values().array().sqrt().matrix().asDiagonal()) {
    build_constraints(problem);
    const Matrix bayes = problem.prior().values().asDiagonal() * problem.phi().matrix().transpose();
    bayes_ = flatten(bayes);
  }

  /// The optimal L (row sums pi, column sums Phi pi).
  Matrix solve() const {
    const auto entries = n_ * n_;
    std::vector<Eigen::Index> free;
    Vector start = interior_start(free);
    Matrix basis = null_space(columns(eq_, free));
    Vector x = start;
    for (double mu = kMuStart;; mu = std::max(mu * kMuFactor, kMuEnd)) {
      newton(x, free, basis, mu);
      if (mu <= kMuEnd) break;
    }
    const double barrier_value = *log_det_pd(gamma(x));

    // Fix the entries the barrier drove to zero and maximize on that face.
    std::vector<Eigen::Index> active;
    for (auto e : free)
      if (x[e] > kActiveTol) active.push_back(e);
    Vector polished = Vector::Zero(entries);
    for (auto e : active) polished[e] = x[e];
    const Matrix e_active = columns(eq_, active);
    Vector y(static_cast<Eigen::Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) y[static_cast<Eigen::Index>(k)] = x[active[k]];
    y -= least_norm_solve(e_active, e_active * y - rhs_);
    bool ok = (y.array() > 0.0).all();
    if (ok) {
      for (std::size_t k = 0; k < active.size(); ++k) polished[active[k]] = y[static_cast<Eigen::Index>(k)];
      ok = log_det_pd(gamma(polished)).has_value();
    }
    if (ok) {
      try {
        newton(polished, active, null_space(e_active), 0.0);
        ok = *log_det_pd(gamma(polished)) >= barrier_value - 1e-12;
      } catch (const ConvergenceError&) {
        ok = false;
      }
    }
    return unflatten(ok ? polished : x).cwiseMax(0.0);
  }

 private:
  Vector flatten(const Matrix& m) const {
    Vector v(n_ * n_);
    for (Eigen::Index i = 0; i < n_; ++i)
      for (Eigen::Index k = 0; k < n_; ++k) v[i * n_ + k] = m(i, k);
    return v;
  }

  Matrix unflatten(const Vector& v) const {
    Matrix m(n_, n_);
    for (Eigen::Index i = 0; i < n_; ++i)
      for (Eigen::Index k = 0; k < n_; ++k) m(i, k) = v[i * n_ + k];
    return m;
  }

  static Matrix columns(const Matrix& m, const std::vector<Eigen::Index>& cols) {
    Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(cols[k]);
    return out;
  }

  // Row sums, column sums, and Gamma_ij = Gamma_ji for i < j.
  void build_constraints(const RetrievalProblem& problem) {
    const auto rows = 2 * n_ + n_ * (n_ - 1) / 2;
    eq_ = Matrix::Zero(rows, n_ * n_);
    rhs_ = Vector::Zero(rows);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n_; ++i, ++r) {
      for (Eigen::Index k = 0; k < n_; ++k) eq_(r, i * n_ + k) = 1.0;
      rhs_[r] = problem.prior()[static_cast<std::size_t>(i)];
    }
    for (Eigen::Index k = 0; k < n_; ++k, ++r) {
      for (Eigen::Index i = 0; i < n_; ++i) eq_(r, i * n_ + k) = 1.0;
      rhs_[r] = problem.image_prior()[static_cast<std::size_t>(k)];
    }
    for (Eigen::Index i = 0; i < n_; ++i) {
      for (Eigen::Index j = i + 1; j < n_; ++j, ++r) {
        for (Eigen::Index k = 0; k < n_; ++k) {
          eq_(r, i * n_ + k) += scale_[i] * a_(k, j);
          eq_(r, j * n_ + k) -= scale_[j] * a_(k, i);
        }
      }
    }
  }

  Matrix gamma(const Vector& x) const { return symmetric_part(scale_.asDiagonal() * unflatten(x) * a_); }

  // Symmetric part of dGamma/dL_ik.
  Matrix gamma_derivative(Eigen::Index e) const {
    const Eigen::Index i = e / n_, k = e % n_;
    Matrix g = Matrix::Zero(n_, n_);
    g.row(i) = scale_[i] * a_.row(k);
    return symmetric_part(g);
  }

  // A strictly feasible point: positive on every entry that can be positive
  // anywhere on the feasible set, with Gamma positive definite. Entries that
  // are zero on the whole feasible set are found by linear programming.
  Vector interior_start(std::vector<Eigen::Index>& free) const {
    const auto entries = n_ * n_;
    std::vector<int> state(static_cast<std::size_t>(entries), 0);  // 1 positive somewhere, -1 never
    for (Eigen::Index e = 0; e < entries; ++e)
      if (bayes_[e] > kSupportTol) state[static_cast<std::size_t>(e)] = 1;
    std::vector<Vector> pool;
    for (Eigen::Index e = 0; e < entries; ++e) {
      if (state[static_cast<std::size_t>(e)] != 0) continue;
      const auto lp = maximize_lp(Vector::Unit(entries, e), eq_, rhs_);
      if (lp.status != LpStatus::optimal) throw InternalError("optimal_retrieval: support detection LP failed");
      if (lp.value <= kSupportTol) {
        state[static_cast<std::size_t>(e)] = -1;
        continue;
      }
      for (Eigen::Index f = 0; f < entries; ++f)
        if (lp.x[f] > kSupportTol) state[static_cast<std::size_t>(f)] = 1;
      pool.push_back(lp.x);
    }
    free.clear();
    for (Eigen::Index e = 0; e < entries; ++e)
      if (state[static_cast<std::size_t>(e)] == 1) free.push_back(e);
    if (pool.empty()) return bayes_;

    Vector center = bayes_;
    for (const auto& p : pool) center += p;
    center /= static_cast<double>(pool.size() + 1);
    for (Eigen::Index e = 0; e < entries; ++e)
      if (state[static_cast<std::size_t>(e)] == -1) center[e] = 0.0;
    for (double t = 0.5; t > 1e-9; t *= 0.5) {
      const Vector x = (1.0 - t) * bayes_ + t * center;
      bool positive = true;
      for (auto e : free) positive = positive && x[e] > 0.0;
      if (positive && log_det_pd(gamma(x))) return x;
    }
    throw InternalError("optimal_retrieval: no strictly feasible start near the Bayes reverse");
  }

  double objective(const Vector& x, const std::vector<Eigen::Index>& free, double mu) const {
    const auto ld = log_det_pd(gamma(x));
    if (!ld) return std::numeric_limits<double>::infinity();
    double f = -*ld;
    for (auto e : free) {
      if (!(x[e] > 0.0)) return std::numeric_limits<double>::infinity();
      if (mu > 0.0) f -= mu * std::log(x[e]);
    }
    return f;
  }

  // Damped Newton on -log det Gamma - mu sum log x_e over x + span(basis).
  void newton(Vector& x, const std::vector<Eigen::Index>& free, const Matrix& basis, double mu) const {
    if (basis.cols() == 0) return;
    const auto m = static_cast<Eigen::Index>(free.size());
    std::vector<Matrix> derivs;
    derivs.reserve(free.size());
    for (auto e : free) derivs.push_back(gamma_derivative(e));
    for (int iter = 0; iter < kMaxIter; ++iter) {
      const Matrix g_inv = gamma(x).inverse();
      std::vector<Matrix> p(free.size());
      Vector grad(m);
      Matrix hess(m, m);
      for (Eigen::Index a = 0; a < m; ++a) {
        p[static_cast<std::size_t>(a)] = g_inv * derivs[static_cast<std::size_t>(a)];
        grad[a] = -p[static_cast<std::size_t>(a)].trace();
        if (mu > 0.0) grad[a] -= mu / x[free[static_cast<std::size_t>(a)]];
      }
      for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = a; b < m; ++b) {
          const double h = (p[static_cast<std::size_t>(a)].array() * p[static_cast<std::size_t>(b)].transpose().array()).sum();
          hess(a, b) = hess(b, a) = h;
        }
        if (mu > 0.0) {
          const double xa = x[free[static_cast<std::size_t>(a)]];
          hess(a, a) += mu / (xa * xa);
        }
      }
      const Vector gz = basis.transpose() * grad;
      const Matrix hz = basis.transpose() * hess * basis;
      const Vector dz = -hz.ldlt().solve(gz);
      const double decrement = -gz.dot(dz);
      if (!std::isfinite(decrement)) throw ConvergenceError("optimal_retrieval: singular Newton system");
      if (decrement / 2.0 <= kDecrementTol) return;

      const Vector step_free = basis * dz;
      Vector step = Vector::Zero(x.size());
      for (Eigen::Index a = 0; a < m; ++a) step[free[static_cast<std::size_t>(a)]] = step_free[a];
      const double f0 = objective(x, free, mu);
      double t = 1.0;
      bool moved = false;
      for (; t > 1e-14; t *= 0.5) {
        const Vector trial = x + t * step;
        if (objective(trial, free, mu) <= f0 - 0.25 * t * decrement) {
          x = trial;
          moved = true;
          break;
        }
      }
      if (!moved) {
        if (decrement / 2.0 <= 1e-8) return;
        throw ConvergenceError("optimal_retrieval: line search stalled (Newton decrement " +
                               std::to_string(decrement) + ")");
      }
    }
    throw ConvergenceError("optimal_retrieval: barrier stage did not converge in " + std::to_string(kMaxIter) +
                           " iterations");
  }

  Eigen::Index n_;
  Vector scale_;  // pi^{-1/2}
  Matrix a_;
  Matrix eq_;
  Vector rhs_;
  Vector bayes_;
};

}  // namespace detail

/// The retrieval maximizing det(map * Phi) under axioms 1-5, with one
/// decomposition of it over the vertices of U(pi, Phi pi).
inline OptimalRetrieval optimal_retrieval(const RetrievalProblem& problem) {
  const Matrix& phi = problem.phi().matrix();
  const auto& polytope = problem.polytope();
  auto finish = [&](StochasticMatrix map) {
    const double det = (map.matrix() * phi).determinant();
    CoefficientVector lambda = coefficients_from_map(map, polytope);
    return OptimalRetrieval{std::move(map), std::move(lambda), det};
  };
  StochasticMatrix bayes = bayes_reverse(problem);
  // A permutation is inverted exactly; a singular Phi makes every candidate
  // determinant zero, so the Bayes reverse is already optimal.
  if (is_permutation_matrix(phi, kNormTol)) return finish(StochasticMatrix(phi.transpose()));
  Eigen::FullPivLU<Matrix> lu(phi);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) return finish(std::move(bayes));

  const Matrix l = detail::MaxDetSolver(problem).solve();
  StochasticMatrix map(l * problem.image_prior().values().cwiseInverse().asDiagonal());
  const double shortfall = (bayes.matrix() * phi).determinant() - (map.matrix() * phi).determinant();
  if (shortfall > 1e-9) throw InternalError("optimal_retrieval: solver ended below the Bayes determinant");
  // Within rounding of Bayes (e.g. when the feasible set is a single point).
  if (shortfall > 0.0) return finish(std::move(bayes));
  return finish(std::move(map));
}

struct BruteForceOptimum {
  CoefficientVector coefficients;
  double determinant;
};

/// Grid search over coefficient vectors, used as a testing oracle for
/// optimal_retrieval. The symmetry equalities cut the simplex down to a slice;
/// the slice is parametrized by the coefficients outside a pivot set, which
/// are gridded (zero included) and the pivot coefficients solved for. The
/// search runs coarse to fine, ending at `grid_step`, each level scanning a
/// window around the best point so far and re-centring until it stops moving.
inline BruteForceOptimum brute_force_optimal(const RetrievalProblem& problem, double grid_step) {
  const auto& polytope = problem.polytope();
  const auto count = static_cast<Eigen::Index>(polytope.vertex_count());
  if (polytope.vertex_count() > kOracleMaxVertices) {
    std::ostringstream os;
    os << "brute_force_optimal: " << count << " vertices exceed the oracle cap of " << kOracleMaxVertices;
    throw InvariantError(os.str());
  }
  if (!(grid_step > 0.0 && grid_step <= 0.5)) throw InvariantError("brute_force_optimal: grid step must be in (0, 0.5]");

  const auto n = static_cast<Eigen::Index>(problem.dim());
  const Vector s = problem.prior().values().array().sqrt();
  const Matrix a = problem.image_prior().values().cwiseInverse().asDiagonal() * problem.phi().matrix() * s.asDiagonal();
  std::vector<Matrix> gammas;
  for (const auto& v : polytope.vertices()) gammas.push_back(s.cwiseInverse().asDiagonal() * v * a);

  // Sum-to-one and antisymmetric parts, reduced to an independent row set.
  Matrix c = Matrix::Zero(1 + n * (n - 1) / 2, count);
  Vector b = Vector::Zero(c.rows());
  c.row(0).setOnes();
  b[0] = 1.0;
  Eigen::Index r = 1;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j, ++r)
      for (Eigen::Index k = 0; k < count; ++k) c(r, k) = gammas[static_cast<std::size_t>(k)](i, j) - gammas[static_cast<std::size_t>(k)](j, i);
  Eigen::JacobiSVD<Matrix> svd(c, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Index rank = 0;
  while (rank < svd.singularValues().size() && svd.singularValues()[rank] > 1e-10 * svd.singularValues()[0]) ++rank;
  const Matrix cr = svd.matrixV().leftCols(rank).transpose();
  const Vector br = svd.singularValues().head(rank).cwiseInverse().asDiagonal() * svd.matrixU().leftCols(rank).transpose() * b;

  auto evaluate = [&](const Vector& lambda) -> std::optional<double> {
    if ((lambda.array() < -1e-12).any()) return std::nullopt;
    Matrix g = Matrix::Zero(n, n);
    for (Eigen::Index k = 0; k < count; ++k) g += std::max(lambda[k], 0.0) * gammas[static_cast<std::size_t>(k)];
    if (detail::asymmetry(g) > kSymTol) return std::nullopt;
    if (detail::min_eigenvalue_symmetric(g) < -kCheckTol) return std::nullopt;
    return detail::symmetric_part(g).determinant();
  };

  // Pivot set: greedily take columns in `order` that keep the pivot block well conditioned.
  auto choose_pivots = [&](const std::vector<Eigen::Index>& order) {
    std::vector<Eigen::Index> pivots;
    for (auto k : order) {
      if (static_cast<Eigen::Index>(pivots.size()) == rank) break;
      auto trial = pivots;
      trial.push_back(k);
      Matrix block(rank, static_cast<Eigen::Index>(trial.size()));
      for (std::size_t t = 0; t < trial.size(); ++t) block.col(static_cast<Eigen::Index>(t)) = cr.col(trial[t]);
      Eigen::JacobiSVD<Matrix> bs(block);
      if (bs.singularValues().minCoeff() > 1e-8) pivots = std::move(trial);
    }
    if (static_cast<Eigen::Index>(pivots.size()) != rank) throw InternalError("brute_force_optimal: no pivot set");
    return pivots;
  };

  std::optional<Vector> best;
  double best_det = -1.0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  double step = std::max(grid_step, 0.1);
  double previous_step = 0.0;
  int recentres = 0;
  for (;;) {
    if (best) {
      std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return (*best)[x] > (*best)[y]; });
    }
    const auto pivots = choose_pivots(order);
    std::vector<Eigen::Index> others;
    for (Eigen::Index k = 0; k < count; ++k)
      if (std::find(pivots.begin(), pivots.end(), k) == pivots.end()) others.push_back(k);
    Matrix pivot_block(rank, rank), other_block(rank, static_cast<Eigen::Index>(others.size()));
    for (Eigen::Index t = 0; t < rank; ++t) pivot_block.col(t) = cr.col(pivots[static_cast<std::size_t>(t)]);
    for (std::size_t t = 0; t < others.size(); ++t) other_block.col(static_cast<Eigen::Index>(t)) = cr.col(others[t]);
    const Eigen::PartialPivLU<Matrix> pivot_lu(pivot_block);

    // Candidate values per free coordinate.
    std::vector<std::vector<double>> axes;
    for (auto k : others) {
      std::vector<double> values;
      if (!best) {
        for (double v = 0.0; v <= 1.0 + 1e-12; v += step) values.push_back(v);
      } else {
        const double center = (*best)[k];
        const auto reach = static_cast<int>(std::ceil(2.0 * previous_step / step));
        bool below_zero = false;
        for (int t = -reach; t <= reach; ++t) {
          const double v = center + t * step;
          if (v < 0.0) {
            below_zero = true;
            continue;
          }
          if (v <= 1.0 + 1e-12) values.push_back(v);
        }
        if (below_zero) values.insert(values.begin(), 0.0);
      }
      axes.push_back(std::move(values));
    }

    Vector lambda(count), free_values(static_cast<Eigen::Index>(others.size()));
    std::function<void(std::size_t, double)> scan = [&](std::size_t axis, double used) {
      if (axis == axes.size()) {
        const Vector dependent = pivot_lu.solve(br - other_block * free_values);
        for (Eigen::Index t = 0; t < rank; ++t) lambda[pivots[static_cast<std::size_t>(t)]] = dependent[t];
        for (std::size_t t = 0; t < others.size(); ++t) lambda[others[t]] = free_values[static_cast<Eigen::Index>(t)];
        const auto det = evaluate(lambda);
        if (det && *det > best_det) {
          best_det = *det;
          best = lambda.cwiseMax(0.0);
        }
        return;
      }
      for (double v : axes[axis]) {
        if (used + v > 1.0 + 1e-12) break;
        free_values[static_cast<Eigen::Index>(axis)] = v;
        scan(axis + 1, used + v);
      }
    };
    const double before = best_det;
    scan(0, 0.0);
    if (!best) {
      if (step <= grid_step) throw InternalError("brute_force_optimal: no feasible grid point");
      step = std::max(grid_step, step / 2.0);
      continue;
    }
    // On a thin slice the best point can sit several windows away from the
    // maximum; re-centre at the same step until it stops improving.
    if (previous_step > 0.0 && best_det > before + 1e-15 * std::abs(before) && ++recentres < 10000) continue;
    if (step <= grid_step) break;
    previous_step = step;
    step = std::max(grid_step, step / 4.0);
  }
  return {CoefficientVector(*best / best->sum()), best_det};
}

}  // namespace retrieval
