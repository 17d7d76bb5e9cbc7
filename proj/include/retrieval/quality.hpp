#pragma once

// Retrieval quality: relative entropy of recovery (pointwise and averaged over
// the simplex), the determinant bounds, and the minimizer of the average
// recovery error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "retrieval/core.hpp"
#include "retrieval/detail/linalg.hpp"
#include "retrieval/polytope.hpp"
#include "retrieval/random.hpp"

namespace retrieval {

/// Base tolerance of bound checks; Monte Carlo reports add 3 standard errors.
inline constexpr double kBoundTol = 1e-8;
/// Relative objective change at which the average-error minimizer stops.
inline constexpr double kAreTol = 1e-8;
/// Constant of the second-order allowance c |d|_1^2 dim in the local bound.
inline constexpr double kSecondOrderConstant = 10.0;

/// Uniform (Dirichlet(1)) samples of the simplex interior, reproducible from a seed.
class SimplexSampler {
 public:
  SimplexSampler(std::size_t dim, std::size_t sample_count, std::uint64_t seed)
      : dim_(dim), count_(sample_count), seed_(seed) {
    if (dim == 0 || sample_count == 0) throw InvariantError("simplex sampler: dimension and sample count must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t sample_count() const noexcept { return count_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// The samples as columns of a dim x sample_count matrix.
  Matrix samples() const {
    Rng rng(seed_);
    Matrix out(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(count_));
    for (Eigen::Index k = 0; k < out.cols(); ++k) out.col(k) = dirichlet_sample(dim_, rng);
    return out;
  }

 private:
  std::size_t dim_;
  std::size_t count_;
  std::uint64_t seed_;
};

struct BoundReport {
  double lhs = 0.0;
  double rhs = 0.0;
  /// rhs - lhs.
  double slack = 0.0;
  /// holds iff slack >= -tolerance.
  double tolerance = 0.0;
  bool holds = true;
  std::string note;
};

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

namespace detail {

// D(p || q) allowing q to have zero entries (then +inf).
inline double kl_or_inf(const Vector& p, const Vector& q) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    s += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return std::max(0.0, s);
}

inline MonteCarloEstimate summarize(const Vector& values) {
  const auto n = static_cast<double>(values.size());
  const double mean = values.mean();
  const double var = values.size() > 1 ? (values.array() - mean).square().sum() / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

inline BoundReport make_report(double lhs, double rhs, double tolerance, std::string note = {}) {
  BoundReport r{lhs, rhs, rhs - lhs, tolerance, false, std::move(note)};
  r.holds = r.slack >= -tolerance || (std::isinf(rhs) && rhs > 0.0);
  return r;
}

inline void require_square_pair(const Matrix& retrieval, const Matrix& phi, const char* what) {
  if (retrieval.rows() != retrieval.cols() || phi.rows() != phi.cols() || retrieval.cols() != phi.rows()) {
    std::ostringstream os;
    os << what << ": retrieval and map dimensions do not match";
    throw InvariantError(os.str());
  }
}

}  // namespace detail

/// D(rho || retrieval * phi * rho).
inline double recovery_relative_entropy(const Matrix& retrieval, const Matrix& phi, const ProbabilityVector& rho) {
  detail::require_square_pair(retrieval, phi, "recovery_relative_entropy");
  require_same_dim(static_cast<std::size_t>(phi.cols()), rho.dim(), "recovery_relative_entropy");
  return detail::kl_or_inf(rho.values(), retrieval * (phi * rho.values()));
}

/// Monte Carlo mean of the recovery relative entropy over the sampler.
inline MonteCarloEstimate average_recovery_error(const Matrix& retrieval, const Matrix& phi, const SimplexSampler& sampler) {
  detail::require_square_pair(retrieval, phi, "average_recovery_error");
  require_same_dim(static_cast<std::size_t>(phi.cols()), sampler.dim(), "average_recovery_error");
  const Matrix rho = sampler.samples();
  const Matrix back = retrieval * phi * rho;
  Vector d(rho.cols());
  for (Eigen::Index k = 0; k < rho.cols(); ++k) d[k] = detail::kl_or_inf(rho.col(k), back.col(k));
  return detail::summarize(d);
}

/// log det(M)^{-1} = -sum log eigenvalues of M = retrieval * phi. The
/// spectrum must be real and positive.
inline double identity_relative_entropy(const Matrix& retrieval, const Matrix& phi) {
  detail::require_square_pair(retrieval, phi, "identity_relative_entropy");
  Eigen::EigenSolver<Matrix> es(retrieval * phi, false);
  if (es.info() != Eigen::Success) throw ConvergenceError("identity_relative_entropy: eigenvalue solver failed");
  double s = 0.0;
  for (const auto& ev : es.eigenvalues()) {
    if (std::abs(ev.imag()) > kCheckTol || ev.real() <= 0.0) {
      std::ostringstream os;
      os << "identity_relative_entropy: eigenvalue " << ev.real() << (ev.imag() < 0 ? " - " : " + ")
         << std::abs(ev.imag()) << "i is not positive";
      throw InvariantError(os.str());
    }
    s -= std::log(ev.real());
  }
  return s;
}

/// Average recovery error against K / |det M| - <S>, with K = E[-sum_i log s_i]
/// and <S> the mean Shannon entropy, all three on the sampler's draws.
inline BoundReport determinant_bound_report(const Matrix& retrieval, const Matrix& phi, const SimplexSampler& sampler) {
  detail::require_square_pair(retrieval, phi, "determinant_bound_report");
  require_same_dim(static_cast<std::size_t>(phi.cols()), sampler.dim(), "determinant_bound_report");
  const Matrix composite = retrieval * phi;
  const double det = std::abs(composite.determinant());
  const Matrix rho = sampler.samples();
  const Matrix back = composite * rho;
  const auto count = rho.cols();
  Vector lhs(count), k_term(count), entropy(count);
  for (Eigen::Index k = 0; k < count; ++k) {
    const auto r = rho.col(k);
    lhs[k] = detail::kl_or_inf(r, back.col(k));
    k_term[k] = -r.array().log().sum();
    entropy[k] = -(r.array() * r.array().log()).sum();
  }
  const auto lhs_est = detail::summarize(lhs);
  if (det <= kCheckTol) {
    return detail::make_report(lhs_est.mean, std::numeric_limits<double>::infinity(), kBoundTol,
                               "determinant below tolerance: bound is vacuous");
  }
  // Per-draw slack, so the standard error accounts for the shared samples.
  const Vector slack = k_term / det - entropy - lhs;
  const auto slack_est = detail::summarize(slack);
  const double rhs = k_term.mean() / det - entropy.mean();
  return detail::make_report(lhs_est.mean, rhs, kBoundTol + 3.0 * slack_est.standard_error);
}

/// D(pi + d || M(pi + d)) against 1/2 D(pi || pi + d) log det(M)^{-1}, with
/// the second-order allowance c |d|_1^2 dim.
inline BoundReport local_prior_bound_report(const Matrix& retrieval, const Matrix& phi, const ProbabilityVector& prior,
                                            const Vector& delta) {
  detail::require_square_pair(retrieval, phi, "local_prior_bound_report");
  require_same_dim(prior.dim(), static_cast<std::size_t>(delta.size()), "local_prior_bound_report");
  const double size = delta.cwiseAbs().sum();
  if (size > 1e-3) throw InvariantError("local_prior_bound_report: |delta|_1 must not exceed 1e-3");
  if (std::abs(delta.sum()) > kNormTol) throw InvariantError("local_prior_bound_report: perturbation is not trace-free");
  const ProbabilityVector moved(prior.values() + delta);
  const Matrix composite = retrieval * phi;
  const double lhs = detail::kl_or_inf(moved.values(), composite * moved.values());
  const double rhs = 0.5 * relative_entropy(prior, moved) * identity_relative_entropy(retrieval, phi);
  return detail::make_report(lhs, rhs, kSecondOrderConstant * size * size * static_cast<double>(prior.dim()));
}

namespace detail {

template <class Kernel>
double contrast_values(Kernel& g, const Vector& rho, const Vector& sigma) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < rho.size(); ++i) s += rho[i] * g(sigma[i] / rho[i]);
  return s;
}

// (H(rho||sigma) - H(M rho||M sigma)) / H(rho||sigma); NaN when H is too small
// to give a meaningful ratio.
template <class Kernel>
double contraction_ratio(Kernel& g, const Matrix& m, const Vector& rho, const Vector& sigma) {
  const double before = contrast_values(g, rho, sigma);
  if (!(before > 1e-12)) return std::numeric_limits<double>::quiet_NaN();
  const Vector mr = m * rho, ms = m * sigma;
  if ((mr.array() <= 0.0).any() || (ms.array() <= 0.0).any()) return std::numeric_limits<double>::quiet_NaN();
  return (before - contrast_values(g, mr, ms)) / before;
}

}  // namespace detail

/// Sampled infimum over pairs of the contraction ratio of H_g under
/// M = retrieval * phi, against 2 log det(M)^{-1}. Pairs are consecutive
/// sampler draws plus pairs straddling the fixed point of M along each
/// eigendirection; the best pair is then refined by coordinate descent. The
/// sampled infimum bounds the true one from above.
template <class Kernel = double (*)(double)>
BoundReport contraction_bound_report(const Matrix& retrieval, const Matrix& phi, const SimplexSampler& sampler,
                                     Kernel g = kl_kernel) {
  detail::require_square_pair(retrieval, phi, "contraction_bound_report");
  require_same_dim(static_cast<std::size_t>(phi.cols()), sampler.dim(), "contraction_bound_report");
  const Matrix m = retrieval * phi;
  const auto n = m.rows();
  const double det = m.determinant();
  const double rhs = det > 0.0 ? -2.0 * std::log(det) : std::numeric_limits<double>::infinity();

  double best = std::numeric_limits<double>::infinity();
  Vector best_rho, best_sigma;
  auto consider = [&](const Vector& rho, const Vector& sigma) {
    const double r = detail::contraction_ratio(g, m, rho, sigma);
    if (std::isfinite(r) && r < best) {
      best = r;
      best_rho = rho;
      best_sigma = sigma;
    }
  };

  const Matrix draws = sampler.samples();
  for (Eigen::Index k = 0; k + 1 < draws.cols(); k += 2) consider(draws.col(k), draws.col(k + 1));

  // Slowest modes sit near the fixed point, which is not always a sampled pair.
  if (is_left_stochastic(m, 1e-9)) {
    try {
      const Vector fixed = stationary_distribution(StochasticMatrix(m)).values();
      Eigen::EigenSolver<Matrix> es(m);
      for (Eigen::Index k = 0; k < n; ++k) {
        Vector v = es.eigenvectors().col(k).real();
        v.array() -= v.mean();
        if (v.cwiseAbs().maxCoeff() < 1e-12) continue;
        v /= v.cwiseAbs().maxCoeff();
        const double t = 0.25 * fixed.minCoeff();
        for (double scale : {1.0, 1e-2}) consider(fixed + scale * t * v, fixed - scale * t * v);
      }
    } catch (const InvariantError&) {
      // No unique positive fixed point; rely on the sampled pairs.
    }
  }

  // Coordinate descent: move mass between two coordinates of one member.
  if (std::isfinite(best)) {
    for (double step = 1e-2; step >= 1e-7; step *= 0.5) {
      bool improved = true;
      for (int sweep = 0; improved && sweep < 20; ++sweep) {
        improved = false;
        for (int which = 0; which < 2; ++which) {
          for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
              if (i == j) continue;
              Vector rho = best_rho, sigma = best_sigma;
              Vector& x = which == 0 ? rho : sigma;
              const double amount = step * x[j];
              x[i] += amount;
              x[j] -= amount;
              if (x[j] < kPositivityFloor) continue;
              const double before = best;
              consider(rho, sigma);
              improved = improved || best < before - 1e-12 * std::abs(before);
            }
          }
        }
      }
    }
  }
  return detail::make_report(best, rhs, kBoundTol, "lhs is a sampled infimum (an upper bound on the true infimum)");
}

struct AverageReMinimizer {
  StochasticMatrix map;
  double objective;
  /// Objective after every accepted step, starting from the initial guess.
  std::vector<double> history;
};

namespace detail {

// Euclidean projection of every column onto the probability simplex.
inline Matrix project_columns_to_simplex(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = project_to_simplex(x.col(j));
  return out;
}

}  // namespace detail

/// Left-stochastic X minimizing the sample mean of D(rho || X phi rho), by
/// projected gradient with column-wise simplex projection and Armijo
/// backtracking. Stops when the relative objective change falls below
/// kAreTol and the projected-gradient residual is below 1e-7.
inline AverageReMinimizer average_re_minimizer(const StochasticMatrix& phi, const SimplexSampler& sampler,
                                               int max_iter = 200000) {
  require_same_dim(phi.dim(), sampler.dim(), "average_re_minimizer");
  const Matrix rho = sampler.samples();
  const Matrix image = phi.matrix() * rho;
  const auto count = static_cast<double>(rho.cols());
  const double neg_entropy = (rho.array() * rho.array().log()).sum() / count;

  auto objective = [&](const Matrix& x) {
    const Matrix back = x * image;
    if ((back.array() <= 0.0).any()) return std::numeric_limits<double>::infinity();
    return neg_entropy - (rho.array() * back.array().log()).sum() / count;
  };
  auto gradient = [&](const Matrix& x) -> Matrix {
    const Matrix ratio = rho.array() / (x * image).array();
    return -(ratio * image.transpose()) / count;
  };

  const auto n = static_cast<Eigen::Index>(phi.dim());
  // Start from the uniform-prior Bayes reverse, which keeps X phi rho > 0.
  const Vector image_uniform = phi.matrix() * Vector::Constant(n, 1.0 / static_cast<double>(n));
  Matrix x = phi.matrix().transpose() * image_uniform.cwiseInverse().asDiagonal() / static_cast<double>(n);
  x = detail::project_columns_to_simplex(x);
  double f = objective(x);
  std::vector<double> history{f};
  double step = 1.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    const Matrix grad = gradient(x);
    const double stationarity = (detail::project_columns_to_simplex(x - grad) - x).cwiseAbs().maxCoeff();
    Matrix trial;
    double f_trial = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      trial = detail::project_columns_to_simplex(x - step * grad);
      f_trial = objective(trial);
      const double decrease = (grad.array() * (x - trial).array()).sum();
      if (f_trial <= f - 0.5 * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || f_trial >= f) {
      if (stationarity <= 1e-7) break;
      throw ConvergenceError("average_re_minimizer: line search failed before convergence");
    }
    const double change = (f - f_trial) / std::max(std::abs(f), 1e-300);
    x = trial;
    f = f_trial;
    history.push_back(f);
    step *= 2.0;
    if (change <= kAreTol && stationarity <= 1e-7) break;
    if (iter + 1 == max_iter) throw ConvergenceError("average_re_minimizer: iteration limit reached");
  }
  return {StochasticMatrix(x), f, std::move(history)};
}

}  // namespace retrieval
