#pragma once

// Probability vectors, left-stochastic matrices and the elementary checks
// (stochasticity, detailed balance, spectrum positivity) shared by the
// classical and quantum modules.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstddef>
#include <sstream>
#include <string>

#include "retrieval/errors.hpp"

namespace retrieval {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Smallest admissible entry of a probability vector.
inline constexpr double kPositivityFloor = 1e-12;
/// Normalization and stochasticity tolerance used by constructors.
inline constexpr double kNormTol = 1e-12;
/// Default tolerance of the boolean checks exposed to callers.
inline constexpr double kCheckTol = 1e-9;

namespace detail {

inline std::string describe(const Vector& v) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ')';
  return os.str();
}

// Unchecked D(p||q) in nats; callers guarantee positivity.
inline double kl(const Vector& p, const Vector& q) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) s += p[i] * (std::log(p[i]) - std::log(q[i]));
  return s;
}

}  // namespace detail

/// Strictly positive, normalized distribution.
class ProbabilityVector {
 public:
  explicit ProbabilityVector(Vector entries) : p_(std::move(entries)) {
    if (p_.size() == 0) throw InvariantError("probability vector: empty");
    for (Eigen::Index i = 0; i < p_.size(); ++i) {
      if (!std::isfinite(p_[i]) || p_[i] < kPositivityFloor) {
        std::ostringstream os;
        os << "probability vector: entry " << i << " = " << p_[i] << " is below the positivity floor "
           << kPositivityFloor;
        throw InvariantError(os.str());
      }
    }
    const double total = p_.sum();
    if (std::abs(total - 1.0) > kNormTol) {
      std::ostringstream os;
      os.precision(17);
      os << "probability vector: entries sum to " << total << ", not 1";
      throw InvariantError(os.str());
    }
  }

  ProbabilityVector(std::initializer_list<double> entries)
      : ProbabilityVector(Vector::Map(entries.begin(), static_cast<Eigen::Index>(entries.size()))) {}

  /// Rescales positive weights so they sum to one.
  static ProbabilityVector normalized(const Vector& weights) {
    const double total = weights.sum();
    if (!(total > 0.0)) throw InvariantError("probability vector: weights must have positive sum");
    return ProbabilityVector(weights / total);
  }

  static ProbabilityVector uniform(std::size_t dim) {
    return ProbabilityVector(Vector::Constant(static_cast<Eigen::Index>(dim), 1.0 / static_cast<double>(dim)));
  }

  const Vector& values() const noexcept { return p_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(p_.size()); }
  double operator[](std::size_t i) const { return p_[static_cast<Eigen::Index>(i)]; }

 private:
  Vector p_;
};

/// Square matrix with nonnegative entries and unit column sums. Entry (i, j)
/// is the probability of output microstate i given input microstate j.
class StochasticMatrix {
 public:
  explicit StochasticMatrix(Matrix entries) : m_(std::move(entries)) {
    if (m_.rows() == 0 || m_.rows() != m_.cols()) throw InvariantError("stochastic matrix: must be square and nonempty");
    for (Eigen::Index j = 0; j < m_.cols(); ++j) {
      for (Eigen::Index i = 0; i < m_.rows(); ++i) {
        double& x = m_(i, j);
        if (!std::isfinite(x) || x < -kNormTol) {
          std::ostringstream os;
          os << "stochastic matrix: entry (" << i << ", " << j << ") = " << x << " is negative";
          throw InvariantError(os.str());
        }
        x = std::max(x, 0.0);
      }
      const double total = m_.col(j).sum();
      if (std::abs(total - 1.0) > kNormTol) {
        std::ostringstream os;
        os.precision(17);
        os << "stochastic matrix: column " << j << " sums to " << total << ", not 1";
        throw InvariantError(os.str());
      }
    }
  }

  static StochasticMatrix identity(std::size_t dim) {
    const auto n = static_cast<Eigen::Index>(dim);
    return StochasticMatrix(Matrix::Identity(n, n));
  }

  const Matrix& matrix() const noexcept { return m_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(m_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return m_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

 private:
  Matrix m_;
};

/// The diagonal matrix J_pi with (J_pi)_{ii} = pi_i and its powers.
class DiagonalEmbedding {
 public:
  explicit DiagonalEmbedding(ProbabilityVector diagonal) : d_(std::move(diagonal)) {}

  const ProbabilityVector& diagonal() const noexcept { return d_; }
  Matrix matrix() const { return power(1.0); }
  Matrix inverse() const { return power(-1.0); }
  Matrix sqrt() const { return power(0.5); }
  Matrix inverse_sqrt() const { return power(-0.5); }

  Matrix power(double exponent) const {
    return d_.values().array().pow(exponent).matrix().asDiagonal();
  }

 private:
  ProbabilityVector d_;
};

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    std::ostringstream os;
    os << what << ": dimension mismatch (" << a << " vs " << b << ")";
    throw InvariantError(os.str());
  }
}

/// Phi rho.
inline ProbabilityVector apply(const StochasticMatrix& phi, const ProbabilityVector& rho) {
  require_same_dim(phi.dim(), rho.dim(), "apply");
  return ProbabilityVector(phi.matrix() * rho.values());
}

/// D(rho||sigma) in nats.
inline double relative_entropy(const ProbabilityVector& rho, const ProbabilityVector& sigma) {
  require_same_dim(rho.dim(), sigma.dim(), "relative_entropy");
  return std::max(0.0, detail::kl(rho.values(), sigma.values()));
}

/// Convex kernels for the Csiszar contrast. Each is normalized so that
/// g''(1) = 1 and all of them share the same local (Fisher) expansion.
inline double kl_kernel(double t) { return -std::log(t); }
inline double chi_squared_kernel(double t) { return 0.5 * (t - 1.0) * (t - 1.0); }
inline double hellinger_kernel(double t) {
  const double r = std::sqrt(t) - 1.0;
  return 2.0 * r * r;
}

/// H_g(rho||sigma) = sum_i rho_i g(sigma_i / rho_i). With kl_kernel this is
/// exactly relative_entropy(rho, sigma).
template <std::invocable<double> Kernel>
double csiszar_contrast(Kernel&& g, const ProbabilityVector& rho, const ProbabilityVector& sigma) {
  require_same_dim(rho.dim(), sigma.dim(), "csiszar_contrast");
  double s = 0.0;
  for (std::size_t i = 0; i < rho.dim(); ++i) s += rho[i] * g(sigma[i] / rho[i]);
  return s;
}

/// Half the Fisher quadratic form: 1/2 sum_i d_i^2 / rho_i.
inline double fisher_quadratic(const ProbabilityVector& rho, const Vector& delta) {
  require_same_dim(rho.dim(), static_cast<std::size_t>(delta.size()), "fisher_quadratic");
  return 0.5 * (delta.array().square() / rho.values().array()).sum();
}

inline bool is_left_stochastic(const Matrix& m, double tol = kCheckTol) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if ((m.array() < -tol).any()) return false;
  return ((m.colwise().sum().array() - 1.0).abs() <= tol).all();
}

/// max_{i,j} |M_{j,i} pi_i - M_{i,j} pi_j|.
inline double detailed_balance_residual(const Matrix& m, const ProbabilityVector& pi) {
  require_same_dim(static_cast<std::size_t>(m.rows()), pi.dim(), "detailed_balance");
  const Matrix flow = m * pi.values().asDiagonal();  // flow(i, j) = M_ij pi_j
  return (flow - flow.transpose()).cwiseAbs().maxCoeff();
}

inline bool is_detailed_balanced(const Matrix& m, const ProbabilityVector& pi, double tol = kCheckTol) {
  return detailed_balance_residual(m, pi) <= tol;
}

/// How far the spectrum is from being real and nonnegative:
/// max over eigenvalues of max(-Re, |Im|), floored at zero.
inline double spectrum_violation(const Matrix& m) {
  if (m.rows() != m.cols()) throw InvariantError("spectrum: matrix must be square");
  Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) throw ConvergenceError("spectrum: eigenvalue solver failed");
  double worst = 0.0;
  for (const auto& ev : es.eigenvalues()) worst = std::max({worst, -ev.real(), std::abs(ev.imag())});
  return worst;
}

inline bool spectrum_is_nonnegative(const Matrix& m, double tol = kCheckTol) {
  return spectrum_violation(m) <= tol;
}

/// Same check, using the symmetric similarity transform
/// J_pi^{-1/2} M J_pi^{1/2} when M is detailed balanced with respect to pi.
inline double spectrum_violation(const Matrix& m, const ProbabilityVector& pi, double db_tol = kCheckTol) {
  if (!is_detailed_balanced(m, pi, db_tol)) return spectrum_violation(m);
  const Vector s = pi.values().array().sqrt();
  Matrix g = s.cwiseInverse().asDiagonal() * m * s.asDiagonal();
  g = 0.5 * (g + g.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw ConvergenceError("spectrum: symmetric eigensolver failed");
  return std::max(0.0, -es.eigenvalues().minCoeff());
}

inline bool spectrum_is_nonnegative(const Matrix& m, const ProbabilityVector& pi, double tol = kCheckTol) {
  return spectrum_violation(m, pi, tol) <= tol;
}

/// Fixed point of a left-stochastic matrix (normalized eigenvector for the
/// eigenvalue 1). Requires the fixed point to be unique and strictly positive.
inline ProbabilityVector stationary_distribution(const StochasticMatrix& m) {
  const auto n = static_cast<Eigen::Index>(m.dim());
  Matrix a = m.matrix() - Matrix::Identity(n, n);
  a.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs[n - 1] = 1.0;
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw InvariantError("stationary distribution: fixed point is not unique");
  return ProbabilityVector::normalized(lu.solve(rhs));
}

inline bool is_permutation_matrix(const Matrix& m, double tol = kCheckTol) {
  if (m.rows() != m.cols()) return false;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    int ones = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (std::abs(m(i, j) - 1.0) <= tol) {
        ++ones;
      } else if (std::abs(m(i, j)) > tol) {
        return false;
      }
    }
    if (ones != 1) return false;
  }
  return ((m.rowwise().sum().array() - 1.0).abs() <= tol).all();
}

}  // namespace retrieval
