#pragma once

// Quantum states and channels. Operators are column-stacked, so that
// vec(A X B) = (B^T (x) A) vec(X); a superoperator is the d^2 x d^2 matrix S
// with vec(Phi(X)) = S vec(X), and its Hilbert-Schmidt adjoint is S^dagger.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "retrieval/core.hpp"
#include "retrieval/quality.hpp"
#include "retrieval/random.hpp"
#include "retrieval/retrieval_maps.hpp"

namespace retrieval {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

/// Tolerance of the CPTP, marginal and detailed-balance checks.
inline constexpr double kQuantumTol = 1e-9;
/// Choi asymmetry reported as a failure of Hermiticity.
inline constexpr double kChoiAsymmetryTol = 1e-10;
/// Largest |beta * epsilon| used for Gibbs states.
inline constexpr double kMaxBetaEpsilon = 50.0;

namespace detail {

inline double hermitian_asymmetry(const CMatrix& m) { return (m - m.adjoint()).cwiseAbs().maxCoeff(); }

inline CMatrix hermitian_part(const CMatrix& m) { return 0.5 * (m + m.adjoint()); }

inline Vector hermitian_eigenvalues(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(m), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw ConvergenceError("hermitian eigensolver failed");
  return es.eigenvalues();
}

// f(H) for Hermitian H via its eigendecomposition.
template <class F>
CMatrix hermitian_function(const CMatrix& h, F f) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(h));
  if (es.info() != Eigen::Success) throw ConvergenceError("hermitian eigensolver failed");
  Vector values = es.eigenvalues();
  for (auto& v : values) v = f(v);
  return es.eigenvectors() * values.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

inline CVector vec(const CMatrix& x) { return Eigen::Map<const CVector>(x.data(), x.size()); }

inline CMatrix unvec(const CVector& v, Eigen::Index d) { return Eigen::Map<const CMatrix>(v.data(), d, d); }

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Eigen::Index side_of(Eigen::Index square, const char* what) {
  const auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(square))));
  if (d * d != square || d == 0) {
    std::ostringstream os;
    os << what << ": size " << square << " is not a perfect square";
    throw InvariantError(os.str());
  }
  return d;
}

}  // namespace detail

/// Full-rank density matrix: Hermitian, unit trace, eigenvalues >= the
/// positivity floor.
class DensityMatrix {
 public:
  explicit DensityMatrix(CMatrix entries) : rho_(std::move(entries)) {
    if (rho_.rows() == 0 || rho_.rows() != rho_.cols()) throw InvariantError("density matrix: must be square and nonempty");
    const double asym = detail::hermitian_asymmetry(rho_);
    if (!(asym <= 1e-10)) {
      std::ostringstream os;
      os << "density matrix: not Hermitian (asymmetry " << asym << ")";
      throw InvariantError(os.str());
    }
    rho_ = detail::hermitian_part(rho_);
    const double trace = rho_.trace().real();
    if (std::abs(trace - 1.0) > kNormTol) {
      std::ostringstream os;
      os.precision(17);
      os << "density matrix: trace " << trace << ", not 1";
      throw InvariantError(os.str());
    }
    const double smallest = detail::hermitian_eigenvalues(rho_).minCoeff();
    if (smallest < kPositivityFloor) {
      std::ostringstream os;
      os << "density matrix: eigenvalue " << smallest << " is below the positivity floor (rank deficient)";
      throw InvariantError(os.str());
    }
  }

  static DensityMatrix maximally_mixed(std::size_t d) {
    const auto n = static_cast<Eigen::Index>(d);
    return DensityMatrix(CMatrix::Identity(n, n) / static_cast<double>(d));
  }

  static DensityMatrix diagonal(const ProbabilityVector& p) {
    return DensityMatrix(p.values().cast<Complex>().asDiagonal().toDenseMatrix());
  }

  /// (1 + x sigma_x + y sigma_y + z sigma_z) / 2.
  static DensityMatrix qubit(double x, double y, double z) {
    if (x * x + y * y + z * z >= 1.0 - 1e-12) throw InvariantError("density matrix: Bloch vector outside the open unit ball");
    CMatrix m(2, 2);
    m << Complex(1.0 + z, 0.0), Complex(x, -y), Complex(x, y), Complex(1.0 - z, 0.0);
    return DensityMatrix(0.5 * m);
  }

  const CMatrix& matrix() const noexcept { return rho_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(rho_.rows()); }
  Vector eigenvalues() const { return detail::hermitian_eigenvalues(rho_); }

 private:
  CMatrix rho_;
};

/// d^2 x d^2 matrix of a Hermiticity-preserving linear map on d x d operators.
class Superoperator {
 public:
  explicit Superoperator(CMatrix s) : s_(std::move(s)) {
    if (s_.rows() != s_.cols()) throw InvariantError("superoperator: matrix must be square");
    d_ = detail::side_of(s_.rows(), "superoperator");
  }

  static Superoperator identity(std::size_t d) {
    const auto n = static_cast<Eigen::Index>(d * d);
    return Superoperator(CMatrix::Identity(n, n));
  }

  /// rho -> sum_k K_k rho K_k^dagger.
  static Superoperator from_kraus(const std::vector<CMatrix>& kraus) {
    if (kraus.empty()) throw InvariantError("superoperator: empty Kraus set");
    const auto d = kraus.front().rows();
    CMatrix s = CMatrix::Zero(d * d, d * d);
    for (const auto& k : kraus) {
      if (k.rows() != d || k.cols() != d) throw InvariantError("superoperator: Kraus operators must be square and equal-sized");
      s += detail::kron(k.conjugate(), k);
    }
    return Superoperator(std::move(s));
  }

  /// Builds the matrix column by column from the action on matrix units.
  template <class F>
  static Superoperator from_action(std::size_t d, F action) {
    const auto n = static_cast<Eigen::Index>(d);
    CMatrix s(n * n, n * n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        CMatrix unit = CMatrix::Zero(n, n);
        unit(i, j) = 1.0;
        s.col(i + j * n) = detail::vec(action(unit));
      }
    }
    return Superoperator(std::move(s));
  }

  const CMatrix& matrix() const noexcept { return s_; }
  /// Dimension d of the operators acted on.
  std::size_t dim() const noexcept { return static_cast<std::size_t>(d_); }

  CMatrix apply(const CMatrix& x) const {
    if (x.rows() != d_ || x.cols() != d_) throw InvariantError("superoperator: operand has the wrong dimension");
    return detail::unvec(s_ * detail::vec(x), d_);
  }
  CMatrix apply(const DensityMatrix& rho) const { return apply(rho.matrix()); }

  Superoperator adjoint() const { return Superoperator(s_.adjoint()); }

  Superoperator operator*(const Superoperator& other) const {
    if (other.d_ != d_) throw InvariantError("superoperator: composition of different dimensions");
    return Superoperator(s_ * other.s_);
  }

  CVector eigenvalues() const {
    Eigen::ComplexEigenSolver<CMatrix> es(s_, false);
    if (es.info() != Eigen::Success) throw ConvergenceError("superoperator: eigenvalue solver failed");
    return es.eigenvalues();
  }

  Complex determinant() const { return s_.determinant(); }

 private:
  CMatrix s_;
  Eigen::Index d_ = 0;
};

/// sum_{ij} E_ij (x) Psi(E_ij), unnormalized: its trace is d for trace-preserving
/// maps and 1 for the maps Psi J_pi with Psi trace preserving.
inline CMatrix choi_matrix(const Superoperator& psi) {
  const auto d = static_cast<Eigen::Index>(psi.dim());
  const CMatrix& s = psi.matrix();
  CMatrix c(d * d, d * d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index l = 0; l < d; ++l) c(i * d + k, j * d + l) = s(k + l * d, i + j * d);
  return c;
}

/// Tensor product Phi_A (x) Phi_B on the first and second factor.
inline Superoperator tensor(const Superoperator& a, const Superoperator& b) {
  const auto da = static_cast<Eigen::Index>(a.dim()), db = static_cast<Eigen::Index>(b.dim());
  return Superoperator::from_action(a.dim() * b.dim(), [&](const CMatrix& unit) {
    // unit = E_{ab} with a = a1 * db + a2: the product of E_{a1 b1} and E_{a2 b2}.
    Eigen::Index r = 0, c = 0;
    unit.cwiseAbs().maxCoeff(&r, &c);
    CMatrix ua = CMatrix::Zero(da, da), ub = CMatrix::Zero(db, db);
    ua(r / db, c / db) = 1.0;
    ub(r % db, c % db) = 1.0;
    return detail::kron(a.apply(ua), b.apply(ub));
  });
}

/// Unitary conjugation rho -> U rho U^dagger.
inline Superoperator unitary_channel(const CMatrix& u) { return Superoperator::from_kraus({u}); }

/// SWAP of two d-dimensional factors.
inline Superoperator swap_channel(std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  CMatrix u = CMatrix::Zero(n * n, n * n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) u(b * n + a, a * n + b) = 1.0;
  return unitary_channel(u);
}

struct CptpReport {
  bool holds = false;
  double choi_min_eigenvalue = 0.0;
  double choi_asymmetry = 0.0;
  double trace_preservation_error = 0.0;
};

inline CptpReport cptp_report(const Superoperator& s, double tol = kQuantumTol) {
  const CMatrix c = choi_matrix(s);
  const auto d = static_cast<Eigen::Index>(s.dim());
  CptpReport r;
  r.choi_asymmetry = detail::hermitian_asymmetry(c);
  r.choi_min_eigenvalue = detail::hermitian_eigenvalues(c).minCoeff();
  const CMatrix id = CMatrix::Identity(d, d);
  r.trace_preservation_error = (s.adjoint().apply(id) - id).cwiseAbs().maxCoeff();
  r.holds = r.choi_asymmetry <= kChoiAsymmetryTol && r.choi_min_eigenvalue >= -tol && r.trace_preservation_error <= tol;
  return r;
}

inline bool is_cptp(const Superoperator& s, double tol = kQuantumTol) { return cptp_report(s, tol).holds; }

/// rho -> sqrt(pi) rho sqrt(pi), or its inverse with inverse = true.
inline Superoperator j_superoperator(const DensityMatrix& pi, bool inverse = false) {
  const CMatrix root = detail::hermitian_function(pi.matrix(), [&](double x) { return inverse ? 1.0 / std::sqrt(x) : std::sqrt(x); });
  return Superoperator(detail::kron(root.transpose(), root));
}

/// J_pi^p: rho -> pi^{p/2} rho pi^{p/2}.
inline Superoperator j_power(const DensityMatrix& pi, double p) {
  const CMatrix half = detail::hermitian_function(pi.matrix(), [&](double x) { return std::pow(x, 0.5 * p); });
  return Superoperator(detail::kron(half.transpose(), half));
}

inline DensityMatrix apply_channel(const Superoperator& phi, const DensityMatrix& rho) {
  return DensityMatrix(phi.apply(rho));
}

/// J_pi Phi^dagger J_{Phi pi}^{-1}.
inline Superoperator petz_map(const Superoperator& phi, const DensityMatrix& pi) {
  require_same_dim(phi.dim(), pi.dim(), "petz_map");
  const auto report = cptp_report(phi);
  if (!report.holds) {
    std::ostringstream os;
    os << "petz_map: channel is not CPTP (Choi min eigenvalue " << report.choi_min_eigenvalue << ", trace error "
       << report.trace_preservation_error << ")";
    throw InvariantError(os.str());
  }
  const DensityMatrix image(phi.apply(pi));
  return j_superoperator(pi) * phi.adjoint() * j_superoperator(image, true);
}

/// || S J_pi - J_pi S^dagger ||_2 on the d^2-dimensional representation.
inline double quantum_detailed_balance_residual(const Superoperator& s, const DensityMatrix& pi) {
  require_same_dim(s.dim(), pi.dim(), "quantum_detailed_balance");
  const CMatrix j = j_superoperator(pi).matrix();
  const CMatrix diff = s.matrix() * j - j * s.matrix().adjoint();
  return Eigen::JacobiSVD<CMatrix>(diff).singularValues()(0);
}

inline bool quantum_detailed_balance_check(const Superoperator& s, const DensityMatrix& pi, double tol = kQuantumTol) {
  return quantum_detailed_balance_residual(s, pi) <= tol;
}

/// max over eigenvalues of max(-Re, |Im|), floored at zero.
inline double superoperator_spectrum_violation(const Superoperator& s) {
  double worst = 0.0;
  for (const auto& ev : s.eigenvalues()) worst = std::max({worst, -ev.real(), std::abs(ev.imag())});
  return worst;
}

inline Superoperator depolarizing_channel(double eta, std::size_t d) {
  if (d < 2) throw InvariantError("depolarizing_channel: dimension must be at least 2");
  const double dd = static_cast<double>(d);
  const double upper = 1.0 + 1.0 / (dd * dd - 1.0);
  if (!(eta >= 0.0 && eta <= upper + 1e-15)) {
    std::ostringstream os;
    os << "depolarizing_channel: eta = " << eta << " outside [0, " << upper << "]";
    throw InvariantError(os.str());
  }
  const auto n = static_cast<Eigen::Index>(d);
  const CVector one = detail::vec(CMatrix::Identity(n, n));
  return Superoperator((1.0 - eta) * CMatrix::Identity(n * n, n * n) + (eta / dd) * one * one.adjoint());
}

/// Largest |beta * epsilon| actually used: the cap, further limited so the
/// smaller population stays above twice the positivity floor.
inline double effective_beta_epsilon_cap() { return std::min(kMaxBetaEpsilon, std::log(0.5 / kPositivityFloor)); }

/// Qubit Gibbs state of H = epsilon |1><1|, with beta * epsilon clipped to
/// +-effective_beta_epsilon_cap() to keep it full rank.
inline DensityMatrix gibbs_state(double beta_epsilon) {
  const double cap = effective_beta_epsilon_cap();
  const double x = std::clamp(beta_epsilon, -cap, cap);
  const double w = std::exp(-x);
  CMatrix g = CMatrix::Zero(2, 2);
  g(0, 0) = 1.0 / (1.0 + w);
  g(1, 1) = w / (1.0 + w);
  return DensityMatrix(g);
}

/// rho -> (1 - lambda) rho + lambda Tr[rho] gamma.
inline Superoperator thermalizing_channel(double lambda, const DensityMatrix& gamma) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvariantError("thermalizing_channel: lambda outside [0, 1]");
  const auto d = static_cast<Eigen::Index>(gamma.dim());
  const CVector one = detail::vec(CMatrix::Identity(d, d));
  return Superoperator((1.0 - lambda) * CMatrix::Identity(d * d, d * d) + lambda * detail::vec(gamma.matrix()) * one.adjoint());
}

/// Two-qubit channel rho_A (x) rho_B -> theta_{lambda1}(rho_B) (x) theta_{lambda2}(rho_A),
/// i.e. (theta_{lambda1} (x) theta_{lambda2}) composed after SWAP.
inline Superoperator thermal_swap_channel(double lambda1, double lambda2, double beta_epsilon) {
  const auto gamma = gibbs_state(beta_epsilon);
  return tensor(thermalizing_channel(lambda1, gamma), thermalizing_channel(lambda2, gamma)) * swap_channel(2);
}

inline DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b) {
  return DensityMatrix(detail::kron(a.matrix(), b.matrix()));
}

/// Diagonal embedding of a classical channel: Kraus operators sqrt(M_ij) |i><j|.
inline Superoperator classical_channel(const StochasticMatrix& m) {
  const auto n = static_cast<Eigen::Index>(m.dim());
  std::vector<CMatrix> kraus;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (m.matrix()(i, j) <= 0.0) continue;
      CMatrix k = CMatrix::Zero(n, n);
      k(i, j) = std::sqrt(m.matrix()(i, j));
      kraus.push_back(std::move(k));
    }
  }
  return Superoperator::from_kraus(kraus);
}

struct TheoremVerdict {
  bool holds = false;
  double spectrum_violation = 0.0;
  double detailed_balance_residual = 0.0;
  /// det(Phi): the optimal determinant when the conditions hold.
  double determinant = 0.0;
};

/// Positive spectrum and Phi J_pi = J_pi Phi^dagger: then the identity is the
/// optimal retrieval. Requires Phi(pi) = pi so the identity is admissible.
inline TheoremVerdict theorem_conditions(const Superoperator& phi, const DensityMatrix& pi, double tol = kQuantumTol) {
  require_same_dim(phi.dim(), pi.dim(), "theorem_conditions");
  if (!is_cptp(phi, tol)) throw InvariantError("theorem_conditions: channel is not CPTP");
  const double drift = (phi.apply(pi) - pi.matrix()).cwiseAbs().maxCoeff();
  if (drift > tol) {
    std::ostringstream os;
    os << "theorem_conditions: prior is not a fixed point (drift " << drift << ")";
    throw InvariantError(os.str());
  }
  TheoremVerdict v;
  v.spectrum_violation = superoperator_spectrum_violation(phi);
  v.detailed_balance_residual = quantum_detailed_balance_residual(phi, pi);
  v.determinant = phi.determinant().real();
  v.holds = v.spectrum_violation <= tol && v.detailed_balance_residual <= tol;
  return v;
}

struct QuantumAxiomReport {
  AxiomCheck cptp;
  /// Vacuous unless the forward channel is unitary.
  AxiomCheck unitary_inverse;
  AxiomCheck prior_retrieved;
  AxiomCheck detailed_balance;
  AxiomCheck nonneg_spectrum;
  bool all_hold() const {
    return cptp.holds && unitary_inverse.holds && prior_retrieved.holds && detailed_balance.holds && nonneg_spectrum.holds;
  }
};

inline QuantumAxiomReport check_quantum_axioms(const Superoperator& retrieval, const Superoperator& phi,
                                               const DensityMatrix& pi, double tol = kQuantumTol) {
  require_same_dim(retrieval.dim(), phi.dim(), "check_quantum_axioms");
  require_same_dim(phi.dim(), pi.dim(), "check_quantum_axioms");
  QuantumAxiomReport r;
  const auto cp = cptp_report(retrieval, tol);
  r.cptp = {cp.holds, std::max({-cp.choi_min_eigenvalue, cp.trace_preservation_error, 0.0}),
            cp.holds ? "" : "Choi matrix not PSD or trace not preserved"};

  const CMatrix& s = phi.matrix();
  const double unitarity = (s * s.adjoint() - CMatrix::Identity(s.rows(), s.cols())).cwiseAbs().maxCoeff();
  if (unitarity <= tol && is_cptp(phi, tol)) {
    const double gap = (retrieval.matrix() - s.adjoint()).cwiseAbs().maxCoeff();
    r.unitary_inverse = {gap <= tol, gap, gap <= tol ? "" : "channel is unitary but the retrieval is not its inverse"};
  } else {
    r.unitary_inverse = {true, 0.0, "channel is not unitary"};
  }

  const double miss = (retrieval.apply(phi.apply(pi)) - pi.matrix()).cwiseAbs().maxCoeff();
  r.prior_retrieved = {miss <= tol, miss, miss <= tol ? "" : "prior is not retrieved"};

  const Superoperator composite = retrieval * phi;
  const double db = quantum_detailed_balance_residual(composite, pi);
  r.detailed_balance = {db <= tol, db, db <= tol ? "" : "composite is not detailed balanced"};

  const double spec = superoperator_spectrum_violation(composite);
  r.nonneg_spectrum = {spec <= tol, spec, spec <= tol ? "" : "composite has a negative or complex eigenvalue"};
  return r;
}

/// 1/2 Tr[rho^{-1/2} (rho - sigma) sigma^{-1/2} (rho - sigma)].
inline double h_sq_contrast(const DensityMatrix& rho, const DensityMatrix& sigma) {
  require_same_dim(rho.dim(), sigma.dim(), "h_sq_contrast");
  const CMatrix a = detail::hermitian_function(rho.matrix(), [](double x) { return 1.0 / std::sqrt(x); });
  const CMatrix b = detail::hermitian_function(sigma.matrix(), [](double x) { return 1.0 / std::sqrt(x); });
  const CMatrix diff = rho.matrix() - sigma.matrix();
  return std::max(0.0, 0.5 * (a * diff * b * diff).trace().real());
}

/// 1/2 sum |eigenvalues of rho - sigma|.
inline double trace_distance(const CMatrix& rho, const CMatrix& sigma) {
  if (rho.rows() != sigma.rows() || rho.cols() != sigma.cols()) throw InvariantError("trace_distance: dimension mismatch");
  if (detail::hermitian_asymmetry(rho) > 1e-10 || detail::hermitian_asymmetry(sigma) > 1e-10)
    throw InvariantError("trace_distance: inputs must be Hermitian");
  return 0.5 * detail::hermitian_eigenvalues(rho - sigma).cwiseAbs().sum();
}

inline double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma) {
  return trace_distance(rho.matrix(), sigma.matrix());
}

/// Ginibre-distributed full-rank state.
inline DensityMatrix random_density_matrix(std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal;
  const auto n = static_cast<Eigen::Index>(d);
  CMatrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = Complex(normal(rng), normal(rng));
  CMatrix rho = g * g.adjoint();
  rho /= rho.trace().real();
  rho += 1e-9 * CMatrix::Identity(n, n);
  return DensityMatrix(detail::hermitian_part(rho / rho.trace().real()));
}

/// Channel from a random isometry with kraus_count Kraus operators.
inline Superoperator random_channel(std::size_t d, std::size_t kraus_count, Rng& rng) {
  std::normal_distribution<double> normal;
  const auto n = static_cast<Eigen::Index>(d);
  const auto k = static_cast<Eigen::Index>(kraus_count);
  CMatrix g(n * k, n);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = Complex(normal(rng), normal(rng));
  const CMatrix inv_root = detail::hermitian_function(g.adjoint() * g, [](double x) { return 1.0 / std::sqrt(x); });
  const CMatrix v = g * inv_root;
  std::vector<CMatrix> kraus;
  for (Eigen::Index b = 0; b < k; ++b) kraus.push_back(v.block(b * n, 0, n, n));
  return Superoperator::from_kraus(kraus);
}

inline CMatrix random_unitary(std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal;
  const auto n = static_cast<Eigen::Index>(d);
  CMatrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = Complex(normal(rng), normal(rng));
  Eigen::HouseholderQR<CMatrix> qr(g);
  return qr.householderQ() * CMatrix::Identity(n, n);
}

// ---------------------------------------------------------------------------
// Qubit channels in Bloch form: rho(r) -> rho(T r + t).

struct BlochForm {
  Eigen::Matrix3d matrix;
  Eigen::Vector3d translation;
};

namespace detail {

inline std::array<CMatrix, 4> pauli() {
  std::array<CMatrix, 4> s;
  for (auto& m : s) m = CMatrix::Zero(2, 2);
  s[0] << 1, 0, 0, 1;
  s[1] << 0, 1, 1, 0;
  s[2] << 0, Complex(0, -1), Complex(0, 1), 0;
  s[3] << 1, 0, 0, -1;
  return s;
}

}  // namespace detail

inline BlochForm to_bloch(const Superoperator& s) {
  if (s.dim() != 2) throw InvariantError("to_bloch: not a qubit superoperator");
  const auto p = detail::pauli();
  BlochForm b;
  for (int i = 0; i < 3; ++i) {
    b.translation[i] = 0.5 * (p[static_cast<std::size_t>(i + 1)] * s.apply(p[0])).trace().real();
    for (int j = 0; j < 3; ++j)
      b.matrix(i, j) = 0.5 * (p[static_cast<std::size_t>(i + 1)] * s.apply(p[static_cast<std::size_t>(j + 1)])).trace().real();
  }
  return b;
}

inline Superoperator from_bloch(const BlochForm& b) {
  const auto p = detail::pauli();
  return Superoperator::from_action(2, [&](const CMatrix& x) {
    // x = 1/2 sum_mu Tr[sigma_mu x] sigma_mu, then map each Pauli.
    CMatrix out = CMatrix::Zero(2, 2);
    const Complex c0 = 0.5 * (p[0] * x).trace();
    out += c0 * p[0];
    for (int i = 0; i < 3; ++i) out += c0 * b.translation[i] * p[static_cast<std::size_t>(i + 1)];
    for (int j = 0; j < 3; ++j) {
      const Complex cj = 0.5 * (p[static_cast<std::size_t>(j + 1)] * x).trace();
      for (int i = 0; i < 3; ++i) out += cj * b.matrix(i, j) * p[static_cast<std::size_t>(i + 1)];
    }
    return out;
  });
}

struct QubitOptimum {
  Superoperator map;
  BlochForm bloch;
  /// det of the composite Bloch matrix, equal to det(retrieval * phi).
  double determinant = 0.0;
  double petz_determinant = 0.0;
  int feasible_starts = 0;
};

namespace detail {

// Maximize log det G over symmetric G with the retrieval A = G T^{-1},
// a = -A t completely positive. The Choi matrix is affine in G, so this is a
// concave log-det problem over an LMI, solved by a barrier Newton method.
class QubitMaxDet {
 public:
  QubitMaxDet(const Eigen::Matrix3d& t_inv, const Eigen::Vector3d& t) : t_inv_(t_inv), t_(t) {
    basis_.clear();
    for (int i = 0; i < 3; ++i) {
      for (int j = i; j < 3; ++j) {
        Eigen::Matrix3d b = Eigen::Matrix3d::Zero();
        b(i, j) = 1.0;
        b(j, i) = 1.0;
        basis_.push_back(b);
      }
    }
    c0_ = choi_of(Eigen::Matrix3d::Zero());
    for (const auto& b : basis_) ck_.push_back(choi_of(b) - c0_);
  }

  Eigen::Matrix3d g_of(const Vector& g) const {
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
    for (std::size_t k = 0; k < basis_.size(); ++k) m += 0.5 * g[static_cast<Eigen::Index>(k)] * basis_[k];
    return m;
  }

  Vector coords(const Eigen::Matrix3d& m) const {
    Vector g(6);
    std::size_t k = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) g[static_cast<Eigen::Index>(k++)] = 2.0 * m(i, j);
    return g;
  }

  CMatrix choi(const Vector& g) const {
    CMatrix c = c0_;
    for (std::size_t k = 0; k < ck_.size(); ++k) c += 0.5 * g[static_cast<Eigen::Index>(k)] * ck_[k];
    return c;
  }

  BlochForm retrieval(const Eigen::Matrix3d& g) const {
    const Eigen::Matrix3d a = g * t_inv_;
    return {a, -a * t_};
  }

  std::optional<double> barrier_value(const Vector& g, double mu) const {
    Eigen::LLT<Eigen::Matrix3d> lg(g_of(g));
    if (lg.info() != Eigen::Success) return std::nullopt;
    Eigen::LLT<CMatrix> lc(hermitian_part(choi(g)));
    if (lc.info() != Eigen::Success) return std::nullopt;
    double v = 0.0;
    for (int i = 0; i < 3; ++i) v += 2.0 * std::log(lg.matrixL()(i, i));
    double w = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i) w += 2.0 * std::log(lc.matrixL()(i, i).real());
    return v + mu * w;
  }

  // Damped Newton ascent at fixed mu.
  void newton(Vector& g, double mu) const {
    for (int iter = 0; iter < 200; ++iter) {
      const Eigen::Matrix3d gi = g_of(g).inverse();
      const CMatrix ci = hermitian_part(choi(g)).inverse();
      Vector grad(6);
      Matrix hess(6, 6);
      std::vector<Eigen::Matrix3d> gb(6);
      std::vector<CMatrix> cb(6);
      for (int k = 0; k < 6; ++k) {
        gb[static_cast<std::size_t>(k)] = gi * (0.5 * basis_[static_cast<std::size_t>(k)]);
        cb[static_cast<std::size_t>(k)] = ci * (0.5 * ck_[static_cast<std::size_t>(k)]);
        grad[k] = gb[static_cast<std::size_t>(k)].trace() + mu * cb[static_cast<std::size_t>(k)].trace().real();
      }
      for (int k = 0; k < 6; ++k)
        for (int l = 0; l < 6; ++l)
          hess(k, l) = -(gb[static_cast<std::size_t>(k)] * gb[static_cast<std::size_t>(l)]).trace() -
                       mu * (cb[static_cast<std::size_t>(k)] * cb[static_cast<std::size_t>(l)]).trace().real();
      const Vector step = hess.ldlt().solve(-grad);
      const double decrement = grad.dot(step);
      if (!(decrement > 0.0) || 0.5 * std::abs(decrement) <= 1e-14) return;
      const double f0 = *barrier_value(g, mu);
      double s = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls, s *= 0.5) {
        const Vector trial = g + s * step;
        const auto f = barrier_value(trial, mu);
        if (f && *f >= f0 + 0.25 * s * decrement) {
          g = trial;
          moved = true;
          break;
        }
      }
      if (!moved) return;
    }
  }

  Vector solve(Vector g) const {
    for (double mu = 1.0; mu >= 1e-12; mu *= 0.2) newton(g, mu);
    return g;
  }

 private:
  CMatrix choi_of(const Eigen::Matrix3d& g) const { return choi_matrix(from_bloch(retrieval(g))); }

  Eigen::Matrix3d t_inv_;
  Eigen::Vector3d t_;
  std::vector<Eigen::Matrix3d> basis_;
  CMatrix c0_;
  std::vector<CMatrix> ck_;
};

}  // namespace detail

/// Determinant-maximizing retrieval of a qubit channel for the prior 1/2,
/// searched over qubit channels in Bloch form. The best of `starts` barrier
/// Newton runs is returned; each start mixes the Petz map with the
/// completely depolarizing map plus a seeded random symmetric perturbation.
inline QubitOptimum qubit_optimal_retrieval(const Superoperator& phi, int starts = 32, std::uint64_t seed = 0x9b17) {
  if (phi.dim() != 2) throw InvariantError("qubit_optimal_retrieval: channel must act on a qubit");
  const auto prior = DensityMatrix::maximally_mixed(2);
  const Superoperator petz = petz_map(phi, prior);
  const BlochForm fwd = to_bloch(phi);
  const double petz_det = to_bloch(petz * phi).matrix.determinant();
  Eigen::FullPivLU<Eigen::Matrix3d> lu(fwd.matrix);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    // Every admissible composite is singular; all retrievals tie at zero.
    return {petz, to_bloch(petz), petz_det, petz_det, 0};
  }
  const detail::QubitMaxDet solver(fwd.matrix.inverse(), fwd.translation);
  Eigen::Matrix3d g_petz = to_bloch(petz * phi).matrix;
  g_petz = 0.5 * (g_petz + g_petz.transpose()).eval();
  const Vector base = solver.coords(g_petz);

  std::optional<Vector> best;
  double best_det = -std::numeric_limits<double>::infinity();
  int feasible = 0;
  for (int k = 0; k < starts; ++k) {
    Rng rng(seed + static_cast<std::uint64_t>(k));
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const double mix = 0.05 + 0.9 * static_cast<double>(k) / std::max(1, starts - 1);
    Vector start = (1.0 - mix) * base;
    Vector bump(6);
    for (auto& x : bump) x = unif(rng);
    double scale = 0.5 * mix;
    while (scale > 1e-6 && !solver.barrier_value(start + scale * bump, 1.0)) scale *= 0.5;
    if (scale > 1e-6) start += scale * bump;
    if (!solver.barrier_value(start, 1.0)) continue;
    const Vector g = solver.solve(start);
    const BlochForm candidate = solver.retrieval(solver.g_of(g));
    const Superoperator map = from_bloch(candidate);
    if (!check_quantum_axioms(map, phi, prior).all_hold()) continue;
    ++feasible;
    const double det = solver.g_of(g).determinant();
    if (det > best_det) {
      best_det = det;
      best = g;
    }
  }
  if (!best || best_det < petz_det) {
    if (!best && !check_quantum_axioms(petz, phi, prior).all_hold())
      throw ConvergenceError("qubit_optimal_retrieval: no feasible candidate found");
    return {petz, to_bloch(petz), petz_det, petz_det, feasible};
  }
  const BlochForm bloch = solver.retrieval(solver.g_of(*best));
  return {from_bloch(bloch), bloch, best_det, petz_det, feasible};
}

// ---------------------------------------------------------------------------
// Bounds with the H_sq contrast.

struct QuantumBoundReports {
  BoundReport local_prior;
  BoundReport contraction;
};

namespace detail {

inline double trace_norm(const CMatrix& h) { return hermitian_eigenvalues(h).cwiseAbs().sum(); }

inline double log_det_inverse(const Superoperator& m) {
  const Complex det = m.determinant();
  if (!(det.real() > 0.0) || std::abs(det.imag()) > 1e-9 * std::abs(det.real()))
    return std::numeric_limits<double>::infinity();
  return -std::log(det.real());
}

inline double h_sq_ratio(const Superoperator& m, const DensityMatrix& rho, const DensityMatrix& sigma) {
  const double before = h_sq_contrast(rho, sigma);
  if (!(before > 1e-12)) return std::numeric_limits<double>::quiet_NaN();
  try {
    const DensityMatrix mr(m.apply(rho)), ms(m.apply(sigma));
    return (before - h_sq_contrast(mr, ms)) / before;
  } catch (const InvariantError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace detail

/// H_sq(pi + d || M(pi + d)) against 1/2 H_sq(pi || pi + d) log det(M)^{-1}
/// (allowance c |d|_1^2 dim), and the sampled infimum over pairs of the H_sq
/// contraction ratio of M against 2 log det(M)^{-1}. Pairs are random states
/// plus pairs straddling pi along each eigenvector of M.
inline QuantumBoundReports quantum_bound_reports(const Superoperator& retrieval, const Superoperator& phi,
                                                 const DensityMatrix& pi, const CMatrix& delta, std::size_t pair_count,
                                                 std::uint64_t seed) {
  require_same_dim(retrieval.dim(), phi.dim(), "quantum_bound_reports");
  require_same_dim(phi.dim(), pi.dim(), "quantum_bound_reports");
  const Superoperator m = retrieval * phi;
  const double log_det_inv = detail::log_det_inverse(m);
  const auto d = static_cast<Eigen::Index>(pi.dim());

  if (delta.rows() != d || delta.cols() != d) throw InvariantError("quantum_bound_reports: perturbation has the wrong dimension");
  if (detail::hermitian_asymmetry(delta) > 1e-12) throw InvariantError("quantum_bound_reports: perturbation is not Hermitian");
  if (std::abs(delta.trace()) > kNormTol) throw InvariantError("quantum_bound_reports: perturbation is not traceless");
  const double size = detail::trace_norm(delta);
  if (size > 1e-3) throw InvariantError("quantum_bound_reports: |delta|_1 must not exceed 1e-3");
  const DensityMatrix moved(pi.matrix() + delta);
  const double local_lhs = h_sq_contrast(moved, DensityMatrix(m.apply(moved)));
  const double local_rhs = 0.5 * h_sq_contrast(pi, moved) * log_det_inv;
  QuantumBoundReports out;
  out.local_prior = detail::make_report(local_lhs, local_rhs, kSecondOrderConstant * size * size * static_cast<double>(d));

  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](const DensityMatrix& a, const DensityMatrix& b) {
    const double r = detail::h_sq_ratio(m, a, b);
    if (std::isfinite(r)) best = std::min(best, r);
  };
  Rng rng(seed);
  for (std::size_t k = 0; k < pair_count; ++k) {
    const auto a = random_density_matrix(pi.dim(), rng);
    const auto b = random_density_matrix(pi.dim(), rng);
    consider(a, b);
  }
  Eigen::ComplexEigenSolver<CMatrix> es(m.matrix());
  const double floor = detail::hermitian_eigenvalues(pi.matrix()).minCoeff();
  for (Eigen::Index k = 0; k < es.eigenvectors().cols(); ++k) {
    CMatrix h = detail::hermitian_part(detail::unvec(es.eigenvectors().col(k), d));
    h -= (h.trace() / static_cast<double>(d)) * CMatrix::Identity(d, d);
    const double norm = detail::trace_norm(h);
    if (norm < 1e-12) continue;
    h *= 0.25 * floor / norm;
    for (double scale : {1.0, 1e-2}) {
      try {
        consider(DensityMatrix(pi.matrix() + scale * h), DensityMatrix(pi.matrix() - scale * h));
      } catch (const InvariantError&) {
      }
    }
  }
  out.contraction = detail::make_report(best, 2.0 * log_det_inv, kBoundTol,
                                        "lhs is a sampled infimum (an upper bound on the true infimum)");
  return out;
}

/// Checks tr_B[C] = pi^T, tr_A[C] = sigma and C PSD for the Choi matrix C of
/// Lambda: membership of Lambda in U_Q(sigma, pi).
inline bool choi_marginal_check(const Superoperator& lambda, const DensityMatrix& sigma, const DensityMatrix& pi,
                                double tol = kQuantumTol) {
  require_same_dim(lambda.dim(), pi.dim(), "choi_marginal_check");
  require_same_dim(sigma.dim(), pi.dim(), "choi_marginal_check");
  const auto d = static_cast<Eigen::Index>(pi.dim());
  const CMatrix c = choi_matrix(lambda);
  if (detail::hermitian_asymmetry(c) > kChoiAsymmetryTol) return false;
  if (detail::hermitian_eigenvalues(c).minCoeff() < -tol) return false;
  CMatrix tr_b = CMatrix::Zero(d, d), tr_a = CMatrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index k = 0; k < d; ++k) {
        tr_b(i, j) += c(i * d + k, j * d + k);
        tr_a(i, j) += c(k * d + i, k * d + j);
      }
    }
  }
  return (tr_b - pi.matrix().transpose()).cwiseAbs().maxCoeff() <= tol &&
         (tr_a - sigma.matrix()).cwiseAbs().maxCoeff() <= tol;
}

// ---------------------------------------------------------------------------
// Figure data.

enum class FigureCase { fig2, fig3, fig4 };

struct FigureTable {
  std::vector<std::string> columns;
  /// Optional string label per row (first CSV column when present).
  std::vector<std::string> labels;
  Matrix values;
};

struct FigureParameters {
  /// Grid points per axis over [-1, 1] for the disk sweeps.
  int grid = 21;
  double eta = 0.5;
  double lambda1 = 0.3;
  double lambda2 = 0.6;
  double beta_epsilon = 1.0;
  /// Points on the Bloch sphere for the fig4 clouds.
  int sphere_points = 200;
};

/// The fig4 channel: Bloch vectors compressed by 1/2 and translated by 0.4 along z.
inline Superoperator compression_translation_channel() {
  BlochForm b{0.5 * Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.0, 0.0, 0.4)};
  return from_bloch(b);
}

namespace detail {

inline Eigen::Vector3d bloch_vector(const CMatrix& rho) {
  const auto p = pauli();
  return {(p[1] * rho).trace().real(), (p[2] * rho).trace().real(), (p[3] * rho).trace().real()};
}

}  // namespace detail

/// fig2/fig3: rows (x, y, petz, optimal) with the trace distance between rho
/// and its forth-and-back image, over grid points strictly inside the unit
/// disk. fig4: labelled Bloch point clouds of the sphere under phi, the two
/// retrievals and their composites with phi.
inline FigureTable figure_sweep(FigureCase which, const FigureParameters& params = {}) {
  FigureTable table;
  if (which == FigureCase::fig4) {
    if (params.sphere_points < 1) throw InvariantError("figure_sweep: sphere_points must be positive");
    const Superoperator phi = compression_translation_channel();
    const auto petz = petz_map(phi, DensityMatrix::maximally_mixed(2));
    const auto opt = qubit_optimal_retrieval(phi).map;
    const std::vector<std::pair<std::string, Superoperator>> maps{
        {"phi", phi}, {"petz", petz}, {"optimal", opt}, {"petz_phi", petz * phi}, {"optimal_phi", opt * phi}};
    table.columns = {"map", "x", "y", "z"};
    const int n = params.sphere_points;
    table.values.resize(static_cast<Eigen::Index>(maps.size()) * n, 3);
    Eigen::Index row = 0;
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (const auto& [name, map] : maps) {
      const BlochForm b = to_bloch(map);
      for (int k = 0; k < n; ++k) {
        const double z = 1.0 - 2.0 * (k + 0.5) / n;
        const double r = std::sqrt(1.0 - z * z);
        const Eigen::Vector3d point(r * std::cos(golden * k), r * std::sin(golden * k), z);
        table.values.row(row++) = (b.matrix * point + b.translation).transpose();
        table.labels.push_back(name);
      }
    }
    return table;
  }

  if (params.grid < 2) throw InvariantError("figure_sweep: grid must have at least 2 points per axis");
  Superoperator phi = Superoperator::identity(2);
  Superoperator petz_back = phi, opt_back = phi;
  std::optional<DensityMatrix> gamma;
  if (which == FigureCase::fig2) {
    phi = depolarizing_channel(params.eta, 2);
    petz_back = petz_map(phi, DensityMatrix::maximally_mixed(2)) * phi;
    opt_back = phi;  // the identity retrieval
  } else {
    gamma = gibbs_state(params.beta_epsilon);
    phi = thermal_swap_channel(params.lambda1, params.lambda2, params.beta_epsilon);
    petz_back = petz_map(phi, tensor(*gamma, *gamma)) * phi;
    opt_back = swap_channel(2) * phi;
  }
  table.columns = {"x", "y", "petz", "optimal"};
  std::vector<Eigen::RowVector4d> rows;
  for (int i = 0; i < params.grid; ++i) {
    for (int j = 0; j < params.grid; ++j) {
      const double x = -1.0 + 2.0 * i / (params.grid - 1);
      const double y = -1.0 + 2.0 * j / (params.grid - 1);
      if (x * x + y * y >= 1.0 - 1e-9) continue;
      const auto q = DensityMatrix::qubit(x, y, 0.0);
      const DensityMatrix rho = gamma ? tensor(q, *gamma) : q;
      rows.emplace_back(x, y, trace_distance(rho.matrix(), petz_back.apply(rho)),
                        trace_distance(rho.matrix(), opt_back.apply(rho)));
    }
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()), 4);
  for (std::size_t r = 0; r < rows.size(); ++r) table.values.row(static_cast<Eigen::Index>(r)) = rows[r];
  return table;
}

}  // namespace retrieval
