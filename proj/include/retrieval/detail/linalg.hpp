#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <optional>

namespace retrieval::detail {

inline Eigen::MatrixXd symmetric_part(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

inline double asymmetry(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : (m - m.transpose()).cwiseAbs().maxCoeff();
}

/// Orthonormal basis of ker(m), rank decided relative to the largest singular value.
inline Eigen::MatrixXd null_space(const Eigen::MatrixXd& m, double rel_tol = 1e-10) {
  const auto cols = m.cols();
  if (m.rows() == 0) return Eigen::MatrixXd::Identity(cols, cols);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cutoff = rel_tol * std::max(1.0, s.size() ? s[0] : 0.0);
  Eigen::Index rank = 0;
  while (rank < s.size() && s[rank] > cutoff) ++rank;
  return svd.matrixV().rightCols(cols - rank);
}

/// Least-norm solution of m x = rhs.
inline Eigen::VectorXd least_norm_solve(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(m);
  cod.setThreshold(1e-12);
  return cod.solve(rhs);
}

/// log det of a symmetric matrix if it is positive definite.
inline std::optional<double> log_det_pd(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(symmetric_part(m));
  if (llt.info() != Eigen::Success) return std::nullopt;
  const auto d = llt.matrixLLT().diagonal();
  if ((d.array() <= 0.0).any()) return std::nullopt;
  return 2.0 * d.array().log().sum();
}

inline double min_eigenvalue_symmetric(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetric_part(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace retrieval::detail
