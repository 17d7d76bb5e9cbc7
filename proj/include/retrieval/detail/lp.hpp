#pragma once

// Dense two-phase simplex for max c.x subject to A x = b, x >= 0. Sized for
// the few-dozen-variable problems that arise for small polytopes.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace retrieval::detail {

enum class LpStatus { optimal, infeasible, unbounded };

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  Eigen::VectorXd x;
  double value = 0.0;
};

class SimplexTableau {
 public:
  static constexpr double kPivotTol = 1e-11;

  // Columns: n structural, m artificial, right-hand side. Constraint rows come
  // first and the objective row is last.
  SimplexTableau(const Eigen::MatrixXd& a, const Eigen::VectorXd& b)
      : n_(a.cols()), art_(a.rows()), rhs_(a.cols() + a.rows()) {
    t_ = Eigen::MatrixXd::Zero(art_ + 1, rhs_ + 1);
    for (Eigen::Index i = 0; i < art_; ++i) {
      const double sign = b[i] < 0.0 ? -1.0 : 1.0;
      t_.row(i).head(n_) = sign * a.row(i);
      t_(i, n_ + i) = 1.0;
      t_(i, rhs_) = sign * b[i];
      basis_.push_back(n_ + i);
    }
  }

  LpResult maximize(const Eigen::VectorXd& c) {
    Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(rhs_);
    phase1.tail(art_).setConstant(-1.0);
    set_objective(phase1);
    if (!iterate(rhs_) || -t_(obj(), rhs_) > 1e-9) return {};
    drive_out_artificials();

    Eigen::VectorXd phase2 = Eigen::VectorXd::Zero(rhs_);
    phase2.head(n_) = c;
    set_objective(phase2);
    LpResult r;
    if (!iterate(n_)) {
      r.status = LpStatus::unbounded;
      return r;
    }
    r.status = LpStatus::optimal;
    r.x = Eigen::VectorXd::Zero(n_);
    for (std::size_t i = 0; i < basis_.size(); ++i)
      if (basis_[i] < n_) r.x[basis_[i]] = std::max(0.0, t_(static_cast<Eigen::Index>(i), rhs_));
    r.value = c.dot(r.x);
    return r;
  }

 private:
  Eigen::Index obj() const { return static_cast<Eigen::Index>(basis_.size()); }

  // Stores -w minus its basic combination, so entering columns are negative.
  void set_objective(const Eigen::VectorXd& w) {
    t_.row(obj()).setZero();
    t_.row(obj()).head(rhs_) = -w.transpose();
    for (Eigen::Index i = 0; i < obj(); ++i) {
      const double coef = t_(obj(), basis_[static_cast<std::size_t>(i)]);
      if (coef != 0.0) t_.row(obj()) -= coef * t_.row(i);
    }
  }

  void pivot(Eigen::Index row, Eigen::Index col) {
    t_.row(row) /= t_(row, col);
    for (Eigen::Index i = 0; i <= obj(); ++i) {
      if (i == row) continue;
      const double f = t_(i, col);
      if (f != 0.0) t_.row(i) -= f * t_.row(row);
    }
    basis_[static_cast<std::size_t>(row)] = col;
  }

  // Bland's rule over the first `allowed` columns; false means unbounded.
  bool iterate(Eigen::Index allowed) {
    for (int guard = 0; guard < 100000; ++guard) {
      Eigen::Index enter = -1;
      for (Eigen::Index j = 0; j < allowed && enter < 0; ++j)
        if (t_(obj(), j) < -kPivotTol) enter = j;
      if (enter < 0) return true;
      Eigen::Index leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < obj(); ++i) {
        const double a = t_(i, enter);
        if (a <= kPivotTol) continue;
        const double ratio = t_(i, rhs_) / a;
        const bool tie = leave >= 0 && std::abs(ratio - best) <= 1e-14;
        if ((!tie && ratio < best) ||
            (tie && basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
    return false;
  }

  // Artificials still basic (at level zero) are pivoted onto a structural
  // column; a row with no structural entry left is redundant and dropped.
  void drive_out_artificials() {
    for (Eigen::Index i = obj() - 1; i >= 0; --i) {
      if (basis_[static_cast<std::size_t>(i)] < n_) continue;
      Eigen::Index col = -1;
      for (Eigen::Index j = 0; j < n_ && col < 0; ++j)
        if (std::abs(t_(i, j)) > 1e-9) col = j;
      if (col >= 0) {
        pivot(i, col);
        continue;
      }
      Eigen::MatrixXd kept(t_.rows() - 1, t_.cols());
      kept.topRows(i) = t_.topRows(i);
      kept.bottomRows(t_.rows() - 1 - i) = t_.bottomRows(t_.rows() - 1 - i);
      t_ = std::move(kept);
      basis_.erase(basis_.begin() + i);
    }
  }

  Eigen::Index n_;
  Eigen::Index art_;
  Eigen::Index rhs_;
  Eigen::MatrixXd t_;
  std::vector<Eigen::Index> basis_;
};

inline LpResult maximize_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  return SimplexTableau(a, b).maximize(c);
}

}  // namespace retrieval::detail
