#pragma once

// Involutive reversion: which permutations R of the coefficient vector can
// map a retrieval back onto the forward map. A pairing (i, j) of vertices is
// admissible only if both X_{i,j} and Y_{i,j} are positive semidefinite.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "retrieval/core.hpp"
#include "retrieval/detail/linalg.hpp"
#include "retrieval/polytope.hpp"
#include "retrieval/random.hpp"

namespace retrieval {

inline constexpr double kPsdTol = 1e-10;
/// Asymmetry above which a candidate matrix is not PSD.
inline constexpr double kPsdAsymmetryTol = 1e-9;

using BoolGrid = std::vector<std::vector<bool>>;

struct InvolutionScan {
  ProbabilityVector pi;
  ProbabilityVector image_prior;
  std::size_t vertex_count = 0;
  BoolGrid x_psd;
  BoolGrid y_psd;
  BoolGrid joint_psd;
  std::size_t permutation_prefix_length = 0;

  /// Off-diagonal jointly PSD entries among the non-permutation vertices.
  std::vector<std::pair<std::size_t, std::size_t>> off_diagonal_joint() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = permutation_prefix_length; i < vertex_count; ++i)
      for (std::size_t j = permutation_prefix_length; j < vertex_count; ++j)
        if (i != j && joint_psd[i][j]) out.emplace_back(i, j);
    return out;
  }

  /// The only admissible R is the identity.
  bool identity_only() const { return off_diagonal_joint().empty(); }

  /// Every admissible R is a product of disjoint transpositions of
  /// non-permutation vertices: jointly PSD off-diagonal entries come in
  /// symmetric pairs, and none touches the first permutation_prefix_length
  /// indices.
  bool observation_compliant() const {
    for (std::size_t i = 0; i < vertex_count; ++i) {
      for (std::size_t j = 0; j < vertex_count; ++j) {
        if (i == j || !joint_psd[i][j]) continue;
        if (i < permutation_prefix_length || j < permutation_prefix_length) return false;
        if (!joint_psd[j][i]) return false;
      }
    }
    return true;
  }
};

/// Canonical order already places permutation-type vertices first; this
/// re-sorts defensively and reports the prefix length.
inline std::pair<TransportationPolytope, std::size_t> order_vertices_permutations_first(const TransportationPolytope& p) {
  std::vector<Matrix> vertices = p.vertices();
  detail::canonical_sort(vertices);
  TransportationPolytope sorted(p.sigma(), p.pi(), std::move(vertices));
  const std::size_t prefix = sorted.permutation_prefix_length();
  return {std::move(sorted), prefix};
}

namespace detail {

inline void require_vertex_index(std::size_t i, const TransportationPolytope& p, const char* what) {
  if (i >= p.vertex_count()) {
    std::ostringstream os;
    os << what << ": vertex index " << i << " out of range (" << p.vertex_count() << " vertices)";
    throw InvariantError(os.str());
  }
}

// Vertices of U(image_prior, pi): row sums image_prior, column sums pi.
inline void require_scan_polytope(const TransportationPolytope& p, const ProbabilityVector& pi,
                                  const ProbabilityVector& image_prior) {
  if ((p.pi().values() - pi.values()).cwiseAbs().maxCoeff() > kNormTol ||
      (p.sigma().values() - image_prior.values()).cwiseAbs().maxCoeff() > kNormTol)
    throw InvariantError("involution: polytope is not U(image_prior, pi)");
}

}  // namespace detail

/// J_pi^{-1/2} V_j^T J_{image}^{-1} V_i J_pi^{-1/2}.
inline Matrix compute_X(std::size_t i, std::size_t j, const TransportationPolytope& p, const ProbabilityVector& pi,
                        const ProbabilityVector& image_prior) {
  detail::require_vertex_index(i, p, "compute_X");
  detail::require_vertex_index(j, p, "compute_X");
  detail::require_scan_polytope(p, pi, image_prior);
  const DiagonalEmbedding jp(pi), js(image_prior);
  return jp.inverse_sqrt() * p.vertices()[j].transpose() * js.inverse() * p.vertices()[i] * jp.inverse_sqrt();
}

/// J_{image}^{-1/2} V_i J_pi^{-1} V_j^T J_{image}^{-1/2}.
inline Matrix compute_Y(std::size_t i, std::size_t j, const TransportationPolytope& p, const ProbabilityVector& pi,
                        const ProbabilityVector& image_prior) {
  detail::require_vertex_index(i, p, "compute_Y");
  detail::require_vertex_index(j, p, "compute_Y");
  detail::require_scan_polytope(p, pi, image_prior);
  const DiagonalEmbedding jp(pi), js(image_prior);
  return js.inverse_sqrt() * p.vertices()[i] * jp.inverse() * p.vertices()[j].transpose() * js.inverse_sqrt();
}

/// Symmetric within kPsdAsymmetryTol and minimum eigenvalue >= -tol.
inline bool is_psd(const Matrix& m, double tol = kPsdTol) {
  if (detail::asymmetry(m) > kPsdAsymmetryTol) return false;
  return detail::min_eigenvalue_symmetric(detail::symmetric_part(m)) >= -tol;
}

inline InvolutionScan psd_scan(const TransportationPolytope& polytope, const ProbabilityVector& pi,
                               const ProbabilityVector& image_prior) {
  auto [p, prefix] = order_vertices_permutations_first(polytope);
  const std::size_t k = p.vertex_count();
  InvolutionScan scan{pi, image_prior, k, BoolGrid(k, std::vector<bool>(k)), BoolGrid(k, std::vector<bool>(k)),
                      BoolGrid(k, std::vector<bool>(k)), prefix};
  const DiagonalEmbedding jp(pi), js(image_prior);
  // With A_i = J_image^{-1/2} V_i J_pi^{-1/2}: X_ij = A_j^T A_i, Y_ij = A_i A_j^T.
  std::vector<Matrix> a;
  a.reserve(k);
  for (const auto& v : p.vertices()) a.push_back(js.inverse_sqrt() * v * jp.inverse_sqrt());
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      scan.x_psd[i][j] = is_psd(a[j].transpose() * a[i]);
      scan.y_psd[i][j] = is_psd(a[i] * a[j].transpose());
      scan.joint_psd[i][j] = scan.x_psd[i][j] && scan.y_psd[i][j];
    }
  }
  return scan;
}

inline InvolutionScan psd_scan(const ProbabilityVector& pi, const ProbabilityVector& image_prior) {
  require_same_dim(pi.dim(), image_prior.dim(), "psd_scan");
  return psd_scan(enumerate_vertices(image_prior, pi), pi, image_prior);
}

struct HuntTrial {
  std::uint64_t seed;
  ProbabilityVector pi;
  ProbabilityVector image_prior;
  std::size_t vertex_count;
  std::vector<std::pair<std::size_t, std::size_t>> off_diagonal_joint;
};

struct HuntResult {
  std::vector<HuntTrial> trials;
  std::size_t counterexample_count() const {
    std::size_t c = 0;
    for (const auto& t : trials) c += t.off_diagonal_joint.empty() ? 0 : 1;
    return c;
  }
};

/// Random (pi, image_prior) pairs from Dirichlet(1); trial t uses seed + t.
/// A counterexample is any trial whose joint scan admits an off-diagonal entry
/// in the non-permutation block.
inline HuntResult hunt_counterexamples(std::size_t dim, std::size_t trials, std::uint64_t seed) {
  if (dim < 2 || dim > 5) throw InvariantError("hunt_counterexamples: dimension must be between 2 and 5");
  HuntResult result;
  result.trials.reserve(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    const std::uint64_t s = seed + t;
    Rng rng(s);
    const auto pi = random_probability_vector(dim, rng);
    const auto image = random_probability_vector(dim, rng);
    const auto scan = psd_scan(pi, image);
    result.trials.push_back({s, pi, image, scan.vertex_count, scan.off_diagonal_joint()});
  }
  return result;
}

/// One line per trial: seed, vertex count, pi, image prior and the offending
/// pairs, written to a temporary file and renamed into place.
inline void write_hunt_report(const HuntResult& result, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw InvariantError("write_hunt_report: cannot open " + tmp.string());
    out.precision(17);
    out << "# seed vertex_count pi image_prior off_diagonal_joint\n";
    for (const auto& t : result.trials) {
      out << t.seed << ' ' << t.vertex_count << ' ' << detail::describe(t.pi.values()) << ' '
          << detail::describe(t.image_prior.values()) << ' ';
      if (t.off_diagonal_joint.empty()) out << "none";
      for (const auto& [i, j] : t.off_diagonal_joint) out << '(' << i << ',' << j << ')';
      out << '\n';
    }
    out << "# counterexamples: " << result.counterexample_count() << " of " << result.trials.size() << '\n';
    if (!out) throw InvariantError("write_hunt_report: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace retrieval
