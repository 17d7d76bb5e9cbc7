#pragma once

// Command-line front end. All logic lives here so tests can call run()
// in-process; main.cpp only forwards argv.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "retrieval/all.hpp"

namespace retrieval::cli {

using json = nlohmann::ordered_json;

inline constexpr const char* kConvention = "left-stochastic, entry[i][j]=P(i|j)";
inline constexpr std::size_t kDefaultSamples = 2000;

// ---------------------------------------------------------------------------
// Serialization.

inline json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline json to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

inline json to_json(const CMatrix& m) { return {{"re", to_json(Matrix(m.real()))}, {"im", to_json(Matrix(m.imag()))}}; }

inline json to_json(const AxiomCheck& c) { return {{"holds", c.holds}, {"magnitude", c.magnitude}, {"witness", c.witness}}; }

inline json to_json(const AxiomReport& r) {
  return {{"all_hold", r.all_hold()},
          {"stochastic", to_json(r.stochastic)},
          {"inverse_consistency", to_json(r.inverse_consistency)},
          {"prior_retrieved", to_json(r.prior_retrieved)},
          {"detailed_balance", to_json(r.detailed_balance)},
          {"nonneg_spectrum", to_json(r.nonneg_spectrum)}};
}

inline json to_json(const QuantumAxiomReport& r) {
  return {{"all_hold", r.all_hold()},
          {"cptp", to_json(r.cptp)},
          {"unitary_inverse", to_json(r.unitary_inverse)},
          {"prior_retrieved", to_json(r.prior_retrieved)},
          {"detailed_balance", to_json(r.detailed_balance)},
          {"nonneg_spectrum", to_json(r.nonneg_spectrum)}};
}

inline json to_json(const BoundReport& r) {
  json out{{"holds", r.holds}, {"lhs", r.lhs}, {"slack", r.slack}, {"tolerance", r.tolerance}};
  // JSON has no infinity; a vacuous bound is written as null.
  out["rhs"] = std::isfinite(r.rhs) ? json(r.rhs) : json(nullptr);
  if (!r.note.empty()) out["note"] = r.note;
  return out;
}

inline json to_json(const BoolGrid& g) {
  json out = json::array();
  for (const auto& row : g) {
    json r = json::array();
    for (bool b : row) r.push_back(b);
    out.push_back(std::move(r));
  }
  return out;
}

inline json document(const std::string& command) { return {{"convention", kConvention}, {"command", command}}; }

inline std::string format_number(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

/// Header row, then one row per data row; numbers with 17 significant digits.
inline std::string to_csv(const std::vector<std::string>& columns, const Matrix& values,
                          const std::vector<std::string>& labels = {}) {
  std::ostringstream os;
  for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
  os << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    bool first = true;
    if (!labels.empty()) {
      os << labels[static_cast<std::size_t>(i)];
      first = false;
    }
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      os << (first ? "" : ",") << format_number(values(i, j));
      first = false;
    }
    os << '\n';
  }
  return os.str();
}

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InvariantError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw InvariantError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Instance files.

namespace detail {

inline double number_at(const json& v, const std::string& where) {
  if (!v.is_number()) throw InvariantError("instance: " + where + " is not a number");
  return v.get<double>();
}

}  // namespace detail

inline Vector parse_vector(const json& v, const std::string& name) {
  if (!v.is_array() || v.empty()) throw InvariantError("instance: '" + name + "' must be a nonempty array of numbers");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = detail::number_at(v[i], "'" + name + "'[" + std::to_string(i) + "]");
  return out;
}

/// Row-major nested array.
inline Matrix parse_matrix(const json& v, const std::string& name) {
  if (!v.is_array() || v.empty()) throw InvariantError("instance: '" + name + "' must be a nonempty array of rows");
  const std::size_t rows = v.size();
  std::size_t cols = 0;
  Matrix out;
  for (std::size_t i = 0; i < rows; ++i) {
    const json& row = v[i];
    if (!row.is_array()) throw InvariantError("instance: '" + name + "' row " + std::to_string(i) + " is not an array");
    if (i == 0) {
      cols = row.size();
      out.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    }
    if (row.size() != cols) {
      std::ostringstream os;
      os << "instance: '" << name << "' row " << i << " has " << row.size() << " entries, expected " << cols;
      throw InvariantError(os.str());
    }
    for (std::size_t j = 0; j < cols; ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          detail::number_at(row[j], "'" + name + "'[" + std::to_string(i) + "][" + std::to_string(j) + "]");
    }
  }
  return out;
}

namespace detail {

template <class T, class F>
T validated(const std::string& name, F make) {
  try {
    return make();
  } catch (const InvariantError& e) {
    throw InvariantError("instance '" + name + "': " + e.what());
  }
}

}  // namespace detail

inline StochasticMatrix parse_stochastic(const json& v, const std::string& name) {
  const Matrix m = parse_matrix(v, name);
  return detail::validated<StochasticMatrix>(name, [&] { return StochasticMatrix(m); });
}

inline ProbabilityVector parse_probability(const json& v, const std::string& name) {
  const Vector p = parse_vector(v, name);
  return detail::validated<ProbabilityVector>(name, [&] { return ProbabilityVector(p); });
}

/// "0.1,0.2,0.7"
inline ProbabilityVector parse_probability_list(const std::string& text, const std::string& flag) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos)
      throw InvariantError(flag + ": entry " + std::to_string(values.size()) + " ('" + item + "') is not a number");
    values.push_back(x);
  }
  if (values.empty()) throw InvariantError(flag + ": no entries");
  const Vector v = Vector::Map(values.data(), static_cast<Eigen::Index>(values.size()));
  return detail::validated<ProbabilityVector>(flag, [&] { return ProbabilityVector(v); });
}

struct Instance {
  json raw = json::object();
  std::optional<StochasticMatrix> phi;
  std::optional<ProbabilityVector> pi;
  std::optional<Matrix> retrieval;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> sample_count;

  bool has(const char* key) const { return raw.contains(key); }
  double number(const char* key) const { return detail::number_at(raw.at(key), std::string("'") + key + "'"); }

  const StochasticMatrix& require_phi() const {
    if (!phi) throw InvariantError("instance: 'phi' is required");
    return *phi;
  }
  const ProbabilityVector& require_pi() const {
    if (!pi) throw InvariantError("instance: 'pi' is required");
    return *pi;
  }
  RetrievalProblem problem() const { return RetrievalProblem(require_phi(), require_pi()); }
};

inline Instance parse_instance(const json& raw) {
  if (!raw.is_object()) throw InvariantError("instance: top level must be a JSON object");
  Instance inst;
  inst.raw = raw;
  if (raw.contains("phi")) inst.phi = parse_stochastic(raw["phi"], "phi");
  if (raw.contains("pi")) inst.pi = parse_probability(raw["pi"], "pi");
  if (inst.phi && inst.pi) require_same_dim(inst.phi->dim(), inst.pi->dim(), "instance phi/pi");
  if (raw.contains("retrieval")) inst.retrieval = parse_matrix(raw["retrieval"], "retrieval");
  if (raw.contains("seed")) {
    if (!raw["seed"].is_number_unsigned()) throw InvariantError("instance: 'seed' must be a nonnegative integer");
    inst.seed = raw["seed"].get<std::uint64_t>();
  }
  if (raw.contains("sample_count")) {
    if (!raw["sample_count"].is_number_unsigned() || raw["sample_count"].get<std::size_t>() == 0)
      throw InvariantError("instance: 'sample_count' must be a positive integer");
    inst.sample_count = raw["sample_count"].get<std::size_t>();
  }
  return inst;
}

inline Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvariantError("cannot open instance file " + path);
  json raw;
  try {
    raw = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvariantError("instance " + path + ": malformed JSON (" + e.what() + ")");
  }
  return parse_instance(raw);
}

// ---------------------------------------------------------------------------
// Subcommands.

struct Options {
  std::string instance;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::optional<int> grid;
  std::optional<double> tol;
  std::string pi;
  std::string sigma;
  std::string quantum_case;
  std::optional<std::size_t> hunt_trials;
  std::size_t hunt_dim = 3;
};

class Runner {
 public:
  Runner(Options opts, std::ostream& out) : o_(std::move(opts)), out_(out) {}

  void vertices() {
    const auto [sigma, pi] = marginals();
    const auto p = enumerate_vertices(sigma, pi);
    json doc = document("vertices");
    doc["sigma"] = to_json(sigma.values());
    doc["pi"] = to_json(pi.values());
    doc["vertex_count"] = p.vertex_count();
    doc["permutation_prefix_length"] = p.permutation_prefix_length();
    json vs = json::array();
    for (const auto& v : p.vertices()) vs.push_back(to_json(v));
    doc["vertices"] = std::move(vs);
    emit(doc);
  }

  void bayes() {
    const auto problem = instance().problem();
    const auto map = bayes_reverse(problem);
    json doc = document("bayes");
    doc["map"] = to_json(map.matrix());
    doc["determinant"] = (map.matrix() * problem.phi().matrix()).determinant();
    doc["axioms"] = to_json(check_axioms(map, problem, tol(kCheckTol)));
    emit(doc);
  }

  void optimal() {
    const auto problem = instance().problem();
    const auto opt = optimal_retrieval(problem);
    const auto bayes = bayes_reverse(problem);
    json doc = document("optimal");
    doc["map"] = to_json(opt.map.matrix());
    doc["determinant"] = opt.determinant;
    doc["bayes_determinant"] = (bayes.matrix() * problem.phi().matrix()).determinant();
    doc["vertex_count"] = problem.polytope().vertex_count();
    doc["coefficients"] = to_json(opt.coefficients.values());
    doc["axioms"] = to_json(check_axioms(opt.map, problem, tol(kCheckTol)));
    emit(doc);
  }

  void check() {
    const auto inst = instance();
    const auto problem = inst.problem();
    json doc = document("check");
    json candidates = json::object();
    auto add = [&](const std::string& name, const Matrix& m) {
      candidates[name] = {{"map", to_json(m)}, {"axioms", to_json(check_axioms(m, problem, tol(kCheckTol)))}};
    };
    if (inst.retrieval) {
      add("retrieval", *inst.retrieval);
    } else {
      add("bayes", bayes_reverse(problem).matrix());
      add("optimal", optimal_retrieval(problem).map.matrix());
    }
    doc["candidates"] = std::move(candidates);
    emit(doc);
  }

  void bounds() {
    const auto inst = instance();
    const auto problem = inst.problem();
    const SimplexSampler sampler(problem.dim(), samples(inst), seed(inst));
    const Matrix& phi = problem.phi().matrix();
    // Local perturbation of size 1e-5 along (+1, -1, +1, ...), recentred to sum zero.
    const auto n = static_cast<Eigen::Index>(problem.dim());
    Vector delta(n);
    for (Eigen::Index i = 0; i < n; ++i) delta[i] = (i % 2 == 0) ? 1.0 : -1.0;
    delta.array() -= delta.mean();
    delta *= 1e-5 / delta.cwiseAbs().sum();

    json doc = document("bounds");
    doc["seed"] = sampler.seed();
    doc["samples"] = sampler.sample_count();
    auto reports = [&](const Matrix& map) {
      const auto avg = average_recovery_error(map, phi, sampler);
      return json{{"map", to_json(map)},
                  {"determinant", (map * phi).determinant()},
                  {"average_recovery_error", {{"mean", avg.mean}, {"standard_error", avg.standard_error}}},
                  {"determinant_bound", to_json(determinant_bound_report(map, phi, sampler))},
                  {"local_prior_bound", to_json(local_prior_bound_report(map, phi, problem.prior(), delta))},
                  {"contraction_bound", to_json(contraction_bound_report(map, phi, sampler))}};
    };
    doc["bayes"] = reports(bayes_reverse(problem).matrix());
    doc["optimal"] = reports(optimal_retrieval(problem).map.matrix());
    emit(doc);
  }

  void sweep() {
    const auto problem = instance().problem();
    if (problem.dim() != 2) throw InvariantError("sweep: recovery curves need a 2-state instance");
    const int grid = o_.grid.value_or(99);
    const Matrix& phi = problem.phi().matrix();
    const Matrix bayes = bayes_reverse(problem).matrix();
    const Matrix opt = optimal_retrieval(problem).map.matrix();
    emit_csv({"rho", "D_bayes", "D_optimal"}, recovery_curves(phi, {bayes, opt}, grid));
  }

  void are() {
    const auto inst = instance();
    const auto& phi = inst.require_phi();
    const SimplexSampler sampler(phi.dim(), samples(inst), seed(inst));
    const auto result = average_re_minimizer(phi, sampler);
    const Matrix composite = result.map.matrix() * phi.matrix();
    json doc = document("are");
    doc["seed"] = sampler.seed();
    doc["samples"] = sampler.sample_count();
    doc["map"] = to_json(result.map.matrix());
    doc["objective"] = result.objective;
    doc["iterations"] = result.history.empty() ? 0 : result.history.size() - 1;
    try {
      doc["fixed_point"] = to_json(stationary_distribution(StochasticMatrix(composite)).values());
    } catch (const InvariantError&) {
      doc["fixed_point"] = nullptr;
    }
    emit(doc);
  }

  void involution_scan() {
    if (o_.hunt_trials) {
      const auto result = hunt_counterexamples(o_.hunt_dim, *o_.hunt_trials, require_seed(std::nullopt));
      if (o_.out.empty()) throw InvariantError("involution-scan: --hunt needs --out for the report file");
      write_hunt_report(result, o_.out);
      return;
    }
    const auto [sigma, pi] = marginals();
    const auto p = enumerate_vertices(sigma, pi);
    const double t = tol(kPsdTol);
    auto scan = psd_scan(p, pi, sigma);
    if (t != kPsdTol) {
      // Rescan with the requested tolerance through the same pairwise products.
      for (std::size_t i = 0; i < scan.vertex_count; ++i) {
        for (std::size_t j = 0; j < scan.vertex_count; ++j) {
          scan.x_psd[i][j] = is_psd(compute_X(i, j, p, pi, sigma), t);
          scan.y_psd[i][j] = is_psd(compute_Y(i, j, p, pi, sigma), t);
          scan.joint_psd[i][j] = scan.x_psd[i][j] && scan.y_psd[i][j];
        }
      }
    }
    json doc = document("involution-scan");
    doc["pi"] = to_json(pi.values());
    doc["sigma"] = to_json(sigma.values());
    doc["tol"] = t;
    doc["vertex_count"] = scan.vertex_count;
    doc["permutation_prefix_length"] = scan.permutation_prefix_length;
    doc["x_psd"] = to_json(scan.x_psd);
    doc["y_psd"] = to_json(scan.y_psd);
    doc["joint_psd"] = to_json(scan.joint_psd);
    doc["identity_only"] = scan.identity_only();
    doc["observation_compliant"] = scan.observation_compliant();
    emit(doc);
    if (!o_.out.empty()) {
      Matrix rows(static_cast<Eigen::Index>(scan.vertex_count * scan.vertex_count), 5);
      Eigen::Index r = 0;
      for (std::size_t i = 0; i < scan.vertex_count; ++i)
        for (std::size_t j = 0; j < scan.vertex_count; ++j)
          rows.row(r++) << double(i), double(j), scan.x_psd[i][j], scan.y_psd[i][j], scan.joint_psd[i][j];
      write_atomic(std::filesystem::path(o_.out).replace_extension(".csv"),
                   to_csv({"i", "j", "x_psd", "y_psd", "joint_psd"}, rows));
    }
  }

  void quantum_petz() {
    const auto q = quantum_instance();
    const auto petz = petz_map(q.phi, q.pi);
    const double t = tol(kQuantumTol);
    json doc = document("quantum petz");
    doc["channel"] = q.kind;
    doc["vectorization"] = "column stacking, vec(AXB) = (B^T kron A) vec(X)";
    doc["phi"] = to_json(q.phi.matrix());
    doc["prior"] = to_json(q.pi.matrix());
    doc["petz"] = to_json(petz.matrix());
    doc["petz_minus_phi"] = (petz.matrix() - q.phi.matrix()).cwiseAbs().maxCoeff();
    doc["determinant"] = (petz * q.phi).determinant().real();
    doc["axioms"] = to_json(check_quantum_axioms(petz, q.phi, q.pi, t));
    emit(doc);
  }

  void quantum_case_study() {
    const auto q = quantum_instance();
    const double t = tol(kQuantumTol);
    const auto petz = petz_map(q.phi, q.pi);
    json doc = document("quantum case-study");
    doc["channel"] = q.kind;
    doc["petz_minus_phi"] = (petz.matrix() - q.phi.matrix()).cwiseAbs().maxCoeff();
    doc["petz_determinant"] = (petz * q.phi).determinant().real();
    doc["petz_axioms"] = to_json(check_quantum_axioms(petz, q.phi, q.pi, t));
    const auto d = q.phi.dim();
    const auto identity = Superoperator::identity(d);
    doc["identity_axioms"] = to_json(check_quantum_axioms(identity, q.phi, q.pi, t));
    doc["identity_determinant"] = q.phi.determinant().real();
    try {
      const auto v = theorem_conditions(q.phi, q.pi, t);
      doc["theorem_conditions"] = {{"holds", v.holds},
                                   {"spectrum_violation", v.spectrum_violation},
                                   {"detailed_balance_residual", v.detailed_balance_residual},
                                   {"determinant", v.determinant}};
    } catch (const InvariantError& e) {
      doc["theorem_conditions"] = {{"holds", false}, {"reason", e.what()}};
    }
    if (q.kind == "thermal_swap") {
      const auto swap = swap_channel(2);
      doc["swap_axioms"] = to_json(check_quantum_axioms(swap, q.phi, q.pi, t));
      doc["swap_determinant"] = (swap * q.phi).determinant().real();
    }
    if (d == 2) {
      const auto opt = qubit_optimal_retrieval(q.phi);
      doc["qubit_optimum"] = {{"map", to_json(opt.map.matrix())},
                              {"determinant", opt.determinant},
                              {"petz_determinant", opt.petz_determinant},
                              {"feasible_starts", opt.feasible_starts},
                              {"prior", "maximally mixed"}};
    }
    emit(doc);
  }

  void quantum_sweep() {
    FigureParameters params;
    if (o_.grid) params.grid = *o_.grid;
    if (!o_.instance.empty()) {
      const auto inst = load_instance(o_.instance);
      if (inst.has("eta")) params.eta = inst.number("eta");
      if (inst.has("lambda")) {
        const Vector l = parse_vector(inst.raw["lambda"], "lambda");
        if (l.size() != 2) throw InvariantError("instance: 'lambda' must hold two rates");
        params.lambda1 = l[0];
        params.lambda2 = l[1];
      }
      if (inst.has("beta") || inst.has("epsilon")) params.beta_epsilon = beta_epsilon(inst);
    }
    FigureCase which = FigureCase::fig2;
    if (o_.quantum_case == "fig2") {
      which = FigureCase::fig2;
    } else if (o_.quantum_case == "fig3") {
      which = FigureCase::fig3;
    } else if (o_.quantum_case == "fig4") {
      which = FigureCase::fig4;
      if (o_.grid) params.sphere_points = *o_.grid;
    } else {
      throw InvariantError("quantum sweep: --case must be fig2, fig3 or fig4");
    }
    const auto table = figure_sweep(which, params);
    emit_csv(table.columns, table.values, table.labels);
  }

  /// rho_k = k / (grid + 1), k = 1..grid, and D(rho || map phi rho) per map.
  static Matrix recovery_curves(const Matrix& phi, const std::vector<Matrix>& maps, int grid) {
    if (grid < 1) throw InvariantError("--grid must be positive");
    Matrix out(grid, static_cast<Eigen::Index>(maps.size()) + 1);
    for (int k = 1; k <= grid; ++k) {
      const double r = static_cast<double>(k) / (grid + 1);
      const ProbabilityVector rho{r, 1.0 - r};
      out(k - 1, 0) = r;
      for (std::size_t m = 0; m < maps.size(); ++m)
        out(k - 1, static_cast<Eigen::Index>(m) + 1) = recovery_relative_entropy(maps[m], phi, rho);
    }
    return out;
  }

 private:
  struct QuantumInstance {
    std::string kind;
    Superoperator phi;
    DensityMatrix pi;
  };

  Instance instance() const {
    if (o_.instance.empty()) throw InvariantError("--instance is required");
    return load_instance(o_.instance);
  }

  double tol(double fallback) const {
    const double t = o_.tol.value_or(fallback);
    if (!(t > 0.0)) throw InvariantError("--tol must be positive");
    return t;
  }

  std::uint64_t require_seed(std::optional<std::uint64_t> from_instance) const {
    if (o_.seed) return *o_.seed;
    if (from_instance) return *from_instance;
    throw InvariantError("a seed is required: set 'seed' in the instance file or pass --seed");
  }
  std::uint64_t seed(const Instance& inst) const { return require_seed(inst.seed); }

  std::size_t samples(const Instance& inst) const {
    const std::size_t s = o_.samples.value_or(inst.sample_count.value_or(kDefaultSamples));
    if (s == 0) throw InvariantError("--samples must be positive");
    return s;
  }

  // (sigma, pi) from --sigma/--pi, or (Phi pi, pi) from an instance.
  std::pair<ProbabilityVector, ProbabilityVector> marginals() const {
    if (!o_.pi.empty() || !o_.sigma.empty()) {
      if (o_.pi.empty() || o_.sigma.empty()) throw InvariantError("--pi and --sigma must be given together");
      auto pi = parse_probability_list(o_.pi, "--pi");
      auto sigma = parse_probability_list(o_.sigma, "--sigma");
      require_same_dim(pi.dim(), sigma.dim(), "--pi/--sigma");
      return {std::move(sigma), std::move(pi)};
    }
    const auto problem = instance().problem();
    return {problem.image_prior(), problem.prior()};
  }

  static double beta_epsilon(const Instance& inst) {
    const double beta = inst.has("beta") ? inst.number("beta") : 1.0;
    const double eps = inst.has("epsilon") ? inst.number("epsilon") : 1.0;
    return beta * eps;
  }

  QuantumInstance quantum_instance() const {
    const auto inst = instance();
    std::string kind;
    if (inst.has("channel")) {
      if (!inst.raw["channel"].is_string()) throw InvariantError("instance: 'channel' must be a string");
      kind = inst.raw["channel"].get<std::string>();
    } else if (inst.has("eta")) {
      kind = "depolarizing";
    } else if (inst.has("lambda")) {
      kind = "thermal_swap";
    } else if (inst.phi) {
      kind = "classical";
    } else {
      throw InvariantError("instance: cannot tell the channel; set 'channel', 'eta', 'lambda' or 'phi'");
    }
    if (kind == "depolarizing") {
      if (!inst.has("eta")) throw InvariantError("instance: depolarizing channel needs 'eta'");
      std::size_t d = 2;
      if (inst.has("d")) {
        if (!inst.raw["d"].is_number_unsigned()) throw InvariantError("instance: 'd' must be a positive integer");
        d = inst.raw["d"].get<std::size_t>();
      }
      return {kind, depolarizing_channel(inst.number("eta"), d), DensityMatrix::maximally_mixed(d)};
    }
    if (kind == "thermal_swap") {
      if (!inst.has("lambda")) throw InvariantError("instance: thermal swap needs 'lambda' = [lambda1, lambda2]");
      const Vector l = parse_vector(inst.raw["lambda"], "lambda");
      if (l.size() != 2) throw InvariantError("instance: 'lambda' must hold two rates");
      const double be = beta_epsilon(inst);
      const auto gamma = gibbs_state(be);
      return {kind, thermal_swap_channel(l[0], l[1], be), tensor(gamma, gamma)};
    }
    if (kind == "compression") return {kind, compression_translation_channel(), DensityMatrix::maximally_mixed(2)};
    if (kind == "classical") {
      return {kind, classical_channel(inst.require_phi()), DensityMatrix::diagonal(inst.require_pi())};
    }
    throw InvariantError("instance: unknown channel '" + kind + "' (depolarizing, thermal_swap, compression, classical)");
  }

  void emit(const json& doc) {
    const std::string text = doc.dump(2) + "\n";
    if (o_.out.empty()) {
      out_ << text;
    } else {
      write_atomic(o_.out, text);
    }
  }

  void emit_csv(const std::vector<std::string>& columns, const Matrix& values,
                const std::vector<std::string>& labels = {}) {
    const std::string text = to_csv(columns, values, labels);
    if (o_.out.empty()) {
      out_ << text;
    } else {
      write_atomic(o_.out, text);
    }
  }

  Options o_;
  std::ostream& out_;
};

/// Exit status: 0 success, 1 invalid input or violated invariant, 2 solver
/// failure.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"State retrieval maps for stochastic matrices and small quantum channels"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--instance", o.instance, "Instance file (JSON)");
    sub->add_option("--out", o.out, "Output file; stdout when omitted");
    sub->add_option("--tol", o.tol, "Check tolerance");
  };
  auto add_stochastic = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Master seed (overrides the instance seed)");
    sub->add_option("--samples", o.samples, "Monte Carlo sample count");
  };
  auto add_marginals = [&](CLI::App* sub) {
    sub->add_option("--pi", o.pi, "Prior, comma separated");
    sub->add_option("--sigma", o.sigma, "Image prior, comma separated");
  };

  auto* vertices = app.add_subcommand("vertices", "Vertices of U(sigma, pi)");
  add_common(vertices);
  add_marginals(vertices);
  auto* bayes = app.add_subcommand("bayes", "Bayes reverse map and its axiom report");
  add_common(bayes);
  auto* optimal = app.add_subcommand("optimal", "Determinant-maximizing retrieval");
  add_common(optimal);
  auto* check = app.add_subcommand("check", "Axiom report for a candidate retrieval");
  add_common(check);
  auto* bounds = app.add_subcommand("bounds", "Quality bounds for the Bayes and optimal retrievals");
  add_common(bounds);
  add_stochastic(bounds);
  auto* sweep = app.add_subcommand("sweep", "Recovery curves of a 2-state instance (CSV)");
  add_common(sweep);
  sweep->add_option("--grid", o.grid, "Grid points (default 99)");
  auto* are = app.add_subcommand("are", "Average relative entropy minimizer");
  add_common(are);
  add_stochastic(are);
  auto* scan = app.add_subcommand("involution-scan", "PSD scan of the X and Y pairings");
  add_common(scan);
  add_marginals(scan);
  scan->add_option("--seed", o.seed, "Seed of the counterexample hunt");
  scan->add_option("--hunt", o.hunt_trials, "Run a random counterexample hunt with this many trials");
  scan->add_option("--dim", o.hunt_dim, "Dimension for --hunt (2 to 5)");

  auto* quantum = app.add_subcommand("quantum", "Quantum channels");
  quantum->require_subcommand(1);
  auto* petz = quantum->add_subcommand("petz", "Petz map of a channel");
  add_common(petz);
  auto* case_study = quantum->add_subcommand("case-study", "Retrieval comparison for a case-study channel");
  add_common(case_study);
  auto* qsweep = quantum->add_subcommand("sweep", "Figure data (CSV)");
  add_common(qsweep);
  qsweep->add_option("--case", o.quantum_case, "fig2, fig3 or fig4")->required();
  qsweep->add_option("--grid", o.grid, "Points per axis (fig2, fig3) or sphere points (fig4)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    Runner r(o, out);
    if (*vertices) r.vertices();
    else if (*bayes) r.bayes();
    else if (*optimal) r.optimal();
    else if (*check) r.check();
    else if (*bounds) r.bounds();
    else if (*sweep) r.sweep();
    else if (*are) r.are();
    else if (*scan) r.involution_scan();
    else if (*petz) r.quantum_petz();
    else if (*case_study) r.quantum_case_study();
    else if (*qsweep) r.quantum_sweep();
    return 0;
  } catch (const InvariantError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const ConvergenceError& e) {
    err << "solver did not converge: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "solver failure: " << e.what() << '\n';
    return 2;
  }
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("retrieval");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace retrieval::cli
