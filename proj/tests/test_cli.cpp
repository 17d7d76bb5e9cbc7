#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "retrieval_cli.hpp"

using namespace retrieval;
namespace fs = std::filesystem;
using cli::json;

namespace {

const fs::path kData = RETRIEVAL_DATA_DIR;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class Scratch : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("retrieval_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path write(const std::string& name, const std::string& content) const {
    std::ofstream(path(name)) << content;
    return path(name);
  }

  fs::path dir_;
};

// Relative entropy by explicit sums, written independently of the library.
double kl_by_sum(double p0, double q0) {
  return p0 * std::log(p0 / q0) + (1.0 - p0) * std::log((1.0 - p0) / (1.0 - q0));
}

}  // namespace

TEST_F(Scratch, OptimalOnTheoremInstanceIsIdentity) {
  const auto out = path("result.json");
  const auto r = invoke({"optimal", "--instance", (kData / "theorem.json").string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(fs::exists(out.string() + ".tmp"));
  const json doc = json::parse(slurp(out));
  EXPECT_EQ(doc["convention"], "left-stochastic, entry[i][j]=P(i|j)");
  const Matrix map = cli::parse_matrix(doc["map"], "map");
  EXPECT_LE((map - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(doc["determinant"].get<double>(), 0.5, 1e-9);
  EXPECT_NEAR(doc["bayes_determinant"].get<double>(), 0.25, 1e-12);
  EXPECT_TRUE(doc["axioms"]["all_hold"].get<bool>());
}

TEST_F(Scratch, EmittedMatricesReReadWithTheirInvariants) {
  const auto inst = kData / "three_state.json";
  for (const std::string cmd : {"bayes", "optimal"}) {
    const auto r = invoke({cmd, "--instance", inst.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const json doc = json::parse(r.out);
    EXPECT_NO_THROW(cli::parse_stochastic(doc["map"], "map")) << cmd;
  }
  const auto r = invoke({"vertices", "--instance", inst.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = json::parse(r.out);
  const Vector sigma = cli::parse_vector(doc["sigma"], "sigma"), pi = cli::parse_vector(doc["pi"], "pi");
  ASSERT_EQ(doc["vertices"].size(), doc["vertex_count"].get<std::size_t>());
  for (const auto& v : doc["vertices"]) {
    const Matrix m = cli::parse_matrix(v, "vertex");
    EXPECT_LE((m.rowwise().sum() - sigma).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((m.colwise().sum().transpose() - pi).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(m.minCoeff(), 0.0);
  }
}

TEST(Cli, VerticesOfTwoStateExample) {
  const auto r = invoke({"vertices", "--pi", "0.5,0.5", "--sigma", "0.75,0.25"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = json::parse(r.out);
  ASSERT_EQ(doc["vertex_count"], 2);
  Matrix a(2, 2), b(2, 2);
  a << 0.25, 0.5, 0.25, 0.0;
  b << 0.5, 0.25, 0.0, 0.25;
  EXPECT_LE((cli::parse_matrix(doc["vertices"][0], "v") - a).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((cli::parse_matrix(doc["vertices"][1], "v") - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST_F(Scratch, InvolutionScanWritesGridsAndCsv) {
  const auto out = path("scan.json");
  const auto r = invoke({"involution-scan", "--pi", "0.1,0.2,0.7", "--sigma", "0.3,0.6,0.1", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = json::parse(slurp(out));
  const std::size_t k = doc["vertex_count"];
  ASSERT_GT(k, 1u);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) EXPECT_EQ(doc["joint_psd"][i][j].get<bool>(), i == j) << i << ',' << j;

  std::ifstream csv(path("scan.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "i,j,x_psd,y_psd,joint_psd");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<int> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(std::stoi(cell));
    ASSERT_EQ(cells.size(), 5u);
    EXPECT_EQ(cells[4] == 1, doc["joint_psd"][cells[0]][cells[1]].get<bool>());
    ++rows;
  }
  EXPECT_EQ(rows, k * k);
}

TEST(Cli, InvolutionScanFourStateNeedsBothConditions) {
  const auto r = invoke({"involution-scan", "--pi", "0.1,0.6,0.1,0.2", "--sigma", "0.1,0.2,0.3,0.4"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = json::parse(r.out);
  const std::size_t k = doc["vertex_count"];
  std::size_t x_off = 0, y_off = 0, joint_off = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      x_off += doc["x_psd"][i][j].get<bool>();
      y_off += doc["y_psd"][i][j].get<bool>();
      joint_off += doc["joint_psd"][i][j].get<bool>();
    }
  }
  EXPECT_GT(x_off, 0u);
  EXPECT_GT(y_off, 0u);
  EXPECT_EQ(joint_off, 0u);
}

TEST_F(Scratch, HuntWritesReport) {
  const auto out = path("hunt.txt");
  const auto r = invoke({"involution-scan", "--hunt", "4", "--dim", "3", "--seed", "12", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(out);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 6u);
  EXPECT_EQ(invoke({"involution-scan", "--hunt", "4", "--out", out.string()}).code, 1);
}

TEST_F(Scratch, SweepIsDeterministicAndMatchesDirectSums) {
  const auto inst = kData / "two_state.json";
  const auto a = path("a.csv"), b = path("b.csv");
  ASSERT_EQ(invoke({"sweep", "--instance", inst.string(), "--grid", "99", "--out", a.string()}).code, 0);
  ASSERT_EQ(invoke({"sweep", "--instance", inst.string(), "--grid", "99", "--out", b.string()}).code, 0);
  const std::string text = slurp(a);
  EXPECT_EQ(text, slurp(b));

  const auto instance = cli::load_instance(inst.string());
  const auto problem = instance.problem();
  const Matrix phi = problem.phi().matrix();
  const Matrix bayes = bayes_reverse(problem).matrix();
  const Matrix opt = optimal_retrieval(problem).map.matrix();

  std::stringstream ss(text);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "rho,D_bayes,D_optimal");
  int rows = 0;
  while (std::getline(ss, line)) {
    double rho = 0, db = 0, dopt = 0;
    char c1 = 0, c2 = 0;
    std::stringstream(line) >> rho >> c1 >> db >> c2 >> dopt;
    ++rows;
    EXPECT_DOUBLE_EQ(rho, rows / 100.0);
    const Vector r{{rho, 1.0 - rho}};
    EXPECT_NEAR(db, kl_by_sum(rho, (bayes * phi * r)[0]), 1e-14);
    EXPECT_NEAR(dopt, kl_by_sum(rho, (opt * phi * r)[0]), 1e-14);
    EXPECT_LE(dopt, db + 1e-8);
  }
  EXPECT_EQ(rows, 99);
}

TEST(Cli, SweepRejectsLargerInstances) {
  EXPECT_EQ(invoke({"sweep", "--instance", (kData / "three_state.json").string()}).code, 1);
}

TEST_F(Scratch, StochasticCommandsNeedASeed) {
  const auto inst = write("noseed.json", R"({"phi": [[0.8, 0.3], [0.2, 0.7]], "pi": [0.4, 0.6]})");
  for (const std::string cmd : {"bounds", "are"}) {
    const auto r = invoke({cmd, "--instance", inst.string(), "--samples", "200"});
    EXPECT_EQ(r.code, 1) << cmd;
    EXPECT_NE(r.err.find("seed"), std::string::npos);
    const auto a = invoke({cmd, "--instance", inst.string(), "--samples", "200", "--seed", "5"});
    const auto b = invoke({cmd, "--instance", inst.string(), "--samples", "200", "--seed", "5"});
    EXPECT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
  }
}

TEST(Cli, BoundsHoldForBayesAndOptimal) {
  const auto r = invoke({"bounds", "--instance", (kData / "three_state.json").string(), "--samples", "400"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = json::parse(r.out);
  EXPECT_EQ(doc["seed"], 11);
  for (const char* m : {"bayes", "optimal"})
    for (const char* b : {"determinant_bound", "local_prior_bound", "contraction_bound"})
      EXPECT_TRUE(doc[m][b]["holds"].get<bool>()) << m << ' ' << b;
}

TEST(Cli, CheckUsesTheCandidateWhenGiven) {
  const auto dir = fs::temp_directory_path() / "retrieval_cli_check.json";
  std::ofstream(dir) << R"({"phi": [[0.75, 0.25], [0.25, 0.75]], "pi": [0.5, 0.5],
                           "retrieval": [[0.5, 0.5], [0.5, 0.5]]})";
  const auto r = invoke({"check", "--instance", dir.string()});
  fs::remove(dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = json::parse(r.out);
  ASSERT_TRUE(doc["candidates"].contains("retrieval"));
  // The constant map is admissible here, with a singular composite.
  EXPECT_TRUE(doc["candidates"]["retrieval"]["axioms"]["all_hold"].get<bool>());
  EXPECT_FALSE(doc["candidates"].contains("bayes"));
}

TEST_F(Scratch, DiagnosticsNameTheInvariantAndIndex) {
  auto r = invoke({"bayes", "--instance", write("a.json", R"({"phi": [[0.5, 0.6], [0.5, 0.5]], "pi": [0.5, 0.5]})").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("column 1"), std::string::npos) << r.err;

  r = invoke({"bayes", "--instance", write("b.json", R"({"phi": [[1, 0], [0, 1]], "pi": [1.0, 0.0]})").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("entry 1"), std::string::npos) << r.err;

  r = invoke({"bayes", "--instance", write("c.json", R"({"phi": [[1, 0], [0]], "pi": [0.5, 0.5]})").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("row 1"), std::string::npos) << r.err;

  r = invoke({"bayes", "--instance", write("d.json", R"({"phi": [[1, 0], [0, "x"]], "pi": [0.5, 0.5]})").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("[1][1]"), std::string::npos) << r.err;

  EXPECT_EQ(invoke({"bayes", "--instance", write("e.json", "{\"phi\": [").string()}).code, 1);
  EXPECT_EQ(invoke({"bayes", "--instance", path("missing.json").string()}).code, 1);
  r = invoke({"vertices", "--pi", "0.5,zero", "--sigma", "0.5,0.5"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("entry 1"), std::string::npos) << r.err;
}

TEST(Cli, UnknownSubcommandIsAnError) {
  EXPECT_EQ(invoke({"frobnicate"}).code, 1);
  EXPECT_EQ(invoke({}).code, 1);
  EXPECT_EQ(invoke({"quantum"}).code, 1);
  EXPECT_EQ(invoke({"--help"}).code, 0);
}

TEST(Cli, QuantumPetzOfDepolarizingIsItself) {
  const auto r = invoke({"quantum", "petz", "--instance", (kData / "depolarizing.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = json::parse(r.out);
  EXPECT_LE(doc["petz_minus_phi"].get<double>(), 1e-12);
  EXPECT_TRUE(doc["axioms"]["all_hold"].get<bool>());
  const Matrix re = cli::parse_matrix(doc["petz"]["re"], "re");
  EXPECT_EQ(re.rows(), 4);
}

TEST(Cli, QuantumCaseStudyThermalSwap) {
  const auto r = invoke({"quantum", "case-study", "--instance", (kData / "thermal_swap.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = json::parse(r.out);
  EXPECT_TRUE(doc["swap_axioms"]["all_hold"].get<bool>());
  EXPECT_FALSE(doc["identity_axioms"]["all_hold"].get<bool>());
  EXPECT_GT(doc["swap_determinant"].get<double>(), doc["petz_determinant"].get<double>());
}

TEST(Cli, QuantumCaseStudyDepolarizingMeetsTheoremConditions) {
  const auto r = invoke({"quantum", "case-study", "--instance", (kData / "depolarizing.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = json::parse(r.out);
  EXPECT_TRUE(doc["theorem_conditions"]["holds"].get<bool>());
  EXPECT_NEAR(doc["qubit_optimum"]["determinant"].get<double>(), doc["identity_determinant"].get<double>(), 1e-8);
}

TEST(Cli, QuantumSweepCsvHeaders) {
  auto r = invoke({"quantum", "sweep", "--case", "fig2", "--grid", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "x,y,petz,optimal");
  r = invoke({"quantum", "sweep", "--case", "fig4", "--grid", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "map,x,y,z");
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 16);
  EXPECT_EQ(invoke({"quantum", "sweep", "--case", "fig9"}).code, 1);
}

TEST(Cli, CsvUsesSeventeenDigits) {
  Matrix m(1, 2);
  m << 0.1, 1.0 / 3.0;
  EXPECT_EQ(cli::to_csv({"a", "b"}, m), "a,b\n0.10000000000000001,0.33333333333333331\n");
}
