#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mpspectrum/cli.hpp"
#include "oracles.hpp"

using namespace mpspectrum;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "mpspectrum");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string spec(const std::string& name) { return std::string(MPSPECTRUM_SPECS_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mpspectrum_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) {
    const auto p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }

  std::string out(const std::string& sub) const { return (dir_ / sub).string(); }

  fs::path dir_;
};

const char* kSmallMp = R"({
  "A": {"components": [{"weight": 1.0, "part": {"type": "atom", "location": 1}}]},
  "B": {"components": [{"weight": 0.5, "part": {"type": "atom", "location": 0}},
                       {"weight": 0.5, "part": {"type": "atom", "location": 2}}]},
  "gamma": 0.25,
  "simulation": {"n": 200, "seed": 3}%s
})";

std::string small_mp(const std::string& extra = "") {
  char buf[1024];
  std::snprintf(buf, sizeof buf, kSmallMp, extra.c_str());
  return buf;
}

TEST_F(CliTest, MalformedJsonReportsPosition) {
  const auto p = write("bad.json", "{\n  \"gamma\": 0.5,\n  \"A\": [1, 2\n}\n");
  const auto r = run({"support", "--spec", p, "--out-dir", out("o")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("malformed JSON"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find(p + ":4:1"), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingFieldIsNamed) {
  const auto p = write("nogamma.json", R"({"A": {"components": [{"weight": 1, "part": {"type": "atom", "location": 1}}]},
    "B": {"components": [{"weight": 1, "part": {"type": "atom", "location": 0}}]}})");
  const auto r = run({"masses", "--spec", p, "--out-dir", out("o")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("spec.gamma"), std::string::npos) << r.err;
}

TEST_F(CliTest, UnknownFieldIsNamed) {
  const auto p = write("extra.json", small_mp(R"(, "simulation_typo": 1)"));
  const auto r = run({"masses", "--spec", p, "--out-dir", out("o")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("spec.simulation_typo"), std::string::npos) << r.err;
}

TEST_F(CliTest, BadArgumentsExitTwo) {
  EXPECT_EQ(run({"frobnicate", "--spec", spec("mp.json")}).code, 2);
  EXPECT_EQ(run({"support"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"support", "--spec", out("missing.json")}).code, 2);
  EXPECT_EQ(run({"density", "--spec", spec("mp.json"), "--grid", "1", "--out-dir", out("o")}).code, 2);
  EXPECT_EQ(run({"simulate", "--spec", spec("mp.json"), "--n", "1", "--out-dir", out("o")}).code, 2);
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("validate"), std::string::npos);
  EXPECT_EQ(run({"density", "--help"}).code, 0);
}

TEST_F(CliTest, NonConvergenceExitsThree) {
  const auto p = write("slow.json", small_mp(R"(, "solver": {"max_iterations": 1})"));
  const auto r = run({"density", "--spec", p, "--out-dir", out("o"), "--grid", "5"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("did not converge"), std::string::npos) << r.err;
}

TEST_F(CliTest, AuditFailureExitsFour) {
  const auto p = write("strict.json", small_mp(R"(, "validation": {"ks_max": 1e-6})"));
  const auto r = run({"validate", "--spec", p, "--out-dir", out("o")});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("KS distance"), std::string::npos) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir_ / "o" / "audit.json"));
  EXPECT_FALSE(j["passed"].get<bool>());
  const auto back = validation_report_from_json(j);
  EXPECT_FALSE(back.passed());
  EXPECT_EQ(back.replicates.size(), 1u);
}

TEST_F(CliTest, SupportArtifactsRoundTrip) {
  const auto r = run({"support", "--spec", spec("discrete.json"), "--out-dir", out("s")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto d = oracle::discrete();
  const MasterEquation eq(d.A, d.B, d.gamma);
  const SupportAnalyzer an(eq);
  const auto rep = an.determine_support();
  const auto back = support_report_from_json(nlohmann::json::parse(slurp(dir_ / "s" / "support.json")));
  EXPECT_EQ(back, rep);
  EXPECT_NE(r.err.find("x1 limit"), std::string::npos);

  std::ifstream curve(dir_ / "s" / "curve.csv");
  const auto pts = read_curve_csv(curve);
  ASSERT_FALSE(pts.empty());
  for (std::size_t i = 0; i < pts.size(); i += 37) {
    const auto p = an.h_curve(pts[i].h);
    EXPECT_EQ(pts[i].x, p.x);
  }
  const auto svg = slurp(dir_ / "s" / "support.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST_F(CliTest, DensityAndMassesArtifacts) {
  auto r = run({"density", "--spec", spec("mp.json"), "--out-dir", out("d"), "--grid", "41"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir_ / "d" / "density.csv");
  const auto g = read_density_csv(in);
  ASSERT_EQ(g.entries.size(), 41u);
  const oracle::ClassicalMp ref{0.25};
  for (const auto& p : g.entries) EXPECT_NEAR(p.f, ref.pdf(p.x), 1e-6) << "x = " << p.x;

  r = run({"masses", "--spec", spec("mp.json"), "--out-dir", out("m")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir_ / "m" / "masses.json"));
  const auto atoms = atoms_from_json(j["atoms"]);
  ASSERT_EQ(atoms.size(), 1u);
  EXPECT_NEAR(atoms[0].weight, 0.75, 1e-15);
}

TEST_F(CliTest, EdgesArtifact) {
  const auto r = run({"edges", "--spec", spec("mp.json"), "--out-dir", out("e")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto edges = edges_from_json(nlohmann::json::parse(slurp(dir_ / "e" / "edges.json"))["edges"]);
  ASSERT_EQ(edges.size(), 2u);
  EXPECT_NEAR(edges[0].x0, 0.25, 1e-10);
  EXPECT_NEAR(edges[1].x0, 2.25, 1e-10);
}

TEST_F(CliTest, DiracBWarns) {
  const auto r = run({"masses", "--spec", spec("dirac5.json"), "--out-dir", out("w")});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning: degenerate-B"), std::string::npos) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir_ / "w" / "masses.json"));
  EXPECT_EQ(j["flags"].size(), 1u);
}

TEST_F(CliTest, SimulationIsDeterministic) {
  const auto p = write("sim.json", small_mp(R"(, "outputs": ["csv"])"));
  ASSERT_EQ(run({"simulate", "--spec", p, "--out-dir", out("a")}).code, 0);
  ASSERT_EQ(run({"simulate", "--spec", p, "--out-dir", out("b")}).code, 0);
  ASSERT_EQ(run({"simulate", "--spec", p, "--out-dir", out("c"), "--seed", "4"}).code, 0);
  const auto a = slurp(dir_ / "a" / "eigenvalues.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir_ / "b" / "eigenvalues.csv"));
  EXPECT_NE(a, slurp(dir_ / "c" / "eigenvalues.csv"));
  std::ifstream in(dir_ / "a" / "eigenvalues.csv");
  EXPECT_EQ(read_eigenvalues_csv(in).size(), 200u);
}

TEST_F(CliTest, OutputsFilter) {
  const auto p = write("csvonly.json", small_mp(R"(, "outputs": ["csv"])"));
  ASSERT_EQ(run({"support", "--spec", p, "--out-dir", out("f")}).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "f" / "curve.csv"));
  EXPECT_FALSE(fs::exists(dir_ / "f" / "support.json"));
  EXPECT_FALSE(fs::exists(dir_ / "f" / "support.svg"));
}

TEST_F(CliTest, SpecRoundTrip) {
  const auto s = load_problem(spec("discrete.json"));
  const auto back = problem_from_json(problem_to_json(s));
  EXPECT_EQ(problem_to_json(back), problem_to_json(s));
  EXPECT_EQ(back.simulation->replicates, s.simulation->replicates);
}

TEST_F(CliTest, SemicircleSettingValidates) {
  const auto r = run({"validate", "--spec", spec("semicircle.json"), "--out-dir", out("v")});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir_ / "v" / "audit.json"));
  EXPECT_TRUE(j["passed"].get<bool>());
  EXPECT_LT(j["replicates"][0]["ks"].get<double>(), 0.05);
}

TEST_F(CliTest, BinaryExitCodes) {
  const std::string bin = MPSPECTRUM_CLI;
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status(bin + " masses --spec " + spec("mp.json") + " --out-dir " + out("x")), 0);
  EXPECT_EQ(status(bin + " masses --spec " + write("bad.json", "{")), 2);
  EXPECT_EQ(status(bin + " --help"), 0);
  EXPECT_TRUE(fs::exists(dir_ / "x" / "masses.json"));
}

}  // namespace
