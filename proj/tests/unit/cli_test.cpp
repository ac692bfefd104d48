#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "redkit/matrix_io.hpp"
#include "test_support.hpp"

namespace redkit {
namespace {

using nlohmann::json;
using testing::fixture_path;

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(REDKIT_CLI) + " " + args + " 2>/dev/null";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string fx(const std::string& name) { return fixture_path(name); }

TEST(Cli, RedundancyTableListsZeroAndOne) {
  const CliRun r = run("redundancy " + fx("core_appendage_2d.json"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("n_s 3"), std::string::npos);
  EXPECT_NE(r.out.find("\n6               0\n"), std::string::npos);
  EXPECT_NE(r.out.find("\n8               1\n"), std::string::npos);
}

TEST(Cli, RobustnessEchoesMicrometers) {
  const CliRun r = run("robustness " + fx("tri_anchor.json") + " --load n0:0,-100");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("82842.7"), std::string::npos);

  const CliRun j = run("--format json robustness " + fx("tri_anchor.json") + " --load n0:0,-100");
  ASSERT_EQ(j.code, 0);
  const json body = json::parse(j.out);
  EXPECT_EQ(body["revision"], 0);
  EXPECT_NEAR(body["result"]["scenarios"][1]["delta_e"].get<double>(), 0.0828427124746, 1e-12);
}

TEST(Cli, SequenceSearchFlagsLateElevenOrders) {
  const CliRun r = run("--format json sequence " + fx("assembly_truss_2d.json") + " --search --max-plans 24");
  ASSERT_EQ(r.code, 0);
  const json plans = json::parse(r.out)["result"]["plans"];
  ASSERT_EQ(plans.size(), 24u);
  for (const json& p : plans) {
    if (p["order"].back() == 11) EXPECT_TRUE(p["exceeds_final"].get<bool>());
  }
  const CliRun text = run("sequence " + fx("assembly_truss_2d.json") + " --search");
  EXPECT_NE(text.out.find("exceeds final"), std::string::npos);
}

TEST(Cli, SequenceEvaluateWithExplicitOrder) {
  const CliRun r = run("--format json sequence " + fx("assembly_truss_2d.json") +
                    " --order 9,10,11,12 --rank-one");
  ASSERT_EQ(r.code, 0);
  EXPECT_FALSE(json::parse(r.out)["result"]["exceeds_final"].get<bool>());
}

TEST(Cli, AnalyzeAndImperfection) {
  EXPECT_EQ(run("analyze " + fx("tri_anchor.json")).code, 0);
  const CliRun imp = run("--format json imperfection " + fx("assembly_truss_2d.json") +
                      " --alpha 9=0.2 --matrix");
  ASSERT_EQ(imp.code, 0);
  const json body = json::parse(imp.out);
  EXPECT_EQ(body["result"]["columns"][8]["alpha"], 0.2);
  EXPECT_TRUE(body["result"].contains("eps"));
}

TEST(Cli, OptimizersWriteModels) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string out = (dir / "redkit_cli_opt.json").string();
  const CliRun r = run("--tolerance 1e-6 optimize-robust " + fx("ridge_truss_3d.json") +
                    " --write-model " + out);
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("converged"), std::string::npos);
  const CliRun check = run("--format json redundancy " + out);
  ASSERT_EQ(check.code, 0);
  EXPECT_LE(json::parse(check.out)["result"]["spread"].get<double>(), 1e-6);

  const CliRun imp = run("--format json imperfection " + fx("modular_truss_2d.json") + " --optimize 14");
  ASSERT_EQ(imp.code, 0);
  EXPECT_GE(json::parse(imp.out)["result"]["reduction_percent"].get<double>(), 5.0);
  std::filesystem::remove(out);
}

TEST(Cli, MatrixDumpAndOutputFile) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string dump = (dir / "redkit_cli_r.txt").string();
  const std::string report = (dir / "redkit_cli_report.json").string();
  const CliRun r = run("--format json --output " + report + " redundancy " +
                    fx("tri_anchor.json") + " --dump-matrix " + dump);
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
  std::ifstream in(dump);
  const Eigen::MatrixXd m = read_matrix(in);
  EXPECT_EQ(m.rows(), 3);
  EXPECT_NEAR(m.trace(), 1.0, 1e-12);
  std::ifstream rep(report);
  EXPECT_EQ(json::parse(rep)["result"]["n_s"], 1);
  std::filesystem::remove(dump);
  std::filesystem::remove(report);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("--format xml redundancy " + fx("tri_anchor.json")).code, 1);
  EXPECT_EQ(run("robustness " + fx("tri_anchor.json") + " --load nowhere").code, 1);
  EXPECT_EQ(run("redundancy /nonexistent/model.json").code, 2);
  EXPECT_EQ(run("robustness " + fx("tri_anchor.json") + " --load n9:0,1").code, 2);
  EXPECT_EQ(run("robustness " + fx("determinate_triangle.json") + " --remove 1").code, 3);
  EXPECT_EQ(run("optimize-robust " + fx("tri_anchor.json")).code, 2);
  EXPECT_EQ(run("--help").code, 0);

  const auto dir = std::filesystem::temp_directory_path();
  const std::string broken = (dir / "redkit_cli_broken.json").string();
  std::ofstream(broken) << R"({"dimension": 2, "nodes": [{"id": 0, "coords": [0, 0]},
      {"id": 1, "coords": [1, 0], "support": [true, false]}],
      "elements": [{"id": 1, "nodes": [0, 1], "EA": 1}]})";
  EXPECT_EQ(run("redundancy " + broken).code, 3);
  std::ofstream(broken) << R"({"dimension": 2, "nodes": [)";
  EXPECT_EQ(run("redundancy " + broken).code, 2);
  std::filesystem::remove(broken);
}

}  // namespace
}  // namespace redkit
