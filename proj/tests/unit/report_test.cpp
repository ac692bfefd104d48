#include <sstream>

#include <gtest/gtest.h>

#include "redkit/analysis.hpp"
#include "redkit/matrix_io.hpp"
#include "redkit/redundancy.hpp"
#include "redkit/report.hpp"
#include "test_support.hpp"

namespace redkit {
namespace {

using nlohmann::json;
using testing::load_fixture;

TEST(Report, NumberFormatting) {
  EXPECT_EQ(format_number(0.41421356237), "0.414214");
  EXPECT_EQ(format_number(82842.712474619), "82842.7");
  EXPECT_EQ(format_number(1e-20), "1e-20");
  EXPECT_EQ(format_number(0.0), "0");
}

TEST(Report, EnvelopeAndCanonicalDump) {
  const json doc = envelope(4, {{"b", 1}, {"a", 0.1}});
  EXPECT_EQ(doc["revision"], 4);
  const std::string text = dump_document(doc);
  EXPECT_EQ(text.back(), '\n');
  EXPECT_EQ(json::parse(text), doc);
  EXPECT_EQ(dump_document(json::parse(text)), text);
}

TEST(Report, StructuredBodiesKeepFullPrecision) {
  const AnalysisState s = build_matrices(load_fixture("tri_anchor.json"));
  const RedundancyMatrix r = compute_redundancy_matrix(s);
  const json body = redundancy_json(s, r, true);
  EXPECT_EQ(body["n_s"], 1);
  EXPECT_EQ(body["elements"][1]["id"], 2);
  EXPECT_EQ(body["elements"][1]["redundancy"].get<double>(), r.diagonal[1]);
  ASSERT_EQ(body["matrix"].size(), 3u);
  EXPECT_EQ(body["matrix"][0][1].get<double>(), r.matrix(0, 1));
  EXPECT_FALSE(redundancy_json(s, r).contains("matrix"));
}

TEST(Report, TablesAreColumnAligned) {
  const AnalysisState s = build_matrices(load_fixture("core_appendage_2d.json"));
  const RedundancyMatrix r = compute_redundancy_matrix(s);
  std::istringstream lines(redundancy_table(s, r));
  std::string line;
  std::getline(lines, line);  // summary
  std::getline(lines, line);
  const std::size_t width = line.size();
  std::getline(lines, line);
  EXPECT_EQ(line, std::string(width, '-'));
  while (std::getline(lines, line)) EXPECT_EQ(line.size(), width);
}

TEST(Report, RobustnessTextUsesMicrometers) {
  const StructuralModel m = load_fixture("tri_anchor.json");
  const RobustnessReport rep = robustness_table(m, load_vector(m, DofMap(m)));
  const std::string text = robustness_text(rep);
  EXPECT_NE(text.find("82842.7"), std::string::npos);
  EXPECT_NE(text.find("μm"), std::string::npos);
  const json body = robustness_json(rep);
  EXPECT_NEAR(body["scenarios"][1]["delta_e"].get<double>(), 0.0828427, 1e-7);
  EXPECT_NEAR(body["scenarios"][1]["delta_e_um"].get<double>(), 82842.7, 0.1);
}

TEST(Report, CriticalScenarioHasNullNumbers) {
  const StructuralModel m = load_fixture("determinate_triangle.json");
  const RobustnessReport rep = robustness_table(m, load_vector(m, DofMap(m)));
  const json row = scenario_json(rep.scenarios.front());
  EXPECT_EQ(row["status"], "critical: statically determinate");
  EXPECT_TRUE(row["delta_e"].is_null());
  EXPECT_TRUE(row["det_ratio"].is_null());
}

TEST(Report, SequenceMarksAbsentMembers) {
  const StructuralModel m = load_fixture("assembly_truss_2d.json");
  const json body = sequence_json(evaluate_sequence(m, *m.plan));
  EXPECT_EQ(body["exceeds_final"], true);
  const json& step0 = body["steps"][0];
  const int k = m.element_index(11);
  EXPECT_EQ(step0["strain"][k], "absent");
  EXPECT_TRUE(body["steps"].back()["strain"][k].is_number());
  EXPECT_NE(sequence_text(evaluate_sequence(m, *m.plan)).find("exceeds the final maximum"),
            std::string::npos);
}

TEST(MatrixIo, RoundTrip) {
  Eigen::MatrixXd m(2, 3);
  m << 1.0 / 3.0, -2e-17, 5, 0, 1e300, -0.125;
  std::stringstream buf;
  write_matrix(buf, m);
  const Eigen::MatrixXd back = read_matrix(buf);
  EXPECT_EQ(back, m);
}

}  // namespace
}  // namespace redkit
