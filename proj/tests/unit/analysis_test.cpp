#include <gtest/gtest.h>

#include "redkit/analysis.hpp"
#include "redkit/errors.hpp"
#include "test_support.hpp"

namespace redkit {
namespace {

using testing::load_fixture;

TEST(Analysis, TriAnchorStiffness) {
  const AnalysisState s = build_matrices(load_fixture("tri_anchor.json"));
  ASSERT_EQ(s.dof_count(), 2);
  ASSERT_EQ(s.member_count(), 3);
  const double c45 = 1000.0 / std::sqrt(2.0);
  EXPECT_NEAR(s.member_stiffness()[0], c45, 1e-10);
  EXPECT_NEAR(s.member_stiffness()[1], 1000.0, 1e-12);
  EXPECT_NEAR(s.stiffness()(0, 0), c45, 1e-9);
  EXPECT_NEAR(s.stiffness()(1, 1), 1000.0 + c45, 1e-9);
  EXPECT_NEAR(s.stiffness()(0, 1), 0.0, 1e-12);
  EXPECT_EQ(s.static_indeterminacy(), 1);
  EXPECT_EQ(degree_of_static_indeterminacy(s), 1);
}

TEST(Analysis, TriAnchorLoadCase) {
  const StructuralModel m = load_fixture("tri_anchor.json");
  const AnalysisState s = build_matrices(m);
  const Eigen::VectorXd f = load_vector(m, s.dofs());
  const StaticSolution sol = solve_static(s, f, Eigen::VectorXd::Zero(3));
  EXPECT_NEAR(sol.displacements[0], 0.0, 1e-14);
  EXPECT_NEAR(sol.displacements[1], -100.0 / (1000.0 + 1000.0 / std::sqrt(2.0)), 1e-14);
  EXPECT_NEAR(sol.elastic_elongation[1], 0.0585786437626905, 1e-12);
  EXPECT_LT(sol.residual, 1e-10);
}

TEST(Analysis, PreDeformationOnVerticalBar) {
  const AnalysisState s = build_matrices(load_fixture("tri_anchor.json"));
  Eigen::VectorXd e0 = Eigen::VectorXd::Zero(3);
  e0[1] = 1.0;
  const StaticSolution sol = solve_static(s, Eigen::VectorXd::Zero(2), e0);
  EXPECT_NEAR(sol.elastic_elongation[1], -(std::sqrt(2.0) - 1.0), 1e-12);
  EXPECT_NEAR(sol.normal_force[1], -1000.0 * (std::sqrt(2.0) - 1.0), 1e-9);
  // Self-stress: equilibrium with zero external load.
  const Eigen::VectorXd residual = s.compatibility().transpose() * sol.normal_force;
  EXPECT_LT(residual.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Analysis, StiffnessSymmetricOnFixtures) {
  for (const std::string& name : testing::fixture_names()) {
    const AnalysisState s = build_matrices(load_fixture(name));
    const Eigen::MatrixXd& k = s.stiffness();
    EXPECT_LE((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-12 * k.cwiseAbs().maxCoeff())
        << name;
    const Eigen::MatrixXd assembled = s.compatibility().transpose() *
                                      s.member_stiffness().asDiagonal() *
                                      s.compatibility();
    EXPECT_LE((k - assembled).cwiseAbs().maxCoeff(), 1e-10 * k.cwiseAbs().maxCoeff())
        << name;
  }
}

TEST(Analysis, StaticIndeterminacyOfFixtures) {
  EXPECT_EQ(build_matrices(load_fixture("determinate_triangle.json")).static_indeterminacy(), 0);
  EXPECT_EQ(build_matrices(load_fixture("core_appendage_2d.json")).static_indeterminacy(), 3);
  EXPECT_EQ(build_matrices(load_fixture("ridge_truss_3d.json")).static_indeterminacy(), 5);
}

TEST(Analysis, MechanismReportsBasis) {
  StructuralModel m = load_fixture("determinate_triangle.json");
  m.elements.erase(m.elements.begin());
  try {
    build_matrices(m);
    FAIL() << "expected a mechanism";
  } catch (const MechanismError& e) {
    EXPECT_EQ(e.mechanism_count(), 1);
    ASSERT_EQ(e.basis().cols(), 1);
    EXPECT_GT(e.basis().col(0).norm(), 0.0);
  } catch (const NumericalError&) {
    FAIL() << "rank check should catch the mechanism";
  }
}

TEST(Analysis, CompatibilityRowsAreUnitDirections) {
  const StructuralModel m = load_fixture("ridge_truss_3d.json");
  const AnalysisState s = build_matrices(m);
  for (int k = 0; k < s.member_count(); ++k) {
    const Eigen::RowVectorXd row = compatibility_row(m, s.dofs(), k);
    EXPECT_LE(row.norm(), std::sqrt(2.0) + 1e-12);
    EXPECT_LE((row - s.compatibility().row(k)).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Analysis, LoadsOnFixedDofsAreDropped) {
  StructuralModel m = load_fixture("tri_anchor.json");
  PointLoad p;
  p.node = m.node_index(1);
  p.force = Eigen::Vector3d(5.0, 5.0, 0.0);
  m.loads.push_back(p);
  const AnalysisState s = build_matrices(m);
  const Eigen::VectorXd f = load_vector(m, s.dofs());
  EXPECT_EQ(f.size(), 2);
  EXPECT_DOUBLE_EQ(f[1], -100.0);
}

TEST(Analysis, NumericalRank) {
  Eigen::MatrixXd m(3, 2);
  m << 1, 2, 2, 4, 3, 6;
  EXPECT_EQ(numerical_rank(m, 1e-12), 1);
  m(2, 1) = 7;
  EXPECT_EQ(numerical_rank(m, 1e-12), 2);
}

}  // namespace
}  // namespace redkit
