#include <gtest/gtest.h>

#include "redkit/analysis.hpp"
#include "redkit/errors.hpp"
#include "redkit/redundancy.hpp"
#include "redkit/robustness.hpp"
#include "test_support.hpp"

namespace redkit {
namespace {

using testing::load_fixture;

struct Fixture {
  StructuralModel model;
  AnalysisState state;
  RedundancyMatrix r;
};

Fixture prepare(const StructuralModel& m) {
  AnalysisState s = build_matrices(m);
  RedundancyMatrix r = compute_redundancy_matrix(s);
  return {m, std::move(s), std::move(r)};
}

TEST(Robustness, TriAnchorVerticalBar) {
  const Fixture fx = prepare(load_fixture("tri_anchor.json"));
  const Eigen::VectorXd f = load_vector(fx.model, fx.state.dofs());
  const int r = fx.state.member_index(2);
  // Hand oracle: without the vertical bar, d_y = -100 / 707.1 instead of
  // -100 / 1707.1; the node gap along the bar grows by the difference.
  const double c45 = 1000.0 / std::sqrt(2.0);
  const double oracle = 100.0 / c45 - 100.0 / (1000.0 + c45);
  EXPECT_NEAR(oracle, 0.08284271247, 1e-10);
  EXPECT_NEAR(elongation_change_on_removal(fx.state, fx.r, f, r), oracle, 1e-12);
  const Eigen::VectorXd dd = displacement_change_on_removal(fx.state, fx.r, f, r);
  EXPECT_NEAR(dd[1], -oracle, 1e-12);
  EXPECT_NEAR(det_ratio_on_removal(fx.state, r), fx.r.diagonal[r], 1e-12);
}

TEST(Robustness, FormulaMatchesRemovalResolve) {
  for (const std::string& name : testing::fixture_names()) {
    SCOPED_TRACE(name);
    const Fixture fx = prepare(load_fixture(name));
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const Eigen::VectorXd f = testing::random_load(fx.model, fx.state.dof_count(), seed);
      const Eigen::VectorXd d = fx.state.solve(f);
      for (int r = 0; r < fx.state.member_count(); ++r) {
        if (fx.r.diagonal[r] < kRemovalThreshold) continue;
        const std::vector<int> drop{r};
        const AnalysisState without = build_matrices(remove_elements(fx.model, drop));
        const Eigen::VectorXd d_new = without.solve(f);
        const Eigen::VectorXd dd = displacement_change_on_removal(fx.state, fx.r, f, r);
        EXPECT_LE(testing::relative_error(d + dd, d_new), 1e-8);
        const double gap = fx.state.compatibility().row(r).dot(d_new - d);
        const double de = elongation_change_on_removal(fx.state, fx.r, f, r);
        EXPECT_NEAR(de, gap, 1e-8 * std::max(std::abs(gap), 1e-12));
        const Eigen::MatrixXd dk = flexibility_change_on_removal(fx.state, fx.r, r);
        EXPECT_LE(testing::relative_error(dk * f, dd), 1e-10);
      }
    }
  }
}

TEST(Robustness, DeterminantRatioEqualsRedundancy) {
  for (const std::string& name : testing::fixture_names()) {
    SCOPED_TRACE(name);
    const Fixture fx = prepare(load_fixture(name));
    for (int r = 0; r < fx.state.member_count(); ++r) {
      const double rr = fx.r.diagonal[r];
      if (rr < kRemovalThreshold) continue;
      EXPECT_LE(std::abs(det_ratio_on_removal(fx.state, r) - rr), 1e-8 * rr);
    }
  }
}

TEST(Robustness, CriticalMembersRaise) {
  const Fixture fx = prepare(load_fixture("determinate_triangle.json"));
  const Eigen::VectorXd f = load_vector(fx.model, fx.state.dofs());
  try {
    elongation_change_on_removal(fx.state, fx.r, f, 0);
    FAIL();
  } catch (const MechanismError& e) {
    EXPECT_NE(std::string(e.what()).find("statically determinate member"), std::string::npos);
    EXPECT_EQ(e.element_id(), fx.state.element_ids()[0]);
  }
  EXPECT_EQ(det_ratio_on_removal(fx.state, 0), 0.0);
}

TEST(Robustness, TableRowsAndSummary) {
  const Fixture fx = prepare(load_fixture("core_appendage_2d.json"));
  const Eigen::VectorXd f = load_vector(fx.model, fx.state.dofs());
  const RobustnessReport rep = robustness_table(fx.state, fx.r, f);
  ASSERT_EQ(rep.scenarios.size(), 8u);
  EXPECT_EQ(rep.summary.critical, 2);
  EXPECT_EQ(rep.summary.removable, 6);
  EXPECT_FALSE(rep.det_ratio_shortcut);
  double sum = 0.0;
  for (const RemovalScenario& s : rep.scenarios) {
    if (s.status == RemovalScenario::Status::kCritical) {
      EXPECT_LT(s.redundancy, kRemovalThreshold);
      EXPECT_EQ(s.delta_e, 0.0);
      continue;
    }
    sum += std::abs(s.delta_e);
    EXPECT_NEAR(s.beta, ((fx.state.solve(f) + s.delta_d).norm() - rep.displacement_norm) /
                            rep.displacement_norm,
                1e-12);
  }
  EXPECT_NEAR(rep.summary.mean_abs_delta_e, sum / 6.0, 1e-15);
  EXPECT_EQ(to_string(RemovalScenario::Status::kCritical),
            "critical: statically determinate");

  // The member with R = 1 carries no load path: removing it changes nothing.
  const RemovalScenario& free_member = rep.scenarios[fx.state.member_index(8)];
  EXPECT_NEAR(free_member.det_ratio, 1.0, 1e-9);
  EXPECT_NEAR(free_member.delta_e, 0.0, 1e-12);
}

TEST(Robustness, ParallelTableMatchesSerial) {
  const StructuralModel m = testing::random_truss_with_members(11, 120);
  const Fixture fx = prepare(m);
  const Eigen::VectorXd f = load_vector(m, fx.state.dofs());
  const RobustnessReport serial = robustness_table(fx.state, fx.r, f, {.threads = 1});
  const RobustnessReport parallel = robustness_table(fx.state, fx.r, f, {.threads = 4});
  ASSERT_EQ(serial.scenarios.size(), parallel.scenarios.size());
  for (std::size_t i = 0; i < serial.scenarios.size(); ++i) {
    EXPECT_EQ(serial.scenarios[i].delta_e, parallel.scenarios[i].delta_e);
    EXPECT_EQ(serial.scenarios[i].det_ratio, parallel.scenarios[i].det_ratio);
  }
}

TEST(Robustness, LargeModelsUseCheckedShortcut) {
  const StructuralModel m = testing::random_truss_with_members(3, 120);
  const Fixture fx = prepare(m);
  const Eigen::VectorXd f = load_vector(m, fx.state.dofs());
  RobustnessOptions opts;
  opts.det_factorization_limit = 10;
  const RobustnessReport rep = robustness_table(fx.state, fx.r, f, opts);
  EXPECT_TRUE(rep.det_ratio_shortcut);
  for (const RemovalScenario& s : rep.scenarios) {
    if (s.status == RemovalScenario::Status::kRemovable) {
      EXPECT_NEAR(s.det_ratio, s.redundancy, 1e-8 * s.redundancy);
    }
  }
}

TEST(Robustness, ChainedRemoval) {
  const Fixture fx = prepare(load_fixture("ridge_truss_3d.json"));
  const Eigen::VectorXd f = load_vector(fx.model, fx.state.dofs());
  const std::vector<int> ids{13, 5, 1};
  const ChainedRemoval chain = remove_chain(fx.state, fx.r, f, ids);
  ASSERT_EQ(chain.steps.size(), 3u);
  EXPECT_EQ(chain.static_indeterminacy, (std::vector<int>{4, 3, 2}));
  EXPECT_NEAR(chain.final_diagonal.sum(), 2.0, 1e-9);
  EXPECT_EQ(chain.remaining_ids.size(), 11u);

  const std::vector<int> drop{fx.model.element_index(13), fx.model.element_index(5)};
  const StructuralModel after_two = remove_elements(fx.model, drop);
  const Fixture fx2 = prepare(after_two);
  const int r = fx2.state.member_index(1);
  EXPECT_NEAR(chain.steps[2].redundancy, fx2.r.diagonal[r], 1e-10);
  EXPECT_NEAR(chain.steps[2].delta_e, elongation_change_on_removal(fx2.state, fx2.r, f, r),
              1e-10);

  const std::vector<int> unknown{99};
  EXPECT_THROW(remove_chain(fx.state, fx.r, f, unknown), ModelError);
}

TEST(Robustness, ChainStopsAtDeterminateMember) {
  const Fixture fx = prepare(load_fixture("tri_anchor.json"));
  const Eigen::VectorXd f = load_vector(fx.model, fx.state.dofs());
  const std::vector<int> ids{2, 1};
  try {
    remove_chain(fx.state, fx.r, f, ids);
    FAIL();
  } catch (const MechanismError& e) {
    EXPECT_EQ(e.element_id(), 1);
  }
}

TEST(Homogenization, RidgeTrussReachesUniformRedundancy) {
  const StructuralModel m = load_fixture("ridge_truss_3d.json");
  OptimizerOptions opts;
  opts.objective_tolerance = 1e-6;
  const HomogenizationResult res = homogenize_redundancy(m, opts);
  EXPECT_GT(res.initial_spread, 0.3);
  EXPECT_LE(res.final_spread, 1e-6);
  for (int k = 0; k < res.diagonal.size(); ++k) {
    EXPECT_NEAR(res.diagonal[k], 5.0 / 14.0, 1e-5);
  }
  for (int j = 0; j < res.design.size(); ++j) {
    EXPECT_GE(res.design[j], m.design->variables[j].lower);
    EXPECT_LE(res.design[j], m.design->variables[j].upper);
  }
  for (std::size_t i = 1; i < res.optimization.trace.size(); ++i) {
    EXPECT_LE(res.optimization.trace[i].objective, res.optimization.trace[i - 1].objective);
  }
  EXPECT_EQ(res.optimization.status, OptimizerStatus::kConverged);
}

TEST(Homogenization, SmoothedSearchStillImproves) {
  const StructuralModel m = load_fixture("ridge_truss_3d.json");
  OptimizerOptions opts;
  opts.smoothing_p = 50.0;
  opts.max_iterations = 40;
  const HomogenizationResult res = homogenize_redundancy(m, opts);
  EXPECT_LT(res.final_spread, res.initial_spread);
}

TEST(Homogenization, RequiresDesignSpace) {
  EXPECT_THROW(homogenize_redundancy(load_fixture("tri_anchor.json")), ModelError);
}

TEST(Homogenization, CancelsOnStopRequest) {
  std::stop_source stop;
  stop.request_stop();
  const HomogenizationResult res =
      homogenize_redundancy(load_fixture("ridge_truss_3d.json"), {}, {}, stop.get_token());
  EXPECT_EQ(res.optimization.status, OptimizerStatus::kCancelled);
}

}  // namespace
}  // namespace redkit
