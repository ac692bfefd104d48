#pragma once

#include <span>
#include <stop_token>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "redkit/analysis.hpp"
#include "redkit/model.hpp"
#include "redkit/optimize.hpp"
#include "redkit/redundancy.hpp"

namespace redkit {

/// Consequences of removing one member under a fixed load.
struct RemovalScenario {
  enum class Status { kRemovable, kCritical };

  int element_id = 0;
  int index = 0;  ///< member row in the analysed state
  Status status = Status::kRemovable;
  double redundancy = 0.0;  ///< R_rr before removal
  /// Change of the node gap along the removed member [m]. Zero for critical
  /// members, which carry no numbers.
  double delta_e = 0.0;
  Eigen::VectorXd delta_d;  ///< [m], free-dof order
  double det_ratio = 0.0;   ///< det(K~) / det(K)
  double beta = 0.0;        ///< relative change of ||d||_2
};

std::string_view to_string(RemovalScenario::Status status);

/// Delta K^-1 = K^-1 a_r^T (c_r / R_rr) a_r K^-1 (dense n x n).
Eigen::MatrixXd flexibility_change_on_removal(const AnalysisState& state,
                                              const RedundancyMatrix& redundancy,
                                              int r,
                                              double threshold = kRemovalThreshold);

/// Delta e_r = (1 - R_rr) / R_rr * a_r K^-1 f. Throws MechanismError when
/// R_rr is below the threshold.
double elongation_change_on_removal(const AnalysisState& state,
                                    const RedundancyMatrix& redundancy,
                                    const Eigen::VectorXd& f, int r,
                                    double threshold = kRemovalThreshold);

/// Delta d = K^-1 a_r^T (c_r / R_rr) a_r K^-1 f.
Eigen::VectorXd displacement_change_on_removal(
    const AnalysisState& state, const RedundancyMatrix& redundancy,
    const Eigen::VectorXd& f, int r, double threshold = kRemovalThreshold);

/// det(K~)/det(K) from a fresh factorization of K - c_r a_r^T a_r, through
/// log-determinants. Returns 0 when K~ is singular.
double det_ratio_on_removal(const AnalysisState& state, int r);

struct RobustnessSummary {
  int removable = 0;
  int critical = 0;
  double mean_abs_delta_e = 0.0;  ///< over removable members [m]
  double mean_beta = 0.0;
};

struct RobustnessReport {
  std::vector<RemovalScenario> scenarios;  ///< one per member, id order
  RobustnessSummary summary;
  double displacement_norm = 0.0;  ///< ||d||_2 of the intact structure
  /// True when determinant ratios come from R_rr after a passing check of
  /// the determinant identity on the first removable members.
  bool det_ratio_shortcut = false;
};

struct RobustnessOptions {
  double threshold = kRemovalThreshold;
  /// Up to this many free dofs every ratio is computed by refactorization;
  /// above it, a few members are checked and the rest use R_rr.
  int det_factorization_limit = 200;
  int det_self_test_members = 3;
  int threads = 1;
};

/// One scenario per member (Table-2 style) for the load vector f.
RobustnessReport robustness_table(const AnalysisState& state,
                                  const RedundancyMatrix& redundancy,
                                  const Eigen::VectorXd& f,
                                  const RobustnessOptions& options = {});
RobustnessReport robustness_table(const StructuralModel& model,
                                  const Eigen::VectorXd& f,
                                  const RobustnessOptions& options = {});

/// Removes the members one after another (progressive what-if). Each entry
/// describes a removal relative to the structure left by the previous ones.
/// Throws MechanismError at the first member whose redundancy has dropped
/// below the threshold.
struct ChainedRemoval {
  std::vector<RemovalScenario> steps;
  std::vector<int> static_indeterminacy;  ///< after each step
  Eigen::VectorXd final_diagonal;
  std::vector<int> remaining_ids;
};

ChainedRemoval remove_chain(const AnalysisState& state,
                            const RedundancyMatrix& redundancy,
                            const Eigen::VectorXd& f,
                            std::span<const int> element_ids,
                            double threshold = kRemovalThreshold);

struct HomogenizationResult {
  StructuralModel model;  ///< geometry at the best design
  Eigen::VectorXd design;
  DesignResult optimization;
  double initial_spread = 0.0;
  double final_spread = 0.0;
  Eigen::VectorXd diagonal;  ///< R_kk at the best design
};

/// Minimizes R_max - R_min over the model's design space. Candidates that
/// lose kinematic determinacy are rejected.
HomogenizationResult homogenize_redundancy(const StructuralModel& model,
                                           const OptimizerOptions& options = {},
                                           const ProgressCallback& progress = {},
                                           std::stop_token stop = {});

}  // namespace redkit
