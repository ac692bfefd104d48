#pragma once

#include <functional>
#include <optional>
#include <stop_token>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace redkit {

struct OptimizerOptions {
  int max_iterations = 300;
  /// Converged once the objective drops to this value; 0 disables the test
  /// and the run ends on stall or the iteration limit.
  double objective_tolerance = 1e-3;
  /// Relative objective improvement below which an iteration counts as
  /// stalled.
  double stall_tolerance = 1e-12;
  int stall_iterations = 30;
  /// Forward-difference step, relative to max(1, |x_j|).
  double fd_step = 1e-7;
  /// p of the log-sum-exp smoothing used by the direct-search phase of the
  /// redundancy homogenization; 0 searches on the raw spread.
  double smoothing_p = 0.0;
  /// Initial simplex edge as a fraction of each variable's bound width.
  double simplex_scale = 0.05;
  int threads = 1;
};

enum class OptimizerStatus {
  kConverged,
  kStalled,
  kIterationLimit,
  kCancelled,
};

std::string_view to_string(OptimizerStatus status);

struct TracePoint {
  int iteration = 0;
  double objective = 0.0;  ///< best-so-far, non-increasing
};

struct ProgressSnapshot {
  int iteration = 0;
  double objective = 0.0;
  Eigen::VectorXd incumbent;
};

using ProgressCallback = std::function<void(const ProgressSnapshot&)>;

/// Bound-constrained minimization of a design objective. Evaluators return
/// std::nullopt for infeasible candidates, which are rejected (penalized with
/// +inf) and counted.
struct DesignProblem {
  /// Optional smooth residual surrogate whose squared norm vanishes exactly
  /// where the objective is minimal. Drives a projected Levenberg-Marquardt
  /// phase with forward-difference Jacobians.
  std::function<std::optional<Eigen::VectorXd>(const Eigen::VectorXd&)> residuals;
  /// The objective being reported and tracked.
  std::function<std::optional<double>(const Eigen::VectorXd&)> objective;
  /// Objective for the Nelder-Mead phase; defaults to `objective`.
  std::function<std::optional<double>(const Eigen::VectorXd&)> search_objective;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd start;
};

struct DesignResult {
  Eigen::VectorXd best;
  double initial_objective = 0.0;
  double best_objective = 0.0;
  std::vector<TracePoint> trace;
  OptimizerStatus status = OptimizerStatus::kStalled;
  int evaluations = 0;
  int rejected = 0;  ///< infeasible candidates encountered
};

/// Runs the residual phase (when residuals are given) and then a bounded
/// Nelder-Mead polish. The best-so-far objective never increases.
///
/// Throws Error when the start point itself is infeasible.
DesignResult minimize_design(const DesignProblem& problem,
                             const OptimizerOptions& options,
                             const ProgressCallback& progress = {},
                             std::stop_token stop = {});

}  // namespace redkit
