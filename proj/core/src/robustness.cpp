#include "redkit/robustness.hpp"

#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "parallel.hpp"
#include "redkit/errors.hpp"

namespace redkit {

std::string_view to_string(RemovalScenario::Status status) {
  switch (status) {
    case RemovalScenario::Status::kRemovable: return "removable";
    case RemovalScenario::Status::kCritical:
      return "critical: statically determinate";
  }
  return "unknown";
}

namespace {

void check_index(const AnalysisState& state, int r) {
  if (r < 0 || r >= state.member_count()) {
    throw Error(fmt::format("member index {} out of range", r));
  }
}

double checked_redundancy(const AnalysisState& state,
                          const RedundancyMatrix& redundancy, int r,
                          double threshold) {
  check_index(state, r);
  const double r_rr = redundancy.matrix(r, r);
  if (r_rr < threshold) {
    const int id = state.element_ids()[r];
    throw MechanismError(
        fmt::format("element {} is a statically determinate member "
                    "(R_rr = {:.3e}); removing it creates a mechanism",
                    id, r_rr),
        1, {}, id);
  }
  return r_rr;
}

// K^-1 a_r^T, shared by the displacement and flexibility formulas.
Eigen::VectorXd flexibility_column(const AnalysisState& state, int r) {
  return state.solve(Eigen::VectorXd(state.compatibility().row(r).transpose()));
}

double relative_norm_change(const Eigen::VectorXd& d,
                            const Eigen::VectorXd& delta_d) {
  const double norm = d.norm();
  if (norm == 0.0) return 0.0;
  return ((d + delta_d).norm() - norm) / norm;
}

RemovalScenario critical_scenario(const AnalysisState& state,
                                  const RedundancyMatrix& redundancy, int r) {
  RemovalScenario s;
  s.element_id = state.element_ids()[r];
  s.index = r;
  s.status = RemovalScenario::Status::kCritical;
  s.redundancy = redundancy.matrix(r, r);
  s.delta_d = Eigen::VectorXd::Zero(state.dof_count());
  return s;
}

// Scenario without the determinant ratio, which the callers fill in.
RemovalScenario removal_scenario(const AnalysisState& state,
                                 const RedundancyMatrix& redundancy,
                                 const Eigen::VectorXd& f,
                                 const Eigen::VectorXd& d, int r) {
  RemovalScenario s;
  s.element_id = state.element_ids()[r];
  s.index = r;
  s.redundancy = redundancy.matrix(r, r);
  s.delta_d = displacement_change_on_removal(state, redundancy, f, r, 0.0);
  s.delta_e = state.compatibility().row(r).dot(s.delta_d);
  s.beta = relative_norm_change(d, s.delta_d);
  return s;
}

}  // namespace

Eigen::MatrixXd flexibility_change_on_removal(const AnalysisState& state,
                                              const RedundancyMatrix& redundancy,
                                              int r, double threshold) {
  const double r_rr = checked_redundancy(state, redundancy, r, threshold);
  const Eigen::VectorXd g = flexibility_column(state, r);
  return (state.member_stiffness()[r] / r_rr) * g * g.transpose();
}

double elongation_change_on_removal(const AnalysisState& state,
                                    const RedundancyMatrix& redundancy,
                                    const Eigen::VectorXd& f, int r,
                                    double threshold) {
  const double r_rr = checked_redundancy(state, redundancy, r, threshold);
  const Eigen::VectorXd d = state.solve(f);
  return (1.0 - r_rr) / r_rr * state.compatibility().row(r).dot(d);
}

Eigen::VectorXd displacement_change_on_removal(
    const AnalysisState& state, const RedundancyMatrix& redundancy,
    const Eigen::VectorXd& f, int r, double threshold) {
  const double r_rr = checked_redundancy(state, redundancy, r, threshold);
  if (f.size() != state.dof_count()) {
    throw Error(fmt::format("load vector has {} entries, expected {}", f.size(),
                            state.dof_count()));
  }
  const Eigen::VectorXd g = flexibility_column(state, r);
  return g * (state.member_stiffness()[r] / r_rr * g.dot(f));
}

double det_ratio_on_removal(const AnalysisState& state, int r) {
  check_index(state, r);
  const Eigen::RowVectorXd a_r = state.compatibility().row(r);
  Eigen::MatrixXd k = state.stiffness() -
                      state.member_stiffness()[r] * a_r.transpose() * a_r;
  k = 0.5 * (k + k.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> factor(k);
  if (factor.info() != Eigen::Success) return 0.0;
  const auto& l = factor.matrixLLT();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) return 0.0;
    log_det += std::log(l(i, i));
  }
  return std::exp(2.0 * log_det - state.log_determinant());
}

RobustnessReport robustness_table(const AnalysisState& state,
                                  const RedundancyMatrix& redundancy,
                                  const Eigen::VectorXd& f,
                                  const RobustnessOptions& options) {
  if (f.size() != state.dof_count()) {
    throw Error(fmt::format("load vector has {} entries, expected {}", f.size(),
                            state.dof_count()));
  }
  const int nq = state.member_count();
  const Eigen::VectorXd d = state.solve(f);

  RobustnessReport report;
  report.displacement_norm = d.norm();
  report.scenarios.resize(nq);

  std::vector<int> removable;
  for (int r = 0; r < nq; ++r) {
    if (redundancy.matrix(r, r) < options.threshold) {
      report.scenarios[r] = critical_scenario(state, redundancy, r);
    } else {
      removable.push_back(r);
    }
  }

  detail::parallel_for(static_cast<int>(removable.size()), options.threads,
                       [&](int i) {
    const int r = removable[i];
    report.scenarios[r] = removal_scenario(state, redundancy, f, d, r);
  });

  // Determinant ratios: refactorize on small systems; on large ones check the
  // identity on a few members and then use R_rr.
  bool shortcut = state.dof_count() > options.det_factorization_limit;
  if (shortcut) {
    const int checks = std::min<int>(options.det_self_test_members,
                                     static_cast<int>(removable.size()));
    for (int i = 0; i < checks && shortcut; ++i) {
      const int r = removable[i];
      const double ratio = det_ratio_on_removal(state, r);
      const double r_rr = redundancy.matrix(r, r);
      if (std::abs(ratio - r_rr) > 1e-8 * std::max(r_rr, 1e-300)) {
        spdlog::warn("determinant identity check failed for element {}: "
                     "{:.10g} vs R_rr {:.10g}; refactorizing every member",
                     state.element_ids()[r], ratio, r_rr);
        shortcut = false;
      }
    }
  }
  report.det_ratio_shortcut = shortcut;
  detail::parallel_for(static_cast<int>(removable.size()), options.threads,
                       [&](int i) {
    const int r = removable[i];
    report.scenarios[r].det_ratio =
        shortcut ? redundancy.matrix(r, r) : det_ratio_on_removal(state, r);
  });

  RobustnessSummary& sum = report.summary;
  sum.removable = static_cast<int>(removable.size());
  sum.critical = nq - sum.removable;
  for (int r : removable) {
    sum.mean_abs_delta_e += std::abs(report.scenarios[r].delta_e);
    sum.mean_beta += report.scenarios[r].beta;
  }
  if (sum.removable > 0) {
    sum.mean_abs_delta_e /= sum.removable;
    sum.mean_beta /= sum.removable;
  }
  return report;
}

RobustnessReport robustness_table(const StructuralModel& model,
                                  const Eigen::VectorXd& f,
                                  const RobustnessOptions& options) {
  const AnalysisState state = build_matrices(model);
  const RedundancyMatrix redundancy = compute_redundancy_matrix(state);
  return robustness_table(state, redundancy, f, options);
}

ChainedRemoval remove_chain(const AnalysisState& state,
                            const RedundancyMatrix& redundancy,
                            const Eigen::VectorXd& f,
                            std::span<const int> element_ids,
                            double threshold) {
  ChainedRemoval out;
  UpdatedSystem current{state, redundancy};
  for (int id : element_ids) {
    const int r = current.state.member_index(id);
    if (r < 0) {
      throw ModelError(ModelError::Kind::kDanglingReference, "",
                       fmt::format("element {} is not part of the structure", id));
    }
    checked_redundancy(current.state, current.redundancy, r, threshold);
    const Eigen::VectorXd d = current.state.solve(f);
    RemovalScenario s = removal_scenario(current.state, current.redundancy, f, d, r);
    s.det_ratio = current.redundancy.matrix(r, r);
    out.steps.push_back(std::move(s));
    current = remove_element_update(current.state, current.redundancy, r,
                                    threshold);
    out.static_indeterminacy.push_back(current.redundancy.static_indeterminacy);
  }
  out.final_diagonal = current.redundancy.diagonal;
  out.remaining_ids = current.state.element_ids();
  return out;
}

HomogenizationResult homogenize_redundancy(const StructuralModel& model,
                                           const OptimizerOptions& options,
                                           const ProgressCallback& progress,
                                           std::stop_token stop) {
  if (!model.design || model.design->size() == 0) {
    throw ModelError(ModelError::Kind::kSchema, "/design",
                     "model has no design variables");
  }
  const DesignSpace& space = *model.design;
  const int nv = space.size();

  AnalysisOptions fast;
  fast.skip_rank_check = true;
  auto diagonal_at = [&](const Eigen::VectorXd& s) -> std::optional<Eigen::VectorXd> {
    try {
      return redundancy_diagonal(build_matrices(apply_design(model, s), fast));
    } catch (const Error& e) {
      spdlog::debug("rejected design candidate: {}", e.what());
      return std::nullopt;
    }
  };

  DesignProblem problem;
  problem.lower.resize(nv);
  problem.upper.resize(nv);
  for (int j = 0; j < nv; ++j) {
    problem.lower[j] = space.variables[j].lower;
    problem.upper[j] = space.variables[j].upper;
  }
  problem.start = Eigen::VectorXd::Zero(nv);
  problem.residuals = [&](const Eigen::VectorXd& s) -> std::optional<Eigen::VectorXd> {
    auto diag = diagonal_at(s);
    if (!diag) return std::nullopt;
    return Eigen::VectorXd(diag->array() - diag->mean());
  };
  problem.objective = [&](const Eigen::VectorXd& s) -> std::optional<double> {
    auto diag = diagonal_at(s);
    if (!diag) return std::nullopt;
    return diag->maxCoeff() - diag->minCoeff();
  };
  if (options.smoothing_p > 0.0) {
    const double p = options.smoothing_p;
    // Log-sum-exp bounds on max and min, shifted for stability.
    problem.search_objective = [&, p](const Eigen::VectorXd& s) -> std::optional<double> {
      auto diag = diagonal_at(s);
      if (!diag) return std::nullopt;
      const double hi = diag->maxCoeff();
      const double lo = diag->minCoeff();
      const double smooth_max =
          hi + std::log((p * (diag->array() - hi)).exp().sum()) / p;
      const double smooth_min =
          lo - std::log((-p * (diag->array() - lo)).exp().sum()) / p;
      return smooth_max - smooth_min;
    };
  }

  HomogenizationResult out;
  out.optimization = minimize_design(problem, options, progress, std::move(stop));
  out.design = out.optimization.best;
  out.initial_spread = out.optimization.initial_objective;
  out.final_spread = out.optimization.best_objective;
  out.model = apply_design(model, out.design);
  out.diagonal = redundancy_diagonal(build_matrices(out.model));
  return out;
}

}  // namespace redkit
