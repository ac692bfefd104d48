#include "redkit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>
#include <fmt/format.h>

#include "redkit/errors.hpp"

namespace redkit {

DofMap::DofMap(const StructuralModel& model)
    : dimension_(model.dimension), index_(model.nodes.size()) {
  for (std::size_t i = 0; i < model.nodes.size(); ++i) {
    index_[i] = {-1, -1, -1};
    for (int a = 0; a < dimension_; ++a) {
      if (!model.nodes[i].fixed[a]) index_[i][a] = count_++;
    }
  }
}

Eigen::RowVectorXd compatibility_row(const StructuralModel& model,
                                     const DofMap& dofs, int element_index) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(dofs.size());
  const TrussElement& e = model.elements.at(element_index);
  const Eigen::Vector3d u = model.direction(element_index);
  for (int a = 0; a < model.dimension; ++a) {
    if (int i = dofs.at(e.node_b, a); i >= 0) row[i] += u[a];
    if (int i = dofs.at(e.node_a, a); i >= 0) row[i] -= u[a];
  }
  return row;
}

int numerical_rank(const Eigen::MatrixXd& m, double relative_tolerance) {
  if (m.size() == 0) return 0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  const Eigen::VectorXd& sigma = svd.singularValues();
  if (sigma.size() == 0 || sigma[0] <= 0.0) return 0;
  const double cutoff = relative_tolerance * sigma[0];
  int rank = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma[i] > cutoff) ++rank;
  }
  return rank;
}

namespace {

Eigen::MatrixXd mechanism_basis(const Eigen::MatrixXd& a, int rank) {
  const Eigen::Index n = a.cols();
  if (a.rows() == 0) return Eigen::MatrixXd::Identity(n, n);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  return svd.matrixV().rightCols(n - rank);
}

}  // namespace

int AnalysisState::member_index(int element_id) const {
  for (std::size_t k = 0; k < element_ids_.size(); ++k) {
    if (element_ids_[k] == element_id) return static_cast<int>(k);
  }
  return -1;
}

Eigen::VectorXd AnalysisState::solve(const Eigen::VectorXd& rhs) const {
  return factor_.solve(rhs);
}

Eigen::MatrixXd AnalysisState::solve(const Eigen::MatrixXd& rhs) const {
  return factor_.solve(rhs);
}

Eigen::MatrixXd AnalysisState::solve_lower(const Eigen::MatrixXd& rhs) const {
  return factor_.matrixL().solve(rhs);
}

double AnalysisState::log_determinant() const {
  const auto& l = factor_.matrixLLT();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) sum += std::log(l(i, i));
  return 2.0 * sum;
}

AnalysisState AnalysisState::from_parts(Eigen::MatrixXd a, Eigen::VectorXd c,
                                        Eigen::VectorXd lengths,
                                        std::vector<int> element_ids,
                                        DofMap dofs, int rank) {
  Eigen::MatrixXd k = a.transpose() * c.asDiagonal() * a;
  k = 0.5 * (k + k.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> factor(k);
  if (factor.info() != Eigen::Success) {
    throw NumericalError("stiffness matrix is not positive definite",
                         std::numeric_limits<double>::infinity());
  }
  const double rcond = factor.rcond();
  if (!(rcond > 1e-15)) {
    throw NumericalError(
        fmt::format("stiffness matrix is ill-conditioned (rcond {:.3e})", rcond),
        rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity());
  }
  return from_factor(std::move(a), std::move(c), std::move(k),
                     std::move(factor), std::move(lengths),
                     std::move(element_ids), std::move(dofs), rank);
}

AnalysisState AnalysisState::from_factor(Eigen::MatrixXd a, Eigen::VectorXd c,
                                         Eigen::MatrixXd k,
                                         Eigen::LLT<Eigen::MatrixXd> factor,
                                         Eigen::VectorXd lengths,
                                         std::vector<int> element_ids,
                                         DofMap dofs, int rank) {
  AnalysisState state;
  state.a_ = std::move(a);
  state.c_ = std::move(c);
  state.k_ = std::move(k);
  state.factor_ = std::move(factor);
  state.lengths_ = std::move(lengths);
  state.element_ids_ = std::move(element_ids);
  state.dofs_ = std::move(dofs);
  state.rank_ = rank;
  return state;
}

AnalysisState build_matrices(const StructuralModel& model,
                             const AnalysisOptions& options) {
  DofMap dofs(model);
  const int n = dofs.size();
  const int nq = model.element_count();
  if (n == 0) {
    throw MechanismError("model has no free degree of freedom", 0);
  }

  Eigen::MatrixXd a(nq, n);
  Eigen::VectorXd c(nq);
  Eigen::VectorXd lengths(nq);
  std::vector<int> ids(nq);
  for (int k = 0; k < nq; ++k) {
    const TrussElement& e = model.elements[k];
    const double length = model.length(k);
    if (!(length > 0.0)) {
      throw ModelError(ModelError::Kind::kZeroLength, "",
                       fmt::format("element {} has zero length", e.id));
    }
    a.row(k) = compatibility_row(model, dofs, k);
    c[k] = e.axial_stiffness / length;
    lengths[k] = length;
    ids[k] = e.id;
  }

  int rank = n;
  if (!options.skip_rank_check) {
    rank = numerical_rank(a, options.rank_tolerance);
    if (rank < n) {
      throw MechanismError(
          fmt::format("structure is kinematically indeterminate: rank(A) = {} "
                      "< n = {} ({} mechanism(s))",
                      rank, n, n - rank),
          n - rank, mechanism_basis(a, rank));
    }
  }

  try {
    return AnalysisState::from_parts(std::move(a), std::move(c),
                                     std::move(lengths), std::move(ids),
                                     std::move(dofs), rank);
  } catch (const NumericalError&) {
    if (!options.skip_rank_check) throw;
    // Without the SVD a failed factorization is the mechanism signal.
    throw MechanismError("structure is kinematically indeterminate", 1);
  }
}

StaticSolution solve_static(const AnalysisState& state,
                            const Eigen::VectorXd& f,
                            const Eigen::VectorXd& e0) {
  if (f.size() != state.dof_count()) {
    throw Error(fmt::format("load vector has {} entries, expected {}", f.size(),
                            state.dof_count()));
  }
  if (e0.size() != state.member_count()) {
    throw Error(fmt::format("pre-deformation vector has {} entries, expected {}",
                            e0.size(), state.member_count()));
  }
  const Eigen::MatrixXd& a = state.compatibility();
  const Eigen::VectorXd& c = state.member_stiffness();

  const Eigen::VectorXd rhs = f + a.transpose() * c.cwiseProduct(e0);
  StaticSolution out;
  out.displacements = state.solve(rhs);
  out.total_elongation = a * out.displacements;
  out.elastic_elongation = out.total_elongation - e0;
  out.normal_force = c.cwiseProduct(out.elastic_elongation);
  out.residual = (state.stiffness() * out.displacements - rhs).lpNorm<Eigen::Infinity>();

  const double tolerance =
      1e-9 * std::max(1.0 + f.lpNorm<Eigen::Infinity>(),
                      rhs.lpNorm<Eigen::Infinity>());
  if (!(out.residual <= tolerance)) {
    throw NumericalError(
        fmt::format("static solve residual {:.3e} exceeds tolerance", out.residual));
  }
  return out;
}

int degree_of_static_indeterminacy(const AnalysisState& state) {
  return state.static_indeterminacy();
}

Eigen::VectorXd load_vector(const StructuralModel& model, const DofMap& dofs,
                            std::span<const PointLoad> loads) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(dofs.size());
  for (const PointLoad& load : loads) {
    for (int a = 0; a < model.dimension; ++a) {
      if (int i = dofs.at(load.node, a); i >= 0) f[i] += load.force[a];
    }
  }
  return f;
}

Eigen::VectorXd load_vector(const StructuralModel& model, const DofMap& dofs) {
  return load_vector(model, dofs, model.loads);
}

}  // namespace redkit
