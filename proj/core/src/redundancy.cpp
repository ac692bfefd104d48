#include "redkit/redundancy.hpp"

#include <fmt/format.h>

#include "redkit/errors.hpp"

namespace redkit {

namespace {

Eigen::MatrixXd drop_row(const Eigen::MatrixXd& m, Eigen::Index r) {
  Eigen::MatrixXd out(m.rows() - 1, m.cols());
  out.topRows(r) = m.topRows(r);
  out.bottomRows(m.rows() - r - 1) = m.bottomRows(m.rows() - r - 1);
  return out;
}

Eigen::VectorXd drop_entry(const Eigen::VectorXd& v, Eigen::Index r) {
  Eigen::VectorXd out(v.size() - 1);
  out.head(r) = v.head(r);
  out.tail(v.size() - r - 1) = v.tail(v.size() - r - 1);
  return out;
}

}  // namespace

RedundancyMatrix compute_redundancy_matrix(const AnalysisState& state) {
  const Eigen::MatrixXd& a = state.compatibility();
  const Eigen::VectorXd& c = state.member_stiffness();
  const Eigen::Index nq = a.rows();

  // H = A K^-1 A^T, formed symmetric through the Cholesky half solve.
  const Eigen::MatrixXd y = state.solve_lower(a.transpose());
  Eigen::MatrixXd h(nq, nq);
  h.setZero();
  h.selfadjointView<Eigen::Lower>().rankUpdate(y.transpose());
  h = h.selfadjointView<Eigen::Lower>();

  RedundancyMatrix out;
  out.matrix = Eigen::MatrixXd::Identity(nq, nq) - h * c.asDiagonal();
  out.diagonal = out.matrix.diagonal();
  out.static_indeterminacy = state.static_indeterminacy();
  return out;
}

double redundancy_diagonal_entry(const AnalysisState& state, int r) {
  if (r < 0 || r >= state.member_count()) {
    throw Error(fmt::format("member index {} out of range", r));
  }
  const Eigen::VectorXd a_r = state.compatibility().row(r).transpose();
  return 1.0 - state.member_stiffness()[r] * a_r.dot(state.solve(a_r));
}

Eigen::VectorXd redundancy_diagonal(const AnalysisState& state) {
  const Eigen::MatrixXd y = state.solve_lower(state.compatibility().transpose());
  return Eigen::VectorXd::Ones(state.member_count()) -
         state.member_stiffness().cwiseProduct(y.colwise().squaredNorm().transpose());
}

Eigen::VectorXd apply_redundancy(const RedundancyMatrix& redundancy,
                                 const Eigen::VectorXd& e0) {
  if (e0.size() != redundancy.size()) {
    throw Error(fmt::format("pre-deformation vector has {} entries, expected {}",
                            e0.size(), redundancy.size()));
  }
  return -(redundancy.matrix * e0);
}

Eigen::MatrixXd stress_influence(const RedundancyMatrix& redundancy,
                                 const Eigen::VectorXd& member_stiffness) {
  if (member_stiffness.size() != redundancy.size()) {
    throw Error("material matrix does not match the redundancy matrix");
  }
  return -(member_stiffness.asDiagonal() * redundancy.matrix);
}

UpdatedSystem remove_element_update(const AnalysisState& state,
                                    const RedundancyMatrix& redundancy, int r,
                                    double threshold) {
  const int nq = state.member_count();
  if (r < 0 || r >= nq) {
    throw Error(fmt::format("member index {} out of range", r));
  }
  const int id = state.element_ids()[r];
  const double r_rr = redundancy.matrix(r, r);
  if (r_rr < threshold) {
    throw MechanismError(
        fmt::format("element {} is a statically determinate member "
                    "(R_rr = {:.3e}); removing it creates a mechanism",
                    id, r_rr),
        1, {}, id);
  }

  const Eigen::RowVectorXd a_r = state.compatibility().row(r);
  const double c_r = state.member_stiffness()[r];

  Eigen::MatrixXd k = state.stiffness() - c_r * a_r.transpose() * a_r;
  k = 0.5 * (k + k.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> factor = state.factor();
  if (a_r.squaredNorm() > 0.0) {
    factor.rankUpdate(a_r.transpose(), -c_r);
    if (factor.info() != Eigen::Success) {
      throw MechanismError(
          fmt::format("removing element {} leaves a singular stiffness matrix",
                      id),
          1, {}, id);
    }
  }

  std::vector<int> ids = state.element_ids();
  ids.erase(ids.begin() + r);

  // R~_ij = R_ij - R_ir R_rj / R_rr on the remaining members.
  const Eigen::MatrixXd& rm = redundancy.matrix;
  Eigen::MatrixXd full = rm - (rm.col(r) / r_rr) * rm.row(r);
  Eigen::MatrixXd reduced(nq - 1, nq - 1);
  const Eigen::Index tail = nq - r - 1;
  reduced.topLeftCorner(r, r) = full.topLeftCorner(r, r);
  reduced.topRightCorner(r, tail) = full.topRightCorner(r, tail);
  reduced.bottomLeftCorner(tail, r) = full.bottomLeftCorner(tail, r);
  reduced.bottomRightCorner(tail, tail) = full.bottomRightCorner(tail, tail);

  RedundancyMatrix updated;
  updated.matrix = std::move(reduced);
  updated.diagonal = updated.matrix.diagonal();
  updated.static_indeterminacy = redundancy.static_indeterminacy - 1;

  AnalysisState next = AnalysisState::from_factor(
      drop_row(state.compatibility(), r),
      drop_entry(state.member_stiffness(), r), std::move(k), std::move(factor),
      drop_entry(state.lengths(), r), std::move(ids), state.dofs(),
      state.rank());
  return {std::move(next), std::move(updated)};
}

UpdatedSystem add_element_update(const AnalysisState& state,
                                 const RedundancyMatrix& redundancy,
                                 const Eigen::RowVectorXd& row, double c,
                                 double length, int element_id) {
  if (row.size() != state.dof_count()) {
    throw Error("compatibility row does not match the dof count");
  }
  if (!(c > 0.0)) throw Error("member stiffness must be positive");

  const int nq = state.member_count();
  const Eigen::MatrixXd& a = state.compatibility();
  const Eigen::VectorXd& cs = state.member_stiffness();

  const Eigen::VectorXd y = state.solve(Eigen::VectorXd(row.transpose()));
  const Eigen::VectorXd g = a * y;
  const double t = row.dot(y);
  const double denom = 1.0 + c * t;
  const double gamma = c / denom;

  Eigen::MatrixXd rm(nq + 1, nq + 1);
  rm.topLeftCorner(nq, nq) =
      redundancy.matrix + (gamma * g) * g.cwiseProduct(cs).transpose();
  rm.topRightCorner(nq, 1) = -gamma * g;
  rm.bottomLeftCorner(1, nq) = -(g.cwiseProduct(cs) / denom).transpose();
  rm(nq, nq) = 1.0 / denom;

  Eigen::MatrixXd a_new(nq + 1, a.cols());
  a_new.topRows(nq) = a;
  a_new.row(nq) = row;
  Eigen::VectorXd c_new(nq + 1);
  c_new << cs, c;
  Eigen::VectorXd l_new(nq + 1);
  l_new << state.lengths(), length;
  std::vector<int> ids = state.element_ids();
  ids.push_back(element_id);

  Eigen::MatrixXd k = state.stiffness() + c * row.transpose() * row;
  k = 0.5 * (k + k.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> factor = state.factor();
  factor.rankUpdate(row.transpose(), c);

  RedundancyMatrix updated;
  updated.matrix = std::move(rm);
  updated.diagonal = updated.matrix.diagonal();
  updated.static_indeterminacy = redundancy.static_indeterminacy + 1;

  AnalysisState next = AnalysisState::from_factor(
      std::move(a_new), std::move(c_new), std::move(k), std::move(factor),
      std::move(l_new), std::move(ids), state.dofs(), state.rank());
  return {std::move(next), std::move(updated)};
}

}  // namespace redkit
