#pragma once

#include <Eigen/Dense>

#include "redkit/analysis.hpp"

namespace redkit {

/// Removal is rejected when R_rr falls below this value: the member is
/// statically determinate and removing it opens a mechanism.
inline constexpr double kRemovalThreshold = 1e-8;

/// R = I - A K^-1 A^T C (dimensionless, n_q x n_q).
///
/// R is idempotent with trace n_s; its diagonal distributes the degree of
/// static indeterminacy over the members.
struct RedundancyMatrix {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd diagonal;
  int static_indeterminacy = 0;

  int size() const { return static_cast<int>(matrix.rows()); }
  double trace() const { return diagonal.sum(); }
  double spread() const {
    return diagonal.size() ? diagonal.maxCoeff() - diagonal.minCoeff() : 0.0;
  }
};

/// Full dense R, O(n * n_q^2).
RedundancyMatrix compute_redundancy_matrix(const AnalysisState& state);

/// R_rr = 1 - c_r a_r K^-1 a_r^T with a single factored solve.
double redundancy_diagonal_entry(const AnalysisState& state, int r);

/// All diagonal entries without forming R (one triangular solve with A^T).
Eigen::VectorXd redundancy_diagonal(const AnalysisState& state);

/// e_el = -R e_0.
Eigen::VectorXd apply_redundancy(const RedundancyMatrix& redundancy,
                                 const Eigen::VectorXd& e0);

/// -C R: maps pre-deformations to normal-force changes [kN/m].
Eigen::MatrixXd stress_influence(const RedundancyMatrix& redundancy,
                                 const Eigen::VectorXd& member_stiffness);

struct UpdatedSystem {
  AnalysisState state;
  RedundancyMatrix redundancy;
};

/// Removes member `r` (row index of the state) in O(n_q^2 + n^2):
/// Cholesky downdate of K and R~_ij = R_ij - R_ir R_rj / R_rr.
///
/// Throws MechanismError when R_rr < threshold.
UpdatedSystem remove_element_update(const AnalysisState& state,
                                    const RedundancyMatrix& redundancy, int r,
                                    double threshold = kRemovalThreshold);

/// Appends a member with compatibility row `row`, stiffness `c` and length
/// `length` (rank-one update of K^-1 and R). The new member becomes the last
/// row of A.
UpdatedSystem add_element_update(const AnalysisState& state,
                                 const RedundancyMatrix& redundancy,
                                 const Eigen::RowVectorXd& row, double c,
                                 double length, int element_id);

}  // namespace redkit
