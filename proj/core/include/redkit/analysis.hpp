#pragma once

#include <array>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "redkit/model.hpp"

namespace redkit {

/// Numbering of free degrees of freedom. Fixed components are never
/// assembled; they map to -1.
class DofMap {
 public:
  DofMap() = default;
  explicit DofMap(const StructuralModel& model);

  int size() const { return count_; }
  int dimension() const { return dimension_; }
  /// Free-dof index of (node, axis) or -1 when fixed.
  int at(int node, int axis) const { return index_.at(node)[axis]; }

 private:
  int count_ = 0;
  int dimension_ = 2;
  std::vector<std::array<int, 3>> index_;
};

struct AnalysisOptions {
  /// Singular values below tolerance * sigma_max count as zero.
  double rank_tolerance = 1e-10;
  /// Skip the SVD rank check; rank is inferred from a successful Cholesky.
  /// Only for inner loops that re-check determinacy some other way.
  bool skip_rank_check = false;
};

/// Compatibility row of one element: +u at node_b dofs, -u at node_a dofs.
Eigen::RowVectorXd compatibility_row(const StructuralModel& model,
                                     const DofMap& dofs, int element_index);

/// Matrices of a linear truss analysis: A (n_q x n), diag(C), K = A^T C A and
/// its Cholesky factor. Immutable once built; solves are const and may run
/// concurrently.
class AnalysisState {
 public:
  const Eigen::MatrixXd& compatibility() const { return a_; }
  /// Diagonal of the material matrix C, c_k = EA_k / L_k [kN/m].
  const Eigen::VectorXd& member_stiffness() const { return c_; }
  const Eigen::MatrixXd& stiffness() const { return k_; }
  const Eigen::VectorXd& lengths() const { return lengths_; }
  /// User-facing ids of the members, row order of A.
  const std::vector<int>& element_ids() const { return element_ids_; }
  const DofMap& dofs() const { return dofs_; }

  int dof_count() const { return static_cast<int>(a_.cols()); }
  int member_count() const { return static_cast<int>(a_.rows()); }
  int rank() const { return rank_; }
  int static_indeterminacy() const { return member_count() - rank_; }

  /// Row index of the member with the given id, or -1.
  int member_index(int element_id) const;

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  /// L^-1 rhs for the Cholesky factor K = L L^T.
  Eigen::MatrixXd solve_lower(const Eigen::MatrixXd& rhs) const;
  /// log det K from the Cholesky factor.
  double log_determinant() const;
  const Eigen::LLT<Eigen::MatrixXd>& factor() const { return factor_; }

  /// Builds the state from an already assembled system. `k` must equal
  /// A^T diag(c) A; it is factorized here.
  static AnalysisState from_parts(Eigen::MatrixXd a, Eigen::VectorXd c,
                                  Eigen::VectorXd lengths,
                                  std::vector<int> element_ids, DofMap dofs,
                                  int rank);
  /// Same, but reuses an existing factorization of `k`.
  static AnalysisState from_factor(Eigen::MatrixXd a, Eigen::VectorXd c,
                                   Eigen::MatrixXd k,
                                   Eigen::LLT<Eigen::MatrixXd> factor,
                                   Eigen::VectorXd lengths,
                                   std::vector<int> element_ids, DofMap dofs,
                                   int rank);

 private:
  AnalysisState() = default;

  Eigen::MatrixXd a_;
  Eigen::VectorXd c_;
  Eigen::MatrixXd k_;
  Eigen::LLT<Eigen::MatrixXd> factor_;
  Eigen::VectorXd lengths_;
  std::vector<int> element_ids_;
  DofMap dofs_;
  int rank_ = 0;
};

struct StaticSolution {
  Eigen::VectorXd displacements;       ///< d [m]
  Eigen::VectorXd elastic_elongation;  ///< e_el = A d - e_0 [m]
  Eigen::VectorXd total_elongation;    ///< A d [m]
  Eigen::VectorXd normal_force;        ///< s = C e_el [kN]
  double residual = 0.0;               ///< ||K d - f - A^T C e_0||_inf
};

/// Assembles A, C and K and factorizes K.
///
/// Throws MechanismError when rank(A) < n (with the mechanism basis),
/// NumericalError when the factorization fails.
AnalysisState build_matrices(const StructuralModel& model,
                             const AnalysisOptions& options = {});

/// Solves K d = f + A^T C e_0.
StaticSolution solve_static(const AnalysisState& state,
                            const Eigen::VectorXd& f,
                            const Eigen::VectorXd& e0);

/// n_s = n_q - rank(A^T).
int degree_of_static_indeterminacy(const AnalysisState& state);

/// Load vector over the free dofs; components on fixed dofs are dropped.
Eigen::VectorXd load_vector(const StructuralModel& model, const DofMap& dofs);
Eigen::VectorXd load_vector(const StructuralModel& model, const DofMap& dofs,
                            std::span<const PointLoad> loads);

/// Numerical rank of a dense matrix via SVD with relative tolerance.
int numerical_rank(const Eigen::MatrixXd& m, double relative_tolerance);

}  // namespace redkit
