#pragma once

#include <optional>
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

/// eps(i, k): strain in member i caused by the relative length imperfection
/// alpha_k of member k, eps = -L^-1 R alpha L.
struct ImperfectionStrainField {
  Eigen::MatrixXd eps;
  Eigen::VectorXd alpha;
  Eigen::VectorXd lengths;
  std::vector<int> element_ids;  ///< row/column order

  int size() const { return static_cast<int>(eps.rows()); }
};

ImperfectionStrainField imperfection_strains(const AnalysisState& state,
                                             const RedundancyMatrix& redundancy,
                                             const Eigen::VectorXd& alpha);

/// Column t of eps without forming R: one solve with a_t.
Eigen::VectorXd imperfection_strain_column(const AnalysisState& state,
                                           double alpha_t, int t);

struct StrainNorms {
  double max_abs = 0.0;
  double euclid = 0.0;
};

/// Maximum and Euclidean norm of column k.
StrainNorms imperfection_norms(const ImperfectionStrainField& field, int k);
/// Same norms over the whole matrix (entrywise maximum, Frobenius).
StrainNorms imperfection_matrix_norms(const ImperfectionStrainField& field);

// ---------------------------------------------------------------------------
// Assembly sequences

struct SequenceStep {
  int step = 0;                     ///< 0 is the bare base
  std::optional<int> added_element;  ///< id assembled at this step
  bool feasible = true;
  /// Strain per model element (model order); empty for absent members.
  std::vector<std::optional<double>> strain;
  double max_abs_strain = 0.0;
  int static_indeterminacy = 0;
};

struct SequenceEvaluation {
  std::vector<int> base;
  std::vector<int> order;
  std::vector<int> element_ids;     ///< model order, indexes step strains
  std::vector<SequenceStep> steps;  ///< order.size() + 1 entries
  bool feasible = true;
  int infeasible_from = -1;  ///< first infeasible step, or -1
  double final_max = 0.0;
  double peak_max = 0.0;  ///< largest intermediate (or final) max |strain|
  /// An intermediate state exceeds the final maximum strain.
  bool exceeds_final = false;
};

struct SequenceOptions {
  /// Grow intermediate structures with rank-one additions instead of
  /// rebuilding each one.
  bool rank_one_updates = false;
  /// Relative margin above the final max before a peak counts as exceeding.
  double exceed_tolerance = 1e-9;
};

/// Strain profile of an assembly plan. Base members carry no imperfection;
/// on-site members use their alpha unless they are prefabricated. Throws
/// ModelError when base and order do not partition the elements, and
/// MechanismError when the base itself is a mechanism.
SequenceEvaluation evaluate_sequence(const StructuralModel& model,
                                     const PlanSpec& plan,
                                     const SequenceOptions& options = {});

enum class SequenceCriterion {
  kPeakMaxStrain,  ///< largest max |strain| over the steps
  kElementPeak,    ///< largest |strain| of one tracked element
};

std::string_view to_string(SequenceCriterion criterion);

struct SearchOptions {
  SequenceCriterion criterion = SequenceCriterion::kPeakMaxStrain;
  int tracked_element = 0;  ///< id, for kElementPeak
  int exhaustive_limit = 10;
  int beam_width = 64;
  int max_plans = 100;  ///< plans returned
  double exceed_tolerance = 1e-9;
  int threads = 1;
};

struct RankedPlan {
  std::vector<int> order;
  double score = 0.0;
  double peak_max = 0.0;
  bool exceeds_final = false;
};

struct SearchResult {
  std::vector<int> base;
  std::vector<RankedPlan> plans;  ///< best first
  bool exhaustive = true;
  long long orderings = 0;   ///< feasible orderings scored
  long long infeasible = 0;  ///< orderings passing through a mechanism
  int structures = 0;        ///< intermediate structures analysed
  double final_max = 0.0;
};

/// Ranks on-site orderings over the given base. Every ordering is scored
/// when there are at most exhaustive_limit on-site members, beam search is
/// used beyond. Throws Error when no ordering is feasible.
SearchResult search_sequences(const StructuralModel& model,
                              std::span<const int> base,
                              const SearchOptions& options = {});

// ---------------------------------------------------------------------------
// Imperfection-sensitivity optimization

struct ImperfectionOptimizationResult {
  StructuralModel model;
  Eigen::VectorXd design;
  DesignResult optimization;
  int target = 0;  ///< element id
  double initial_norm = 0.0;
  double final_norm = 0.0;
};

/// Minimizes the Euclidean norm of column `target_id` of eps over the
/// model's design space.
ImperfectionOptimizationResult optimize_imperfection_sensitivity(
    const StructuralModel& model, int target_id,
    const OptimizerOptions& options = {}, const ProgressCallback& progress = {},
    std::stop_token stop = {});

}  // namespace redkit
