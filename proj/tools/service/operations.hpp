#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "redkit/analysis.hpp"
#include "redkit/assemblability.hpp"
#include "redkit/model.hpp"
#include "redkit/redundancy.hpp"

namespace redkit::service {

// Request handlers shared by the CLI and the HTTP service, so both emit the
// same structured bodies for the same inputs.

/// Matrices and R of one model, reused across requests on a revision.
struct Derived {
  AnalysisState state;
  RedundancyMatrix redundancy;
};

Derived derive(const StructuralModel& model);

struct ComputeOptions {
  int threads = 1;
};

nlohmann::json analyze(const StructuralModel& model, const Derived& derived);

nlohmann::json redundancy(const Derived& derived, bool include_matrix);

/// `loads` replaces the model's loads when present (document format).
nlohmann::json robustness(const StructuralModel& model, const Derived& derived,
                          const std::optional<nlohmann::json>& loads,
                          const ComputeOptions& options);

/// One element, or a chain when more than one id is given.
nlohmann::json whatif_remove(const StructuralModel& model,
                             const Derived& derived,
                             const std::vector<int>& element_ids,
                             const std::optional<nlohmann::json>& loads);

/// `overrides` maps element ids (as strings) to alpha.
nlohmann::json imperfection(const StructuralModel& model,
                            const Derived& derived,
                            const nlohmann::json& overrides, bool include_matrix);

/// Falls back to the model's plan for missing base/order.
PlanSpec plan_from(const StructuralModel& model,
                   const std::optional<std::vector<int>>& base,
                   const std::optional<std::vector<int>>& order);

nlohmann::json sequence_evaluate(const StructuralModel& model,
                                 const PlanSpec& plan, bool rank_one_updates);

nlohmann::json sequence_search(const StructuralModel& model,
                               const std::vector<int>& base,
                               const SearchOptions& options);

/// Element ids from a JSON array of integers; throws ModelError(kSchema).
std::vector<int> id_list(const nlohmann::json& value, const std::string& path);

}  // namespace redkit::service
