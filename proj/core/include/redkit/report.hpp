#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "redkit/analysis.hpp"
#include "redkit/assemblability.hpp"
#include "redkit/model.hpp"
#include "redkit/redundancy.hpp"
#include "redkit/robustness.hpp"

namespace redkit {

// Structured bodies carry full double precision; text tables use 6
// significant digits. Elongations are in meters, echoed in micrometers.

nlohmann::json findings_json(const ValidationReport& report);
nlohmann::json static_json(const AnalysisState& state,
                           const StaticSolution& solution);
nlohmann::json redundancy_json(const AnalysisState& state,
                               const RedundancyMatrix& redundancy,
                               bool include_matrix = false);
nlohmann::json scenario_json(const RemovalScenario& scenario);
nlohmann::json robustness_json(const RobustnessReport& report);
nlohmann::json chain_json(const ChainedRemoval& chain);
nlohmann::json trace_json(const DesignResult& result);
nlohmann::json homogenization_json(const HomogenizationResult& result);
nlohmann::json imperfection_json(const ImperfectionStrainField& field,
                                 bool include_matrix = false);
nlohmann::json imperfection_optimization_json(
    const ImperfectionOptimizationResult& result);
nlohmann::json sequence_json(const SequenceEvaluation& evaluation);
nlohmann::json search_json(const SearchResult& result);

/// {"revision": r, "result": body}, the shape shared by CLI and service.
nlohmann::json envelope(long long revision, nlohmann::json result);
/// Canonical text of a structured body (two-space indent, trailing newline).
std::string dump_document(const nlohmann::json& document);

std::string format_number(double value);

std::string static_table(const AnalysisState& state,
                         const StaticSolution& solution);
std::string redundancy_table(const AnalysisState& state,
                             const RedundancyMatrix& redundancy);
std::string robustness_text(const RobustnessReport& report);
std::string chain_text(const ChainedRemoval& chain);
std::string homogenization_text(const HomogenizationResult& result);
std::string imperfection_text(const ImperfectionStrainField& field);
std::string imperfection_optimization_text(
    const ImperfectionOptimizationResult& result);
std::string sequence_text(const SequenceEvaluation& evaluation);
std::string search_text(const SearchResult& result);

}  // namespace redkit
