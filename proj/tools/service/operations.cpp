#include "operations.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "redkit/errors.hpp"
#include "redkit/report.hpp"
#include "redkit/robustness.hpp"

namespace redkit::service {

using nlohmann::json;

namespace {

Eigen::VectorXd load_for(const StructuralModel& model, const Derived& derived,
                         const std::optional<json>& loads) {
  if (!loads) return load_vector(model, derived.state.dofs());
  const std::vector<PointLoad> parsed = loads_from_json(model, *loads, "/load");
  return load_vector(model, derived.state.dofs(), parsed);
}

}  // namespace

Derived derive(const StructuralModel& model) {
  AnalysisState state = build_matrices(model);
  RedundancyMatrix r = compute_redundancy_matrix(state);
  return {std::move(state), std::move(r)};
}

json analyze(const StructuralModel& model, const Derived& derived) {
  const Eigen::VectorXd f = load_vector(model, derived.state.dofs());
  const StaticSolution sol = solve_static(
      derived.state, f, Eigen::VectorXd::Zero(derived.state.member_count()));
  return static_json(derived.state, sol);
}

json redundancy(const Derived& derived, bool include_matrix) {
  return redundancy_json(derived.state, derived.redundancy, include_matrix);
}

json robustness(const StructuralModel& model, const Derived& derived,
                const std::optional<json>& loads, const ComputeOptions& options) {
  RobustnessOptions opts;
  opts.threads = options.threads;
  return robustness_json(robustness_table(
      derived.state, derived.redundancy, load_for(model, derived, loads), opts));
}

json whatif_remove(const StructuralModel& model, const Derived& derived,
                   const std::vector<int>& element_ids,
                   const std::optional<json>& loads) {
  if (element_ids.empty()) {
    throw ModelError(ModelError::Kind::kSchema, "/elements",
                     "no element to remove");
  }
  const Eigen::VectorXd f = load_for(model, derived, loads);
  if (element_ids.size() == 1) {
    const int r = derived.state.member_index(element_ids.front());
    if (r < 0) {
      throw ModelError(ModelError::Kind::kDanglingReference, "/element",
                       fmt::format("unknown element {}", element_ids.front()));
    }
    // Same numbers as the chained path, plus the refactorized det ratio.
    ChainedRemoval chain =
        remove_chain(derived.state, derived.redundancy, f, element_ids);
    chain.steps.front().det_ratio = det_ratio_on_removal(derived.state, r);
    json out = scenario_json(chain.steps.front());
    out["n_s_after"] = chain.static_indeterminacy.front();
    return out;
  }
  return chain_json(remove_chain(derived.state, derived.redundancy, f, element_ids));
}

json imperfection(const StructuralModel& model, const Derived& derived,
                  const json& overrides, bool include_matrix) {
  Eigen::VectorXd alpha = effective_alpha(model);
  if (!overrides.is_null()) {
    if (!overrides.is_object()) {
      throw ModelError(ModelError::Kind::kSchema, "/alpha",
                       "expected an object of element id -> alpha");
    }
    for (const auto& [key, value] : overrides.items()) {
      const std::string path = "/alpha/" + key;
      int id = 0;
      try {
        std::size_t used = 0;
        id = std::stoi(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw ModelError(ModelError::Kind::kSchema, path,
                         "keys must be element ids");
      }
      if (!value.is_number()) {
        throw ModelError(ModelError::Kind::kSchema, path, "expected a number");
      }
      const auto k = model.find_element(id);
      if (!k) {
        throw ModelError(ModelError::Kind::kDanglingReference, path,
                         fmt::format("unknown element {}", id));
      }
      alpha[*k] = value.get<double>();
    }
  }
  return imperfection_json(
      imperfection_strains(derived.state, derived.redundancy, alpha),
      include_matrix);
}

PlanSpec plan_from(const StructuralModel& model,
                   const std::optional<std::vector<int>>& base,
                   const std::optional<std::vector<int>>& order) {
  PlanSpec plan;
  if (model.plan) plan = *model.plan;
  if (base) plan.base = *base;
  if (order) plan.order = *order;
  if (plan.base.empty() && plan.order.empty()) {
    throw ModelError(ModelError::Kind::kSchema, "/plan",
                     "no assembly plan given and none stored in the model");
  }
  if (!order && base) {
    // Base given alone: assemble the rest in id order.
    plan.order.clear();
    for (const TrussElement& e : model.elements) {
      if (std::find(plan.base.begin(), plan.base.end(), e.id) == plan.base.end()) {
        plan.order.push_back(e.id);
      }
    }
  }
  return plan;
}

json sequence_evaluate(const StructuralModel& model, const PlanSpec& plan,
                       bool rank_one_updates) {
  SequenceOptions opts;
  opts.rank_one_updates = rank_one_updates;
  return sequence_json(evaluate_sequence(model, plan, opts));
}

json sequence_search(const StructuralModel& model, const std::vector<int>& base,
                     const SearchOptions& options) {
  return search_json(search_sequences(model, base, options));
}

std::vector<int> id_list(const json& value, const std::string& path) {
  if (!value.is_array()) {
    throw ModelError(ModelError::Kind::kSchema, path, "expected an array of ids");
  }
  std::vector<int> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!value[i].is_number_integer()) {
      throw ModelError(ModelError::Kind::kSchema, fmt::format("{}/{}", path, i),
                       "expected an integer id");
    }
    out.push_back(value[i].get<int>());
  }
  return out;
}

}  // namespace redkit::service
