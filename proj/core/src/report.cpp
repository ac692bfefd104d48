#include "redkit/report.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace redkit {

using nlohmann::json;

namespace {

constexpr double kMicro = 1e6;

json number(double value) {
  if (!std::isfinite(value)) return nullptr;
  return value;
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v[i]));
  return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out.push_back(vector_json(m.row(i).transpose()));
  }
  return out;
}

// Column-aligned text: first column left, the rest right-aligned.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header)
      : header_(std::move(header)) {}

  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  std::string render() const {
    std::vector<std::size_t> width(header_.size(), 0);
    auto measure = [&](const std::vector<std::string>& row) {
      for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) {
        width[c] = std::max(width[c], display_width(row[c]));
      }
    };
    measure(header_);
    for (const auto& row : rows_) measure(row);

    std::string out;
    auto emit = [&](const std::vector<std::string>& row) {
      std::string line;
      for (std::size_t c = 0; c < row.size(); ++c) {
        const std::size_t pad = width[c] - display_width(row[c]);
        if (c > 0) line += "  ";
        if (c == 0) {
          line += row[c] + std::string(pad, ' ');
        } else {
          line += std::string(pad, ' ') + row[c];
        }
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      out += line + "\n";
    };
    emit(header_);
    std::size_t total = 0;
    for (std::size_t w : width) total += w;
    out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    for (const auto& row : rows_) emit(row);
    return out;
  }

 private:
  // Counts UTF-8 code points so that unit symbols align.
  static std::size_t display_width(const std::string& s) {
    return static_cast<std::size_t>(std::count_if(
        s.begin(), s.end(), [](char ch) { return (ch & 0xC0) != 0x80; }));
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string join_ids(const std::vector<int>& ids) {
  return fmt::format("{}", fmt::join(ids, ","));
}

}  // namespace

std::string format_number(double value) {
  if (!std::isfinite(value)) return "-";
  if (value == 0.0) return "0";
  return fmt::format("{:.6g}", value);
}

json findings_json(const ValidationReport& report) {
  json out = json::array();
  for (const Finding& f : report.findings) {
    out.push_back({{"kind", to_string(f.kind)},
                   {"subject", f.subject},
                   {"message", f.message}});
  }
  return out;
}

json static_json(const AnalysisState& state, const StaticSolution& solution) {
  json elements = json::array();
  for (int k = 0; k < state.member_count(); ++k) {
    elements.push_back({{"id", state.element_ids()[k]},
                        {"elastic_elongation", number(solution.elastic_elongation[k])},
                        {"total_elongation", number(solution.total_elongation[k])},
                        {"normal_force", number(solution.normal_force[k])}});
  }
  return {{"dofs", state.dof_count()},
          {"members", state.member_count()},
          {"n_s", state.static_indeterminacy()},
          {"displacements", vector_json(solution.displacements)},
          {"elements", std::move(elements)},
          {"residual", number(solution.residual)}};
}

json redundancy_json(const AnalysisState& state,
                     const RedundancyMatrix& redundancy, bool include_matrix) {
  json elements = json::array();
  for (int k = 0; k < redundancy.size(); ++k) {
    elements.push_back({{"id", state.element_ids()[k]},
                        {"redundancy", number(redundancy.diagonal[k])}});
  }
  json out = {{"n_s", redundancy.static_indeterminacy},
              {"trace", number(redundancy.trace())},
              {"spread", number(redundancy.spread())},
              {"elements", std::move(elements)}};
  if (include_matrix) out["matrix"] = matrix_json(redundancy.matrix);
  return out;
}

json scenario_json(const RemovalScenario& s) {
  const bool removable = s.status == RemovalScenario::Status::kRemovable;
  json out = {{"element", s.element_id},
              {"status", to_string(s.status)},
              {"redundancy", number(s.redundancy)}};
  if (removable) {
    out["delta_e"] = number(s.delta_e);
    out["delta_e_um"] = number(s.delta_e * kMicro);
    out["delta_d"] = vector_json(s.delta_d);
    out["det_ratio"] = number(s.det_ratio);
    out["beta"] = number(s.beta);
    out["beta_percent"] = number(s.beta * 100.0);
  } else {
    for (const char* key : {"delta_e", "delta_e_um", "delta_d", "det_ratio",
                            "beta", "beta_percent"}) {
      out[key] = nullptr;
    }
  }
  return out;
}

json robustness_json(const RobustnessReport& report) {
  json scenarios = json::array();
  for (const RemovalScenario& s : report.scenarios) {
    scenarios.push_back(scenario_json(s));
  }
  const RobustnessSummary& sum = report.summary;
  return {{"scenarios", std::move(scenarios)},
          {"summary",
           {{"removable", sum.removable},
            {"critical", sum.critical},
            {"mean_abs_delta_e", number(sum.mean_abs_delta_e)},
            {"mean_abs_delta_e_um", number(sum.mean_abs_delta_e * kMicro)},
            {"mean_beta", number(sum.mean_beta)},
            {"mean_beta_percent", number(sum.mean_beta * 100.0)}}},
          {"displacement_norm", number(report.displacement_norm)},
          {"det_ratio_shortcut", report.det_ratio_shortcut}};
}

json chain_json(const ChainedRemoval& chain) {
  json steps = json::array();
  for (std::size_t i = 0; i < chain.steps.size(); ++i) {
    json s = scenario_json(chain.steps[i]);
    s["n_s_after"] = chain.static_indeterminacy[i];
    steps.push_back(std::move(s));
  }
  json remaining = json::array();
  for (std::size_t k = 0; k < chain.remaining_ids.size(); ++k) {
    remaining.push_back(
        {{"id", chain.remaining_ids[k]},
         {"redundancy", number(chain.final_diagonal[static_cast<Eigen::Index>(k)])}});
  }
  return {{"steps", std::move(steps)}, {"remaining", std::move(remaining)}};
}

json trace_json(const DesignResult& result) {
  json trace = json::array();
  for (const TracePoint& p : result.trace) {
    trace.push_back({{"iteration", p.iteration}, {"objective", number(p.objective)}});
  }
  return {{"status", to_string(result.status)},
          {"initial_objective", number(result.initial_objective)},
          {"best_objective", number(result.best_objective)},
          {"design", vector_json(result.best)},
          {"evaluations", result.evaluations},
          {"rejected", result.rejected},
          {"trace", std::move(trace)}};
}

json homogenization_json(const HomogenizationResult& result) {
  json diag = json::array();
  for (int k = 0; k < result.model.element_count(); ++k) {
    diag.push_back({{"id", result.model.elements[k].id},
                    {"redundancy", number(result.diagonal[k])}});
  }
  return {{"initial_spread", number(result.initial_spread)},
          {"final_spread", number(result.final_spread)},
          {"elements", std::move(diag)},
          {"optimization", trace_json(result.optimization)},
          {"model", model_to_json(result.model)}};
}

json imperfection_json(const ImperfectionStrainField& field,
                       bool include_matrix) {
  json columns = json::array();
  for (int k = 0; k < field.size(); ++k) {
    const StrainNorms n = imperfection_norms(field, k);
    columns.push_back({{"id", field.element_ids[k]},
                       {"alpha", number(field.alpha[k])},
                       {"diagonal", number(field.eps(k, k))},
                       {"max_abs", number(n.max_abs)},
                       {"euclid", number(n.euclid)}});
  }
  const StrainNorms whole = imperfection_matrix_norms(field);
  json out = {{"columns", std::move(columns)},
              {"matrix_norms",
               {{"max_abs", number(whole.max_abs)},
                {"frobenius", number(whole.euclid)}}}};
  if (include_matrix) out["eps"] = matrix_json(field.eps);
  return out;
}

json imperfection_optimization_json(const ImperfectionOptimizationResult& result) {
  const double reduction =
      result.initial_norm > 0.0 ? 1.0 - result.final_norm / result.initial_norm : 0.0;
  return {{"target", result.target},
          {"initial_norm", number(result.initial_norm)},
          {"final_norm", number(result.final_norm)},
          {"reduction_percent", number(reduction * 100.0)},
          {"optimization", trace_json(result.optimization)},
          {"model", model_to_json(result.model)}};
}

json sequence_json(const SequenceEvaluation& evaluation) {
  json steps = json::array();
  for (const SequenceStep& s : evaluation.steps) {
    json strain = json::array();
    for (const auto& v : s.strain) {
      strain.push_back(v ? json(number(*v)) : json("absent"));
    }
    steps.push_back({{"step", s.step},
                     {"added", s.added_element ? json(*s.added_element) : json(nullptr)},
                     {"feasible", s.feasible},
                     {"max_abs_strain", s.feasible ? number(s.max_abs_strain) : json(nullptr)},
                     {"n_s", s.feasible ? json(s.static_indeterminacy) : json(nullptr)},
                     {"strain", std::move(strain)}});
  }
  return {{"base", evaluation.base},
          {"order", evaluation.order},
          {"elements", evaluation.element_ids},
          {"feasible", evaluation.feasible},
          {"infeasible_from", evaluation.infeasible_from >= 0
                                  ? json(evaluation.infeasible_from)
                                  : json(nullptr)},
          {"final_max", number(evaluation.final_max)},
          {"peak_max", number(evaluation.peak_max)},
          {"exceeds_final", evaluation.exceeds_final},
          {"steps", std::move(steps)}};
}

json search_json(const SearchResult& result) {
  json plans = json::array();
  int rank = 1;
  for (const RankedPlan& p : result.plans) {
    plans.push_back({{"rank", rank++},
                     {"order", p.order},
                     {"score", number(p.score)},
                     {"peak_max", number(p.peak_max)},
                     {"exceeds_final", p.exceeds_final}});
  }
  return {{"base", result.base},
          {"exhaustive", result.exhaustive},
          {"orderings", result.orderings},
          {"infeasible", result.infeasible},
          {"structures", result.structures},
          {"final_max", number(result.final_max)},
          {"plans", std::move(plans)}};
}

json envelope(long long revision, json result) {
  return {{"revision", revision}, {"result", std::move(result)}};
}

std::string dump_document(const json& document) {
  return document.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Text tables

std::string static_table(const AnalysisState& state,
                         const StaticSolution& solution) {
  TextTable t({"element", "e_el [m]", "e_total [m]", "N [kN]"});
  for (int k = 0; k < state.member_count(); ++k) {
    t.add({std::to_string(state.element_ids()[k]),
           format_number(solution.elastic_elongation[k]),
           format_number(solution.total_elongation[k]),
           format_number(solution.normal_force[k])});
  }
  std::string out = fmt::format("dofs {}, members {}, n_s {}\n",
                                state.dof_count(), state.member_count(),
                                state.static_indeterminacy());
  out += "displacements [m]:";
  for (Eigen::Index i = 0; i < solution.displacements.size(); ++i) {
    out += " " + format_number(solution.displacements[i]);
  }
  return out + "\n" + t.render();
}

std::string redundancy_table(const AnalysisState& state,
                             const RedundancyMatrix& redundancy) {
  TextTable t({"element", "R_kk"});
  for (int k = 0; k < redundancy.size(); ++k) {
    t.add({std::to_string(state.element_ids()[k]),
           format_number(redundancy.diagonal[k])});
  }
  return fmt::format("n_s {}, trace {}, spread {}\n",
                     redundancy.static_indeterminacy,
                     format_number(redundancy.trace()),
                     format_number(redundancy.spread())) +
         t.render();
}

namespace {

void add_scenario_row(TextTable& t, const RemovalScenario& s) {
  if (s.status == RemovalScenario::Status::kCritical) {
    t.add({std::to_string(s.element_id), format_number(s.redundancy), "-", "-",
           "-", std::string(to_string(s.status))});
    return;
  }
  t.add({std::to_string(s.element_id), format_number(s.redundancy),
         format_number(s.delta_e * kMicro), format_number(s.det_ratio),
         format_number(s.beta * 100.0), std::string(to_string(s.status))});
}

}  // namespace

std::string robustness_text(const RobustnessReport& report) {
  TextTable t({"removed", "R_rr", "Δe_r [μm]", "det ratio", "β_r [%]", "status"});
  for (const RemovalScenario& s : report.scenarios) add_scenario_row(t, s);
  const RobustnessSummary& sum = report.summary;
  t.add({"mean", "", format_number(sum.mean_abs_delta_e * kMicro), "",
         format_number(sum.mean_beta * 100.0), ""});
  return t.render();
}

std::string chain_text(const ChainedRemoval& chain) {
  TextTable t({"removed", "R_rr", "Δe_r [μm]", "det ratio", "β_r [%]", "status"});
  for (const RemovalScenario& s : chain.steps) add_scenario_row(t, s);
  return t.render();
}

std::string homogenization_text(const HomogenizationResult& result) {
  std::string out = fmt::format(
      "spread {} -> {} ({}, {} iterations, {} rejected)\n",
      format_number(result.initial_spread), format_number(result.final_spread),
      to_string(result.optimization.status),
      result.optimization.trace.empty() ? 0 : result.optimization.trace.back().iteration,
      result.optimization.rejected);
  TextTable t({"element", "R_kk"});
  for (int k = 0; k < result.model.element_count(); ++k) {
    t.add({std::to_string(result.model.elements[k].id),
           format_number(result.diagonal[k])});
  }
  return out + t.render();
}

std::string imperfection_text(const ImperfectionStrainField& field) {
  TextTable t({"element", "alpha", "ε_kk", "max |ε_ik|", "‖ε_·k‖₂"});
  for (int k = 0; k < field.size(); ++k) {
    const StrainNorms n = imperfection_norms(field, k);
    t.add({std::to_string(field.element_ids[k]), format_number(field.alpha[k]),
           format_number(field.eps(k, k)), format_number(n.max_abs),
           format_number(n.euclid)});
  }
  const StrainNorms whole = imperfection_matrix_norms(field);
  return t.render() + fmt::format("matrix: max {}, frobenius {}\n",
                                  format_number(whole.max_abs),
                                  format_number(whole.euclid));
}

std::string imperfection_optimization_text(
    const ImperfectionOptimizationResult& result) {
  const double reduction =
      result.initial_norm > 0.0 ? 1.0 - result.final_norm / result.initial_norm : 0.0;
  return fmt::format(
      "element {}: ‖ε‖₂ {} -> {} (reduced {} %, {}, {} rejected)\n",
      result.target, format_number(result.initial_norm),
      format_number(result.final_norm), format_number(reduction * 100.0),
      to_string(result.optimization.status), result.optimization.rejected);
}

std::string sequence_text(const SequenceEvaluation& evaluation) {
  TextTable t({"step", "added", "max |ε|", "n_s", "status"});
  for (const SequenceStep& s : evaluation.steps) {
    t.add({std::to_string(s.step),
           s.added_element ? std::to_string(*s.added_element) : "-",
           s.feasible ? format_number(s.max_abs_strain) : "-",
           s.feasible ? std::to_string(s.static_indeterminacy) : "-",
           s.feasible ? "ok" : "infeasible"});
  }
  std::string out = fmt::format("order {} over base {}\n", join_ids(evaluation.order),
                                join_ids(evaluation.base));
  out += t.render();
  if (evaluation.exceeds_final) {
    out += fmt::format("intermediate peak {} exceeds the final maximum {}\n",
                       format_number(evaluation.peak_max),
                       format_number(evaluation.final_max));
  }
  return out;
}

std::string search_text(const SearchResult& result) {
  TextTable t({"rank", "order", "score", "peak max |ε|", "flag"});
  int rank = 1;
  for (const RankedPlan& p : result.plans) {
    t.add({std::to_string(rank++), join_ids(p.order), format_number(p.score),
           format_number(p.peak_max), p.exceeds_final ? "exceeds final" : ""});
  }
  return fmt::format("{} search, {} feasible orderings, {} infeasible, final max {}\n",
                     result.exhaustive ? "exhaustive" : "beam", result.orderings,
                     result.infeasible, format_number(result.final_max)) +
         t.render();
}

}  // namespace redkit
