#include "redkit/assemblability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "parallel.hpp"
#include "redkit/errors.hpp"

namespace redkit {

ImperfectionStrainField imperfection_strains(const AnalysisState& state,
                                             const RedundancyMatrix& redundancy,
                                             const Eigen::VectorXd& alpha) {
  const int nq = state.member_count();
  if (alpha.size() != nq || redundancy.size() != nq) {
    throw Error(fmt::format("imperfection vector has {} entries, expected {}",
                            alpha.size(), nq));
  }
  const Eigen::VectorXd& lengths = state.lengths();
  ImperfectionStrainField field;
  field.eps = -(lengths.cwiseInverse().asDiagonal() * redundancy.matrix *
                alpha.cwiseProduct(lengths).asDiagonal());
  field.alpha = alpha;
  field.lengths = lengths;
  field.element_ids = state.element_ids();
  return field;
}

Eigen::VectorXd imperfection_strain_column(const AnalysisState& state,
                                           double alpha_t, int t) {
  if (t < 0 || t >= state.member_count()) {
    throw Error(fmt::format("member index {} out of range", t));
  }
  const Eigen::MatrixXd& a = state.compatibility();
  // Column t of R is e_t - c_t A K^-1 a_t^T.
  Eigen::VectorXd r_t =
      -state.member_stiffness()[t] *
      (a * state.solve(Eigen::VectorXd(a.row(t).transpose())));
  r_t[t] += 1.0;
  const Eigen::VectorXd& lengths = state.lengths();
  return -(alpha_t * lengths[t]) * r_t.cwiseQuotient(lengths);
}

StrainNorms imperfection_norms(const ImperfectionStrainField& field, int k) {
  if (k < 0 || k >= field.size()) {
    throw Error(fmt::format("member index {} out of range", k));
  }
  const auto col = field.eps.col(k);
  return {col.size() ? col.cwiseAbs().maxCoeff() : 0.0, col.norm()};
}

StrainNorms imperfection_matrix_norms(const ImperfectionStrainField& field) {
  if (field.eps.size() == 0) return {};
  return {field.eps.cwiseAbs().maxCoeff(), field.eps.norm()};
}

// ---------------------------------------------------------------------------
// Assembly sequences

std::string_view to_string(SequenceCriterion criterion) {
  switch (criterion) {
    case SequenceCriterion::kPeakMaxStrain: return "peak-max-strain";
    case SequenceCriterion::kElementPeak: return "element-peak";
  }
  return "unknown";
}

namespace {

ModelError plan_error(const std::string& message) {
  return ModelError(ModelError::Kind::kSchema, "/plan", message);
}

std::vector<int> indices_of(const StructuralModel& model,
                            std::span<const int> ids) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (int id : ids) {
    const auto k = model.find_element(id);
    if (!k) {
      throw ModelError(ModelError::Kind::kDanglingReference, "/plan",
                       fmt::format("plan references missing element {}", id));
    }
    out.push_back(*k);
  }
  return out;
}

// Assembly imperfections: zero on base and prefabricated members.
Eigen::VectorXd assembly_alpha(const StructuralModel& model,
                               std::span<const int> base_indices) {
  Eigen::VectorXd alpha = effective_alpha(model);
  for (int k : base_indices) alpha[k] = 0.0;
  return alpha;
}

struct Snapshot {
  std::vector<int> members;  ///< model indices, row order of the state
  Eigen::VectorXd strain;    ///< per member
  int static_indeterminacy = 0;
};

Snapshot snapshot_from(const AnalysisState& state,
                       const RedundancyMatrix& redundancy,
                       const StructuralModel& model,
                       const Eigen::VectorXd& alpha) {
  Snapshot s;
  const int nq = state.member_count();
  s.members.resize(nq);
  Eigen::VectorXd e0(nq);
  for (int j = 0; j < nq; ++j) {
    s.members[j] = model.element_index(state.element_ids()[j]);
    e0[j] = alpha[s.members[j]] * state.lengths()[j];
  }
  s.strain = apply_redundancy(redundancy, e0).cwiseQuotient(state.lengths());
  s.static_indeterminacy = redundancy.static_indeterminacy;
  return s;
}

void record(SequenceStep& step, const StructuralModel& model,
            const Snapshot& snap) {
  step.strain.assign(model.element_count(), std::nullopt);
  step.max_abs_strain = 0.0;
  for (std::size_t j = 0; j < snap.members.size(); ++j) {
    step.strain[snap.members[j]] = snap.strain[static_cast<Eigen::Index>(j)];
    step.max_abs_strain = std::max(step.max_abs_strain, std::abs(snap.strain[j]));
  }
  step.static_indeterminacy = snap.static_indeterminacy;
}

bool exceeds(double value, double reference, double tolerance) {
  return value > reference * (1.0 + tolerance) && value - reference > 1e-300;
}

}  // namespace

SequenceEvaluation evaluate_sequence(const StructuralModel& model,
                                     const PlanSpec& plan,
                                     const SequenceOptions& options) {
  const std::vector<int> base = indices_of(model, plan.base);
  const std::vector<int> order = indices_of(model, plan.order);
  {
    std::vector<int> all = base;
    all.insert(all.end(), order.begin(), order.end());
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
      throw plan_error("an element appears more than once in base and order");
    }
    if (static_cast<int>(all.size()) != model.element_count()) {
      throw plan_error(fmt::format(
          "base and order cover {} of {} elements", all.size(),
          model.element_count()));
    }
  }
  const Eigen::VectorXd alpha = assembly_alpha(model, base);

  SequenceEvaluation out;
  out.base = plan.base;
  out.order = plan.order;
  out.element_ids = model.element_ids();
  out.steps.resize(order.size() + 1);
  for (std::size_t l = 0; l < out.steps.size(); ++l) {
    out.steps[l].step = static_cast<int>(l);
    if (l > 0) out.steps[l].added_element = plan.order[l - 1];
  }

  const AnalysisState base_state = build_matrices(select_elements(model, base));
  const RedundancyMatrix base_r = compute_redundancy_matrix(base_state);
  record(out.steps[0], model, snapshot_from(base_state, base_r, model, alpha));
  // The base carries no imperfections, so step 0 is exactly zero.
  for (auto& v : out.steps[0].strain) {
    if (v) *v = 0.0;
  }
  out.steps[0].max_abs_strain = 0.0;

  std::vector<int> assembled = base;
  if (options.rank_one_updates) {
    UpdatedSystem current{base_state, base_r};
    for (std::size_t l = 1; l < out.steps.size(); ++l) {
      const int k = order[l - 1];
      const double length = model.length(k);
      current = add_element_update(
          current.state, current.redundancy,
          compatibility_row(model, current.state.dofs(), k),
          model.elements[k].axial_stiffness / length, length,
          model.elements[k].id);
      record(out.steps[l], model,
             snapshot_from(current.state, current.redundancy, model, alpha));
    }
  } else {
    for (std::size_t l = 1; l < out.steps.size(); ++l) {
      assembled.push_back(order[l - 1]);
      if (out.feasible) {
        try {
          const AnalysisState state =
              build_matrices(select_elements(model, assembled));
          record(out.steps[l], model,
                 snapshot_from(state, compute_redundancy_matrix(state), model,
                               alpha));
          continue;
        } catch (const MechanismError& e) {
          spdlog::debug("assembly step {} is a mechanism: {}", l, e.what());
        } catch (const NumericalError& e) {
          spdlog::debug("assembly step {} is singular: {}", l, e.what());
        }
        out.feasible = false;
        out.infeasible_from = static_cast<int>(l);
      }
      out.steps[l].feasible = false;
      out.steps[l].strain.assign(model.element_count(), std::nullopt);
    }
  }

  if (out.feasible) {
    out.final_max = out.steps.back().max_abs_strain;
    for (const SequenceStep& s : out.steps) {
      out.peak_max = std::max(out.peak_max, s.max_abs_strain);
    }
    for (std::size_t l = 0; l + 1 < out.steps.size(); ++l) {
      if (exceeds(out.steps[l].max_abs_strain, out.final_max,
                  options.exceed_tolerance)) {
        out.exceeds_final = true;
      }
    }
  }
  return out;
}

namespace {

struct SubsetValue {
  bool feasible = false;
  double max_abs = 0.0;
  double tracked = 0.0;
};

class SubsetEvaluator {
 public:
  SubsetEvaluator(const StructuralModel& model, std::vector<int> base,
                  std::vector<int> onsite, int tracked_index)
      : model_(model),
        base_(std::move(base)),
        onsite_(std::move(onsite)),
        tracked_(tracked_index),
        alpha_(assembly_alpha(model_, base_)) {}

  int onsite_count() const { return static_cast<int>(onsite_.size()); }
  int onsite_id(int j) const { return model_.elements[onsite_[j]].id; }

  SubsetValue evaluate(std::uint64_t mask) const {
    std::vector<int> members = base_;
    for (int j = 0; j < onsite_count(); ++j) {
      if (mask & (std::uint64_t{1} << j)) members.push_back(onsite_[j]);
    }
    std::sort(members.begin(), members.end());
    SubsetValue v;
    try {
      const AnalysisState state = build_matrices(select_elements(model_, members));
      const int nq = state.member_count();
      Eigen::VectorXd e0(nq);
      for (int i = 0; i < nq; ++i) e0[i] = alpha_[members[i]] * state.lengths()[i];
      const StaticSolution sol =
          solve_static(state, Eigen::VectorXd::Zero(state.dof_count()), e0);
      const Eigen::VectorXd strain =
          sol.elastic_elongation.cwiseQuotient(state.lengths());
      v.feasible = true;
      v.max_abs = nq ? strain.cwiseAbs().maxCoeff() : 0.0;
      for (int i = 0; i < nq; ++i) {
        if (members[i] == tracked_) v.tracked = std::abs(strain[i]);
      }
    } catch (const MechanismError&) {
    } catch (const NumericalError&) {
    }
    return v;
  }

 private:
  const StructuralModel& model_;
  std::vector<int> base_;
  std::vector<int> onsite_;
  int tracked_;
  Eigen::VectorXd alpha_;
};

struct Candidate {
  std::vector<int> order;  ///< on-site positions
  double score = 0.0;
  double peak_max = 0.0;    ///< over intermediate steps
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score < b.score;
  if (a.peak_max != b.peak_max) return a.peak_max < b.peak_max;
  return a.order < b.order;
}

}  // namespace

SearchResult search_sequences(const StructuralModel& model,
                              std::span<const int> base_ids,
                              const SearchOptions& options) {
  const std::vector<int> base = indices_of(model, base_ids);
  std::vector<bool> in_base(model.element_count(), false);
  for (int k : base) {
    if (in_base[k]) throw plan_error("base lists an element twice");
    in_base[k] = true;
  }
  std::vector<int> onsite;
  for (int k = 0; k < model.element_count(); ++k) {
    if (!in_base[k]) onsite.push_back(k);
  }
  const int m = static_cast<int>(onsite.size());
  if (m == 0) throw plan_error("no on-site elements outside the base");
  if (m > 62) throw plan_error("at most 62 on-site elements are supported");

  int tracked = -1;
  if (options.criterion == SequenceCriterion::kElementPeak) {
    tracked = model.element_index(options.tracked_element);
  }
  const SubsetEvaluator evaluator(model, base, onsite, tracked);
  auto criterion_value = [&](const SubsetValue& v) {
    return options.criterion == SequenceCriterion::kElementPeak ? v.tracked
                                                                : v.max_abs;
  };

  SearchResult out;
  out.base.assign(base_ids.begin(), base_ids.end());
  const std::uint64_t full = (std::uint64_t{1} << m) - 1;

  std::unordered_map<std::uint64_t, SubsetValue> memo;
  auto evaluate_all = [&](const std::vector<std::uint64_t>& masks) {
    std::vector<SubsetValue> values(masks.size());
    detail::parallel_for(static_cast<int>(masks.size()), options.threads,
                         [&](int i) { values[i] = evaluator.evaluate(masks[i]); });
    for (std::size_t i = 0; i < masks.size(); ++i) memo[masks[i]] = values[i];
    out.structures += static_cast<int>(masks.size());
  };

  evaluate_all({0, full});
  if (!memo[0].feasible) {
    throw MechanismError("the assembly base is kinematically indeterminate", 1);
  }
  if (!memo[full].feasible) {
    throw MechanismError("the assembled structure is kinematically indeterminate", 1);
  }
  out.final_max = memo[full].max_abs;

  const int keep = std::max(options.max_plans, 1);
  std::vector<Candidate> finished;

  if (m <= options.exhaustive_limit) {
    std::vector<std::uint64_t> masks;
    for (std::uint64_t mask = 1; mask < full; ++mask) masks.push_back(mask);
    evaluate_all(masks);
    std::vector<SubsetValue> table(full + 1);
    for (const auto& [mask, v] : memo) table[mask] = v;

    // Bounded max-heap of the best `keep` plans.
    auto worse = [](const Candidate& a, const Candidate& b) { return better(a, b); };
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> heap(worse);
    Candidate c;
    c.order.resize(m);
    std::iota(c.order.begin(), c.order.end(), 0);
    do {
      std::uint64_t mask = 0;
      bool feasible = true;
      c.score = 0.0;
      c.peak_max = 0.0;
      for (int l = 0; l < m; ++l) {
        mask |= std::uint64_t{1} << c.order[l];
        const SubsetValue& v = table[mask];
        if (!v.feasible) {
          feasible = false;
          break;
        }
        c.score = std::max(c.score, criterion_value(v));
        if (l + 1 < m) c.peak_max = std::max(c.peak_max, v.max_abs);
      }
      if (!feasible) {
        ++out.infeasible;
        continue;
      }
      ++out.orderings;
      if (static_cast<int>(heap.size()) < keep) {
        heap.push(c);
      } else if (better(c, heap.top())) {
        heap.pop();
        heap.push(c);
      }
    } while (std::next_permutation(c.order.begin(), c.order.end()));
    while (!heap.empty()) {
      finished.push_back(heap.top());
      heap.pop();
    }
  } else {
    out.exhaustive = false;
    // Beam over assembled subsets; for equal subsets only the lowest score so
    // far can lead to a better plan.
    std::vector<std::pair<std::uint64_t, Candidate>> beam{{0, Candidate{}}};
    for (int l = 0; l < m; ++l) {
      std::vector<std::uint64_t> fresh;
      for (const auto& [mask, cand] : beam) {
        for (int j = 0; j < m; ++j) {
          const std::uint64_t next = mask | (std::uint64_t{1} << j);
          if (next != mask && !memo.count(next)) fresh.push_back(next);
        }
      }
      std::sort(fresh.begin(), fresh.end());
      fresh.erase(std::unique(fresh.begin(), fresh.end()), fresh.end());
      evaluate_all(fresh);

      std::unordered_map<std::uint64_t, Candidate> best;
      for (const auto& [mask, cand] : beam) {
        for (int j = 0; j < m; ++j) {
          const std::uint64_t next = mask | (std::uint64_t{1} << j);
          if (next == mask) continue;
          const SubsetValue& v = memo.at(next);
          if (!v.feasible) {
            ++out.infeasible;
            continue;
          }
          Candidate c = cand;
          c.order.push_back(j);
          c.score = std::max(c.score, criterion_value(v));
          if (l + 1 < m) c.peak_max = std::max(c.peak_max, v.max_abs);
          auto it = best.find(next);
          if (it == best.end() || better(c, it->second)) best[next] = std::move(c);
        }
      }
      beam.clear();
      for (auto& [mask, cand] : best) beam.emplace_back(mask, std::move(cand));
      std::sort(beam.begin(), beam.end(), [](const auto& a, const auto& b) {
        return better(a.second, b.second);
      });
      if (static_cast<int>(beam.size()) > options.beam_width) {
        beam.resize(options.beam_width);
      }
      if (beam.empty()) break;
    }
    for (auto& [mask, cand] : beam) {
      if (mask == full) finished.push_back(std::move(cand));
    }
    out.orderings = static_cast<long long>(finished.size());
  }

  if (finished.empty()) throw Error("no feasible assembly order");
  std::sort(finished.begin(), finished.end(), better);
  if (static_cast<int>(finished.size()) > keep) finished.resize(keep);
  for (const Candidate& c : finished) {
    RankedPlan p;
    p.score = c.score;
    p.peak_max = std::max(c.peak_max, out.final_max);
    p.exceeds_final = exceeds(c.peak_max, out.final_max, options.exceed_tolerance);
    for (int j : c.order) p.order.push_back(evaluator.onsite_id(j));
    out.plans.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------

ImperfectionOptimizationResult optimize_imperfection_sensitivity(
    const StructuralModel& model, int target_id, const OptimizerOptions& options,
    const ProgressCallback& progress, std::stop_token stop) {
  if (!model.design || model.design->size() == 0) {
    throw ModelError(ModelError::Kind::kSchema, "/design",
                     "model has no design variables");
  }
  const int t = model.element_index(target_id);
  const double alpha_t = effective_alpha(model)[t];
  const DesignSpace& space = *model.design;
  const int nv = space.size();

  AnalysisOptions fast;
  fast.skip_rank_check = true;
  auto column_at = [&](const Eigen::VectorXd& s) -> std::optional<Eigen::VectorXd> {
    try {
      return imperfection_strain_column(
          build_matrices(apply_design(model, s), fast), alpha_t, t);
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
  problem.residuals = column_at;
  problem.objective = [&](const Eigen::VectorXd& s) -> std::optional<double> {
    auto col = column_at(s);
    if (!col) return std::nullopt;
    return col->norm();
  };

  // The minimum is generally nonzero, so only stalling ends the run.
  OptimizerOptions opts = options;
  opts.objective_tolerance = 0.0;

  ImperfectionOptimizationResult out;
  out.target = target_id;
  out.optimization = minimize_design(problem, opts, progress, std::move(stop));
  out.design = out.optimization.best;
  out.initial_norm = out.optimization.initial_objective;
  out.final_norm = out.optimization.best_objective;
  out.model = apply_design(model, out.design);
  return out;
}

}  // namespace redkit
