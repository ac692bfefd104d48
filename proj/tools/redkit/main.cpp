#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "redkit/analysis.hpp"
#include "redkit/assemblability.hpp"
#include "redkit/errors.hpp"
#include "redkit/logging.hpp"
#include "redkit/matrix_io.hpp"
#include "redkit/model.hpp"
#include "redkit/redundancy.hpp"
#include "redkit/report.hpp"
#include "redkit/robustness.hpp"
#include "service/operations.hpp"
#include "service/server.hpp"

namespace {

using nlohmann::json;
using namespace redkit;

constexpr int kExitUsage = 1;
constexpr int kExitModel = 2;
constexpr int kExitNumerical = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string format = "table";
  std::string output;
  int threads = 0;
  std::optional<double> tolerance;

  bool json_output() const { return format == "json"; }
  int thread_count() const {
    if (threads > 0) return threads;
    return std::max(1u, std::thread::hardware_concurrency());
  }
};

class Emitter {
 public:
  explicit Emitter(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_.open(path);
    if (!file_) throw UsageError(fmt::format("cannot write {}", path));
  }
  std::ostream& out() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

StructuralModel read_model(const std::string& path) {
  StructuralModel model;
  try {
    model = load_model(path);
  } catch (const ModelError&) {
    throw;
  } catch (const Error& e) {
    throw ModelError(ModelError::Kind::kSchema, "", e.what());
  }
  const ValidationReport report = validate_model(model);
  if (report.ok()) return model;
  const Finding& first = report.findings.front();
  const std::string line = fmt::format("{}: {} ({} finding{})", first.subject,
                                       first.message, report.findings.size(),
                                       report.findings.size() == 1 ? "" : "s");
  bool only_mechanism = true;
  for (const Finding& f : report.findings) {
    only_mechanism = only_mechanism && f.kind == Finding::Kind::kRigidBodyMode;
  }
  if (only_mechanism) throw MechanismError(line, 1);
  throw ModelError(ModelError::Kind::kSchema, "", line);
}

OptimizerOptions optimizer_options(const Globals& g) {
  OptimizerOptions opts;
  opts.threads = g.thread_count();
  if (g.tolerance) opts.objective_tolerance = *g.tolerance;
  return opts;
}

// "n3:0,-100" or "3:0,-100,0".
json parse_load(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw UsageError(fmt::format("load '{}' is not of the form n<id>:fx,fy[,fz]", spec));
  }
  std::string node = spec.substr(0, colon);
  if (!node.empty() && (node[0] == 'n' || node[0] == 'N')) node.erase(0, 1);
  json vector = json::array();
  try {
    std::size_t used = 0;
    const int id = std::stoi(node, &used);
    if (used != node.size()) throw std::invalid_argument(node);
    std::string rest = spec.substr(colon + 1);
    std::size_t start = 0;
    while (start <= rest.size()) {
      const auto comma = rest.find(',', start);
      const std::string part =
          rest.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      std::size_t n = 0;
      const double v = std::stod(part, &n);
      if (n != part.size()) throw std::invalid_argument(part);
      vector.push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return {{"node", id}, {"vector", std::move(vector)}};
  } catch (const std::logic_error&) {
    throw UsageError(fmt::format("load '{}' is not of the form n<id>:fx,fy[,fz]", spec));
  }
}

json parse_alpha(const std::vector<std::string>& specs) {
  json overrides = json::object();
  for (const std::string& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      throw UsageError(fmt::format("alpha '{}' is not of the form <element>=<value>", spec));
    }
    try {
      std::size_t used = 0;
      const std::string value = spec.substr(eq + 1);
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      overrides[spec.substr(0, eq)] = v;
    } catch (const std::logic_error&) {
      throw UsageError(fmt::format("alpha '{}' has no numeric value", spec));
    }
  }
  return overrides;
}

void write_model_file(const std::string& path, const StructuralModel& model) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw UsageError(fmt::format("cannot write {}", path));
  out << serialize_model(model);
}

void log_progress(const ProgressSnapshot& p) {
  spdlog::info("iteration {}: objective {:.6g}", p.iteration, p.objective);
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string model;
};

void run_analyze(const Globals& g, const AnalyzeArgs& a) {
  const StructuralModel model = read_model(a.model);
  const service::Derived derived = service::derive(model);
  Emitter emit(g.output);
  if (g.json_output()) {
    emit.out() << dump_document(envelope(0, service::analyze(model, derived)));
    return;
  }
  const Eigen::VectorXd f = load_vector(model, derived.state.dofs());
  emit.out() << static_table(
      derived.state,
      solve_static(derived.state, f, Eigen::VectorXd::Zero(derived.state.member_count())));
}

struct RedundancyArgs {
  std::string model;
  bool matrix = false;
  std::string dump_matrix;
};

void run_redundancy(const Globals& g, const RedundancyArgs& a) {
  const StructuralModel model = read_model(a.model);
  const service::Derived derived = service::derive(model);
  if (!a.dump_matrix.empty()) {
    std::ofstream out(a.dump_matrix);
    if (!out) throw UsageError(fmt::format("cannot write {}", a.dump_matrix));
    write_matrix(out, derived.redundancy.matrix);
  }
  Emitter emit(g.output);
  if (g.json_output()) {
    emit.out() << dump_document(envelope(0, service::redundancy(derived, a.matrix)));
    return;
  }
  emit.out() << redundancy_table(derived.state, derived.redundancy);
  if (a.matrix) {
    emit.out() << "\nR =\n";
    write_matrix(emit.out(), derived.redundancy.matrix);
  }
}

struct RobustnessArgs {
  std::string model;
  std::vector<std::string> loads;
  std::vector<int> remove;
};

void run_robustness(const Globals& g, const RobustnessArgs& a) {
  const StructuralModel model = read_model(a.model);
  const service::Derived derived = service::derive(model);
  std::optional<json> loads;
  if (!a.loads.empty()) {
    loads = json::array();
    for (const std::string& spec : a.loads) loads->push_back(parse_load(spec));
  }
  Emitter emit(g.output);
  if (g.json_output()) {
    const json body = a.remove.empty()
                          ? service::robustness(model, derived, loads, {g.thread_count()})
                          : service::whatif_remove(model, derived, a.remove, loads);
    emit.out() << dump_document(envelope(0, body));
    return;
  }
  const Eigen::VectorXd f =
      loads ? load_vector(model, derived.state.dofs(), loads_from_json(model, *loads, "/load"))
            : load_vector(model, derived.state.dofs());
  if (!a.remove.empty()) {
    emit.out() << chain_text(remove_chain(derived.state, derived.redundancy, f, a.remove));
    return;
  }
  RobustnessOptions opts;
  opts.threads = g.thread_count();
  emit.out() << robustness_text(
      robustness_table(derived.state, derived.redundancy, f, opts));
}

struct OptimizeArgs {
  std::string model;
  int max_iterations = OptimizerOptions{}.max_iterations;
  double smoothing_p = 0.0;
  std::string write_model;
};

void run_optimize(const Globals& g, const OptimizeArgs& a) {
  const StructuralModel model = read_model(a.model);
  OptimizerOptions opts = optimizer_options(g);
  opts.max_iterations = a.max_iterations;
  opts.smoothing_p = a.smoothing_p;
  const HomogenizationResult result = homogenize_redundancy(model, opts, log_progress);
  write_model_file(a.write_model, result.model);
  Emitter emit(g.output);
  if (g.json_output()) {
    emit.out() << dump_document(envelope(0, homogenization_json(result)));
  } else {
    emit.out() << homogenization_text(result);
  }
}

struct ImperfectionArgs {
  std::string model;
  std::vector<std::string> alpha;
  bool matrix = false;
  std::optional<int> optimize;
  int max_iterations = OptimizerOptions{}.max_iterations;
  std::string write_model;
};

void run_imperfection(const Globals& g, const ImperfectionArgs& a) {
  StructuralModel model = read_model(a.model);
  const json overrides = parse_alpha(a.alpha);
  Emitter emit(g.output);
  if (a.optimize) {
    // Overrides become part of the model so the optimizer sees them.
    for (const auto& [key, value] : overrides.items()) {
      const auto k = model.find_element(std::stoi(key));
      if (!k) {
        throw ModelError(ModelError::Kind::kDanglingReference, "/alpha/" + key,
                         fmt::format("unknown element {}", key));
      }
      model.elements[*k].alpha = value.get<double>();
    }
    OptimizerOptions opts = optimizer_options(g);
    opts.max_iterations = a.max_iterations;
    const ImperfectionOptimizationResult result =
        optimize_imperfection_sensitivity(model, *a.optimize, opts, log_progress);
    write_model_file(a.write_model, result.model);
    if (g.json_output()) {
      emit.out() << dump_document(envelope(0, imperfection_optimization_json(result)));
    } else {
      emit.out() << imperfection_optimization_text(result);
    }
    return;
  }
  const service::Derived derived = service::derive(model);
  const json body = service::imperfection(
      model, derived, overrides.empty() ? json() : overrides, a.matrix);
  if (g.json_output()) {
    emit.out() << dump_document(envelope(0, body));
    return;
  }
  Eigen::VectorXd alpha = effective_alpha(model);
  for (const auto& [key, value] : overrides.items()) {
    alpha[*model.find_element(std::stoi(key))] = value.get<double>();
  }
  emit.out() << imperfection_text(
      imperfection_strains(derived.state, derived.redundancy, alpha));
}

struct SequenceArgs {
  std::string model;
  std::optional<std::vector<int>> base;
  std::optional<std::vector<int>> order;
  bool search = false;
  std::string criterion = "peak";
  std::optional<int> element;
  int max_plans = SearchOptions{}.max_plans;
  bool rank_one = false;
};

void run_sequence(const Globals& g, const SequenceArgs& a) {
  const StructuralModel model = read_model(a.model);
  Emitter emit(g.output);
  if (a.search) {
    if (a.order) throw UsageError("--order cannot be combined with --search");
    const PlanSpec plan = service::plan_from(model, a.base, std::nullopt);
    SearchOptions opts;
    opts.threads = g.thread_count();
    opts.max_plans = a.max_plans;
    if (a.criterion == "element") {
      if (!a.element) throw UsageError("--criterion element needs --element");
      opts.criterion = SequenceCriterion::kElementPeak;
      opts.tracked_element = *a.element;
    }
    if (g.json_output()) {
      emit.out() << dump_document(
          envelope(0, service::sequence_search(model, plan.base, opts)));
    } else {
      emit.out() << search_text(search_sequences(model, plan.base, opts));
    }
    return;
  }
  const PlanSpec plan = service::plan_from(model, a.base, a.order);
  if (g.json_output()) {
    emit.out() << dump_document(
        envelope(0, service::sequence_evaluate(model, plan, a.rank_one)));
    return;
  }
  SequenceOptions opts;
  opts.rank_one_updates = a.rank_one;
  emit.out() << sequence_text(evaluate_sequence(model, plan, opts));
}

struct ServeArgs {
  std::string model;
  std::string host = "127.0.0.1";
  int port = 8080;
  int guard_ms = 10'000;
};

service::Server* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

void run_serve(const Globals& g, const ServeArgs& a) {
  auto session = std::make_shared<service::Session>(read_model(a.model));
  service::ServerOptions opts;
  opts.guard = std::chrono::milliseconds(a.guard_ms);
  opts.threads = g.thread_count();
  service::Server server(session, opts);
  const int port = server.bind(a.host, a.port);
  if (port < 0) throw UsageError(fmt::format("cannot bind {}:{}", a.host, a.port));
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << fmt::format("listening on http://{}:{}", a.host, port) << std::endl;
  server.listen();
  g_server = nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Redundancy, robustness and assembly analysis of pin-jointed trusses"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "redkit 0.1.0");

  Globals g;
  app.add_option("--format", g.format, "Output format")
      ->check(CLI::IsMember({"table", "json"}))
      ->capture_default_str();
  app.add_option("-o,--output", g.output, "Write the report to this file");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--tolerance", g.tolerance,
                 "Optimizer objective tolerance; 0 runs to stall or the iteration limit")
      ->check(CLI::NonNegativeNumber);

  std::function<void()> action;

  AnalyzeArgs analyze;
  auto* cmd = app.add_subcommand("analyze", "Linear static solve under the model loads");
  cmd->add_option("model", analyze.model, "Model file")->required();
  cmd->callback([&] { action = [&] { run_analyze(g, analyze); }; });

  RedundancyArgs redundancy;
  cmd = app.add_subcommand("redundancy", "Redundancy matrix and its diagonal");
  cmd->add_option("model", redundancy.model, "Model file")->required();
  cmd->add_flag("--matrix", redundancy.matrix, "Include the full matrix");
  cmd->add_option("--dump-matrix", redundancy.dump_matrix,
                  "Write the matrix in plain text to this file");
  cmd->callback([&] { action = [&] { run_redundancy(g, redundancy); }; });

  RobustnessArgs robustness;
  cmd = app.add_subcommand("robustness", "Element-removal report for a load case");
  cmd->add_option("model", robustness.model, "Model file")->required();
  cmd->add_option("--load", robustness.loads,
                  "Point load n<id>:fx,fy[,fz]; replaces the model loads (repeatable)");
  cmd->add_option("--remove", robustness.remove,
                  "Remove these elements one after another (comma separated)")
      ->delimiter(',');
  cmd->callback([&] { action = [&] { run_robustness(g, robustness); }; });

  OptimizeArgs optimize;
  cmd = app.add_subcommand("optimize-robust",
                           "Move design nodes to equalize the redundancy distribution");
  cmd->add_option("model", optimize.model, "Model file")->required();
  cmd->add_option("--max-iterations", optimize.max_iterations)->check(CLI::PositiveNumber);
  cmd->add_option("--smoothing-p", optimize.smoothing_p,
                  "Smooth the spread with log-sum-exp of this sharpness")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--write-model", optimize.write_model, "Save the optimized model");
  cmd->callback([&] { action = [&] { run_optimize(g, optimize); }; });

  ImperfectionArgs imperfection;
  cmd = app.add_subcommand("imperfection", "Strains caused by length imperfections");
  cmd->add_option("model", imperfection.model, "Model file")->required();
  cmd->add_option("--alpha", imperfection.alpha,
                  "Override an element imperfection, <element>=<value> (repeatable)");
  cmd->add_flag("--matrix", imperfection.matrix, "Include the full strain matrix");
  cmd->add_option("--optimize", imperfection.optimize,
                  "Minimize the strain column of this element over the design space");
  cmd->add_option("--max-iterations", imperfection.max_iterations)
      ->check(CLI::PositiveNumber);
  cmd->add_option("--write-model", imperfection.write_model, "Save the optimized model");
  cmd->callback([&] { action = [&] { run_imperfection(g, imperfection); }; });

  SequenceArgs sequence;
  cmd = app.add_subcommand("sequence", "Evaluate or rank assembly orders");
  cmd->add_option("model", sequence.model, "Model file")->required();
  cmd->add_option("--base", sequence.base, "Prefabricated base elements")->delimiter(',');
  cmd->add_option("--order", sequence.order, "On-site assembly order")->delimiter(',');
  cmd->add_flag("--search", sequence.search, "Rank all feasible orders");
  cmd->add_option("--criterion", sequence.criterion, "Ranking criterion")
      ->check(CLI::IsMember({"peak", "element"}))
      ->capture_default_str();
  cmd->add_option("--element", sequence.element, "Element tracked by --criterion element");
  cmd->add_option("--max-plans", sequence.max_plans)->check(CLI::PositiveNumber);
  cmd->add_flag("--rank-one", sequence.rank_one,
                "Use rank-one stiffness updates between steps");
  cmd->callback([&] { action = [&] { run_sequence(g, sequence); }; });

  ServeArgs serve;
  cmd = app.add_subcommand("serve", "Start the local HTTP service");
  cmd->add_option("model", serve.model, "Model file")->required();
  cmd->add_option("--port", serve.port, "Port (0 picks a free one)")
      ->check(CLI::Range(0, 65535))
      ->capture_default_str();
  cmd->add_option("--host", serve.host)->capture_default_str();
  cmd->add_option("--guard-ms", serve.guard_ms,
                  "Time limit for synchronous requests in milliseconds")
      ->check(CLI::PositiveNumber);
  cmd->callback([&] { action = [&] { run_serve(g, serve); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  const auto fail = [](int code, const std::string& message) {
    std::fprintf(stderr, "redkit: %s\n", message.c_str());
    return code;
  };
  try {
    action();
    return 0;
  } catch (const UsageError& e) {
    return fail(kExitUsage, e.what());
  } catch (const ModelError& e) {
    return fail(kExitModel, fmt::format("invalid model: {}", e.what()));
  } catch (const MechanismError& e) {
    return fail(kExitNumerical, fmt::format("mechanism: {}", e.what()));
  } catch (const NumericalError& e) {
    return fail(kExitNumerical, fmt::format("numerical failure: {}", e.what()));
  } catch (const Error& e) {
    return fail(kExitNumerical, e.what());
  } catch (const std::exception& e) {
    return fail(kExitNumerical, fmt::format("unexpected failure: {}", e.what()));
  }
}
