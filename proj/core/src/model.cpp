#include "redkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "redkit/errors.hpp"

namespace redkit {

using nlohmann::json;

namespace {

constexpr double kMinLength = 1e-12;

[[noreturn]] void schema_error(const std::string& path,
                               const std::string& message) {
  throw ModelError(ModelError::Kind::kSchema, path, message);
}

const json& require(const json& object, const char* key,
                    const std::string& path) {
  if (!object.is_object()) schema_error(path, "expected an object");
  auto it = object.find(key);
  if (it == object.end()) schema_error(path + "/" + key, "missing key");
  return *it;
}

double as_number(const json& value, const std::string& path) {
  if (!value.is_number()) schema_error(path, "expected a number");
  double x = value.get<double>();
  if (!std::isfinite(x)) schema_error(path, "expected a finite number");
  return x;
}

int as_int(const json& value, const std::string& path) {
  if (!value.is_number_integer()) schema_error(path, "expected an integer");
  return value.get<int>();
}

bool as_bool(const json& value, const std::string& path) {
  if (!value.is_boolean()) schema_error(path, "expected a boolean");
  return value.get<bool>();
}

const json& as_array(const json& value, const std::string& path) {
  if (!value.is_array()) schema_error(path, "expected an array");
  return value;
}

Eigen::Vector3d as_vector(const json& value, int dimension,
                          const std::string& path) {
  as_array(value, path);
  if (static_cast<int>(value.size()) != dimension) {
    schema_error(path, fmt::format("expected {} components", dimension));
  }
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  for (int a = 0; a < dimension; ++a) {
    v[a] = as_number(value[a], fmt::format("{}/{}", path, a));
  }
  return v;
}

int axis_from_json(const json& value, int dimension, const std::string& path) {
  int axis = -1;
  if (value.is_string()) {
    try {
      axis = parse_axis(value.get<std::string>());
    } catch (const Error&) {
      schema_error(path, "axis must be one of x, y, z");
    }
  } else {
    axis = as_int(value, path);
  }
  if (axis < 0 || axis >= dimension) schema_error(path, "axis out of range");
  return axis;
}

template <typename T>
void sort_by_id(std::vector<T>& items) {
  std::stable_sort(items.begin(), items.end(),
                   [](const T& a, const T& b) { return a.id < b.id; });
}

json vector_json(const Eigen::Vector3d& v, int dimension) {
  json out = json::array();
  for (int a = 0; a < dimension; ++a) out.push_back(v[a]);
  return out;
}

}  // namespace

int parse_axis(std::string_view axis) {
  if (axis == "x" || axis == "X") return 0;
  if (axis == "y" || axis == "Y") return 1;
  if (axis == "z" || axis == "Z") return 2;
  throw Error(fmt::format("unknown axis '{}'", axis));
}

char axis_name(int axis) { return "xyz"[axis]; }

// ---------------------------------------------------------------------------
// StructuralModel

int StructuralModel::free_dof_count() const {
  int n = 0;
  for (const Node& node : nodes) {
    for (int a = 0; a < dimension; ++a) {
      if (!node.fixed[a]) ++n;
    }
  }
  return n;
}

double StructuralModel::length(int element_index) const {
  const TrussElement& e = elements.at(element_index);
  return (nodes.at(e.node_b).coords - nodes.at(e.node_a).coords).norm();
}

Eigen::Vector3d StructuralModel::direction(int element_index) const {
  const TrussElement& e = elements.at(element_index);
  Eigen::Vector3d v = nodes.at(e.node_b).coords - nodes.at(e.node_a).coords;
  return v / v.norm();
}

std::optional<int> StructuralModel::find_node(int id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                             [](const Node& n, int v) { return n.id < v; });
  if (it == nodes.end() || it->id != id) return std::nullopt;
  return static_cast<int>(it - nodes.begin());
}

std::optional<int> StructuralModel::find_element(int id) const {
  auto it = std::lower_bound(
      elements.begin(), elements.end(), id,
      [](const TrussElement& e, int v) { return e.id < v; });
  if (it == elements.end() || it->id != id) return std::nullopt;
  return static_cast<int>(it - elements.begin());
}

int StructuralModel::node_index(int id) const {
  if (auto i = find_node(id)) return *i;
  throw ModelError(ModelError::Kind::kDanglingReference, "",
                   fmt::format("unknown node {}", id));
}

int StructuralModel::element_index(int id) const {
  if (auto i = find_element(id)) return *i;
  throw ModelError(ModelError::Kind::kDanglingReference, "",
                   fmt::format("unknown element {}", id));
}

std::vector<int> StructuralModel::element_ids() const {
  std::vector<int> ids;
  ids.reserve(elements.size());
  for (const auto& e : elements) ids.push_back(e.id);
  return ids;
}

// ---------------------------------------------------------------------------
// Parsing

StructuralModel model_from_json(const json& doc) {
  if (!doc.is_object()) schema_error("", "model document must be an object");

  StructuralModel model;
  model.dimension = as_int(require(doc, "dimension", ""), "/dimension");
  if (model.dimension != 2 && model.dimension != 3) {
    schema_error("/dimension", "must be 2 or 3");
  }
  const int dim = model.dimension;

  const json& nodes = as_array(require(doc, "nodes", ""), "/nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string path = fmt::format("/nodes/{}", i);
    Node node;
    node.id = as_int(require(nodes[i], "id", path), path + "/id");
    node.coords = as_vector(require(nodes[i], "coords", path), dim,
                            path + "/coords");
    if (auto it = nodes[i].find("support"); it != nodes[i].end()) {
      const std::string spath = path + "/support";
      as_array(*it, spath);
      if (static_cast<int>(it->size()) != dim) {
        schema_error(spath, fmt::format("expected {} flags", dim));
      }
      for (int a = 0; a < dim; ++a) {
        node.fixed[a] = as_bool((*it)[a], fmt::format("{}/{}", spath, a));
      }
    }
    model.nodes.push_back(node);
  }
  sort_by_id(model.nodes);
  for (std::size_t i = 1; i < model.nodes.size(); ++i) {
    if (model.nodes[i].id == model.nodes[i - 1].id) {
      throw ModelError(ModelError::Kind::kDuplicateId, "/nodes",
                       fmt::format("duplicate node id {}", model.nodes[i].id));
    }
  }

  auto resolve_node = [&](const json& value, const std::string& path) {
    int id = as_int(value, path);
    auto index = model.find_node(id);
    if (!index) {
      throw ModelError(ModelError::Kind::kDanglingReference, path,
                       fmt::format("unknown node {}", id));
    }
    return *index;
  };

  const json& elements = as_array(require(doc, "elements", ""), "/elements");
  for (std::size_t i = 0; i < elements.size(); ++i) {
    const std::string path = fmt::format("/elements/{}", i);
    const json& item = elements[i];
    TrussElement e;
    e.id = as_int(require(item, "id", path), path + "/id");
    const json& ends = as_array(require(item, "nodes", path), path + "/nodes");
    if (ends.size() != 2) schema_error(path + "/nodes", "expected two node ids");
    e.node_a = resolve_node(ends[0], path + "/nodes/0");
    e.node_b = resolve_node(ends[1], path + "/nodes/1");
    if (e.node_a == e.node_b) {
      throw ModelError(ModelError::Kind::kZeroLength, path + "/nodes",
                       "element connects a node to itself");
    }
    e.axial_stiffness = as_number(require(item, "EA", path), path + "/EA");
    if (!(e.axial_stiffness > 0.0)) {
      throw ModelError(ModelError::Kind::kNonPositiveStiffness, path + "/EA",
                       "axial stiffness must be positive");
    }
    if (auto it = item.find("alpha"); it != item.end()) {
      e.alpha = as_number(*it, path + "/alpha");
    }
    if (auto it = item.find("prefab"); it != item.end()) {
      e.prefab = as_bool(*it, path + "/prefab");
    }
    const double length =
        (model.nodes[e.node_b].coords - model.nodes[e.node_a].coords).norm();
    if (length < kMinLength) {
      throw ModelError(ModelError::Kind::kZeroLength, path,
                       "element has zero length");
    }
    model.elements.push_back(e);
  }
  sort_by_id(model.elements);
  for (std::size_t i = 1; i < model.elements.size(); ++i) {
    if (model.elements[i].id == model.elements[i - 1].id) {
      throw ModelError(
          ModelError::Kind::kDuplicateId, "/elements",
          fmt::format("duplicate element id {}", model.elements[i].id));
    }
  }

  if (auto it = doc.find("loads"); it != doc.end()) {
    model.loads = loads_from_json(model, *it, "/loads");
  }

  if (auto it = doc.find("design"); it != doc.end()) {
    DesignSpace design;
    const json& vars =
        as_array(require(*it, "variables", "/design"), "/design/variables");
    for (std::size_t j = 0; j < vars.size(); ++j) {
      const std::string path = fmt::format("/design/variables/{}", j);
      DesignVariable v;
      v.node = resolve_node(require(vars[j], "node", path), path + "/node");
      v.axis = axis_from_json(require(vars[j], "axis", path), dim,
                              path + "/axis");
      v.lower = as_number(require(vars[j], "lower", path), path + "/lower");
      v.upper = as_number(require(vars[j], "upper", path), path + "/upper");
      if (v.lower > v.upper) schema_error(path, "lower bound exceeds upper");
      if (auto n = vars[j].find("name"); n != vars[j].end() && n->is_string()) {
        v.name = n->get<std::string>();
      } else {
        v.name = fmt::format("{}{}", axis_name(v.axis),
                             model.nodes[v.node].id);
      }
      design.variables.push_back(v);
    }
    const json& rows = as_array(require(*it, "map", "/design"), "/design/map");
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::string path = fmt::format("/design/map/{}", r);
      CoordinateMapRow row;
      row.node = resolve_node(require(rows[r], "node", path), path + "/node");
      row.axis = axis_from_json(require(rows[r], "axis", path), dim,
                                path + "/axis");
      const json& coeffs =
          as_array(require(rows[r], "coeffs", path), path + "/coeffs");
      if (coeffs.size() != vars.size()) {
        schema_error(path + "/coeffs",
                     fmt::format("expected {} coefficients", vars.size()));
      }
      for (std::size_t j = 0; j < coeffs.size(); ++j) {
        row.coeffs.push_back(
            as_number(coeffs[j], fmt::format("{}/coeffs/{}", path, j)));
      }
      design.map.push_back(std::move(row));
    }
    model.design = std::move(design);
  }

  if (auto it = doc.find("plan"); it != doc.end()) {
    PlanSpec plan;
    auto read_ids = [&](const char* key, std::vector<int>& out) {
      const std::string path = std::string("/plan/") + key;
      auto list = it->find(key);
      if (list == it->end()) return;
      as_array(*list, path);
      for (std::size_t i = 0; i < list->size(); ++i) {
        const std::string ipath = fmt::format("{}/{}", path, i);
        int id = as_int((*list)[i], ipath);
        if (!model.find_element(id)) {
          throw ModelError(ModelError::Kind::kDanglingReference, ipath,
                           fmt::format("unknown element {}", id));
        }
        out.push_back(id);
      }
    };
    if (!it->is_object()) schema_error("/plan", "expected an object");
    read_ids("base", plan.base);
    read_ids("order", plan.order);
    model.plan = std::move(plan);
  }

  return model;
}

std::vector<PointLoad> loads_from_json(const StructuralModel& model,
                                       const json& loads,
                                       const std::string& path) {
  as_array(loads, path);
  std::vector<PointLoad> out;
  for (std::size_t i = 0; i < loads.size(); ++i) {
    const std::string item = fmt::format("{}/{}", path, i);
    const json& id = require(loads[i], "node", item);
    PointLoad load;
    const auto node = model.find_node(as_int(id, item + "/node"));
    if (!node) {
      throw ModelError(ModelError::Kind::kDanglingReference, item + "/node",
                       fmt::format("unknown node {}", id.dump()));
    }
    load.node = *node;
    load.force = as_vector(require(loads[i], "vector", item), model.dimension,
                           item + "/vector");
    out.push_back(load);
  }
  return out;
}

StructuralModel parse_model(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    schema_error("", fmt::format("malformed JSON: {}", e.what()));
  }
  return model_from_json(doc);
}

StructuralModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open model file {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_model(buffer.str());
}

// ---------------------------------------------------------------------------
// Serialization

json model_to_json(const StructuralModel& model) {
  const int dim = model.dimension;
  json doc;
  doc["dimension"] = dim;

  json nodes = json::array();
  for (const Node& n : model.nodes) {
    json support = json::array();
    for (int a = 0; a < dim; ++a) support.push_back(n.fixed[a]);
    nodes.push_back({{"id", n.id},
                     {"coords", vector_json(n.coords, dim)},
                     {"support", support}});
  }
  doc["nodes"] = std::move(nodes);

  json elements = json::array();
  for (const TrussElement& e : model.elements) {
    elements.push_back({{"id", e.id},
                        {"nodes", {model.nodes[e.node_a].id,
                                   model.nodes[e.node_b].id}},
                        {"EA", e.axial_stiffness},
                        {"alpha", e.alpha},
                        {"prefab", e.prefab}});
  }
  doc["elements"] = std::move(elements);

  json loads = json::array();
  for (const PointLoad& l : model.loads) {
    loads.push_back({{"node", model.nodes[l.node].id},
                     {"vector", vector_json(l.force, dim)}});
  }
  doc["loads"] = std::move(loads);

  if (model.design) {
    json vars = json::array();
    for (const DesignVariable& v : model.design->variables) {
      vars.push_back({{"name", v.name},
                      {"node", model.nodes[v.node].id},
                      {"axis", std::string(1, axis_name(v.axis))},
                      {"lower", v.lower},
                      {"upper", v.upper}});
    }
    json rows = json::array();
    for (const CoordinateMapRow& r : model.design->map) {
      rows.push_back({{"node", model.nodes[r.node].id},
                      {"axis", std::string(1, axis_name(r.axis))},
                      {"coeffs", r.coeffs}});
    }
    doc["design"] = {{"variables", vars}, {"map", rows}};
  }
  if (model.plan) {
    doc["plan"] = {{"base", model.plan->base}, {"order", model.plan->order}};
  }
  return doc;
}

std::string serialize_model(const StructuralModel& model) {
  return model_to_json(model).dump(2);
}

std::string content_hash(const StructuralModel& model) {
  const std::string text = model_to_json(model).dump();
  std::uint64_t hash = 14695981039346656037ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return fmt::format("{:016x}", hash);
}

// ---------------------------------------------------------------------------
// Validation

std::string_view to_string(Finding::Kind kind) {
  switch (kind) {
    case Finding::Kind::kDimension: return "dimension";
    case Finding::Kind::kDuplicateId: return "duplicate-id";
    case Finding::Kind::kDanglingReference: return "dangling-reference";
    case Finding::Kind::kDegenerateElement: return "degenerate-element";
    case Finding::Kind::kNonPositiveStiffness: return "non-positive-stiffness";
    case Finding::Kind::kZeroLength: return "zero-length";
    case Finding::Kind::kImperfectionRange: return "imperfection-range";
    case Finding::Kind::kRigidBodyMode: return "rigid-body-mode";
    case Finding::Kind::kNoFreeDof: return "no-free-dof";
    case Finding::Kind::kDesignMap: return "design-map";
    case Finding::Kind::kPlan: return "plan";
  }
  return "unknown";
}

bool ValidationReport::has(Finding::Kind kind) const {
  return std::any_of(findings.begin(), findings.end(),
                     [kind](const Finding& f) { return f.kind == kind; });
}

ValidationReport validate_model(const StructuralModel& model) {
  ValidationReport report;
  auto add = [&](Finding::Kind kind, std::string subject, std::string message) {
    report.findings.push_back({kind, std::move(subject), std::move(message)});
  };
  const int dim = model.dimension;
  if (dim != 2 && dim != 3) {
    add(Finding::Kind::kDimension, "model", "dimension must be 2 or 3");
    return report;
  }

  std::set<int> node_ids;
  for (const Node& n : model.nodes) {
    if (!node_ids.insert(n.id).second) {
      add(Finding::Kind::kDuplicateId, fmt::format("node {}", n.id),
          "duplicate node id");
    }
    if (dim == 2 && n.coords.z() != 0.0) {
      add(Finding::Kind::kDimension, fmt::format("node {}", n.id),
          "planar model node has a z coordinate");
    }
  }

  const int node_count = model.node_count();
  std::set<int> element_ids;
  for (const TrussElement& e : model.elements) {
    const std::string subject = fmt::format("element {}", e.id);
    if (!element_ids.insert(e.id).second) {
      add(Finding::Kind::kDuplicateId, subject, "duplicate element id");
    }
    if (e.node_a < 0 || e.node_a >= node_count || e.node_b < 0 ||
        e.node_b >= node_count) {
      add(Finding::Kind::kDanglingReference, subject,
          "references a node that does not exist");
      continue;
    }
    if (e.node_a == e.node_b) {
      add(Finding::Kind::kDegenerateElement, subject,
          "connects a node to itself");
    } else if ((model.nodes[e.node_b].coords - model.nodes[e.node_a].coords)
                   .norm() < kMinLength) {
      add(Finding::Kind::kZeroLength, subject, "has zero length");
    }
    if (!(e.axial_stiffness > 0.0)) {
      add(Finding::Kind::kNonPositiveStiffness, subject,
          "axial stiffness must be positive");
    }
    if (!(std::abs(e.alpha) < 1.0)) {
      add(Finding::Kind::kImperfectionRange, subject,
          fmt::format("|alpha| = {} must be below 1", std::abs(e.alpha)));
    }
  }

  for (const PointLoad& l : model.loads) {
    if (l.node < 0 || l.node >= node_count) {
      add(Finding::Kind::kDanglingReference, "load",
          "references a node that does not exist");
    }
  }

  for (int a = 0; a < dim; ++a) {
    bool constrained = std::any_of(model.nodes.begin(), model.nodes.end(),
                                   [a](const Node& n) { return n.fixed[a]; });
    if (!constrained) {
      add(Finding::Kind::kRigidBodyMode, "model",
          fmt::format("no support constrains the {} axis", axis_name(a)));
    }
  }
  if (model.free_dof_count() == 0) {
    add(Finding::Kind::kNoFreeDof, "model", "no free degree of freedom");
  }

  if (model.design) {
    const auto& design = *model.design;
    const std::size_t m = design.variables.size();
    for (const DesignVariable& v : design.variables) {
      if (v.node < 0 || v.node >= node_count || v.axis < 0 || v.axis >= dim) {
        add(Finding::Kind::kDesignMap, "design", "variable out of range");
      } else if (v.lower > v.upper) {
        add(Finding::Kind::kDesignMap, fmt::format("design {}", v.name),
            "lower bound exceeds upper bound");
      }
    }
    for (const CoordinateMapRow& r : design.map) {
      if (r.node < 0 || r.node >= node_count || r.axis < 0 || r.axis >= dim) {
        add(Finding::Kind::kDesignMap, "design", "map row out of range");
      } else if (r.coeffs.size() != m) {
        add(Finding::Kind::kDesignMap,
            fmt::format("design node {}", model.nodes[r.node].id),
            "map row has the wrong number of coefficients");
      }
    }
  }

  if (model.plan) {
    std::set<int> seen;
    for (int id : model.plan->base) {
      if (!model.find_element(id)) {
        add(Finding::Kind::kPlan, fmt::format("element {}", id),
            "plan references an unknown element");
      } else if (!seen.insert(id).second) {
        add(Finding::Kind::kPlan, fmt::format("element {}", id),
            "element listed twice in the plan");
      }
    }
    for (int id : model.plan->order) {
      if (!model.find_element(id)) {
        add(Finding::Kind::kPlan, fmt::format("element {}", id),
            "plan references an unknown element");
      } else if (!seen.insert(id).second) {
        add(Finding::Kind::kPlan, fmt::format("element {}", id),
            "element listed twice in the plan");
      }
    }
  }

  std::sort(report.findings.begin(), report.findings.end(),
            [](const Finding& a, const Finding& b) {
              return std::tie(a.kind, a.subject, a.message) <
                     std::tie(b.kind, b.subject, b.message);
            });
  return report;
}

// ---------------------------------------------------------------------------
// Derived models

StructuralModel select_elements(const StructuralModel& model,
                                std::span<const int> element_indices) {
  std::vector<int> keep(element_indices.begin(), element_indices.end());
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());

  StructuralModel out;
  out.dimension = model.dimension;
  out.nodes = model.nodes;
  out.loads = model.loads;
  out.elements.reserve(keep.size());
  for (int k : keep) out.elements.push_back(model.elements.at(k));
  return out;
}

StructuralModel remove_elements(const StructuralModel& model,
                                std::span<const int> element_indices) {
  std::vector<bool> drop(model.elements.size(), false);
  for (int k : element_indices) drop.at(k) = true;
  std::vector<int> keep;
  for (int k = 0; k < model.element_count(); ++k) {
    if (!drop[k]) keep.push_back(k);
  }
  return select_elements(model, keep);
}

StructuralModel apply_design(const StructuralModel& model,
                             const Eigen::VectorXd& s) {
  if (!model.design) {
    throw ModelError(ModelError::Kind::kSchema, "/design",
                     "model has no design space");
  }
  const DesignSpace& design = *model.design;
  if (s.size() != design.size()) {
    throw ModelError(ModelError::Kind::kSchema, "/design",
                     fmt::format("design vector has {} entries, expected {}",
                                 s.size(), design.size()));
  }
  StructuralModel out = model;
  for (const CoordinateMapRow& row : design.map) {
    double delta = 0.0;
    for (std::size_t j = 0; j < row.coeffs.size(); ++j) {
      delta += row.coeffs[j] * s[static_cast<Eigen::Index>(j)];
    }
    out.nodes[row.node].coords[row.axis] += delta;
  }
  return out;
}

Eigen::VectorXd effective_alpha(const StructuralModel& model) {
  Eigen::VectorXd alpha(model.element_count());
  for (int k = 0; k < model.element_count(); ++k) {
    const auto& e = model.elements[k];
    alpha[k] = e.prefab ? 0.0 : e.alpha;
  }
  return alpha;
}

}  // namespace redkit
