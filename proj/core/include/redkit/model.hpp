#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace redkit {

// Units throughout: meters, kilonewtons.

struct Node {
  int id = 0;                         ///< user-facing id
  Eigen::Vector3d coords = Eigen::Vector3d::Zero();
  std::array<bool, 3> fixed{false, false, false};

  bool is_supported() const { return fixed[0] || fixed[1] || fixed[2]; }
};

struct TrussElement {
  int id = 0;                ///< user-facing id
  int node_a = 0;            ///< dense node index
  int node_b = 0;            ///< dense node index
  double axial_stiffness = 0.0;  ///< EA [kN]
  double alpha = 0.0;        ///< relative length imperfection
  bool prefab = false;
};

struct PointLoad {
  int node = 0;  ///< dense node index
  Eigen::Vector3d force = Eigen::Vector3d::Zero();
};

/// One scalar design variable: the offset of a node coordinate from its
/// value in the model document.
struct DesignVariable {
  int node = 0;  ///< dense node index
  int axis = 0;
  double lower = 0.0;
  double upper = 0.0;
  std::string name;
};

/// Row of the linear map from the design vector to coordinate offsets:
/// coords[node][axis] += coeffs . s
struct CoordinateMapRow {
  int node = 0;  ///< dense node index
  int axis = 0;
  std::vector<double> coeffs;
};

struct DesignSpace {
  std::vector<DesignVariable> variables;
  std::vector<CoordinateMapRow> map;

  int size() const { return static_cast<int>(variables.size()); }
};

/// Assembly plan stored alongside the model: prefabricated base plus the
/// on-site order, both as user-facing element ids.
struct PlanSpec {
  std::vector<int> base;
  std::vector<int> order;
};

struct StructuralModel {
  int dimension = 2;
  std::vector<Node> nodes;          ///< sorted by id
  std::vector<TrussElement> elements;  ///< sorted by id
  std::vector<PointLoad> loads;
  std::optional<DesignSpace> design;
  std::optional<PlanSpec> plan;

  int node_count() const { return static_cast<int>(nodes.size()); }
  int element_count() const { return static_cast<int>(elements.size()); }
  int free_dof_count() const;

  double length(int element_index) const;
  /// Unit vector from node_a to node_b.
  Eigen::Vector3d direction(int element_index) const;

  std::optional<int> find_node(int id) const;
  std::optional<int> find_element(int id) const;
  /// Like find_*, but throws ModelError(kDanglingReference).
  int node_index(int id) const;
  int element_index(int id) const;

  std::vector<int> element_ids() const;
};

// ---------------------------------------------------------------------------
// Model document (JSON)

StructuralModel parse_model(std::string_view document);
StructuralModel model_from_json(const nlohmann::json& document);
StructuralModel load_model(const std::filesystem::path& path);

/// Point loads in the document format ([{"node": id, "vector": [...]}]),
/// resolved against `model`. `path` prefixes error locations.
std::vector<PointLoad> loads_from_json(const StructuralModel& model,
                                       const nlohmann::json& loads,
                                       const std::string& path = "/loads");

nlohmann::json model_to_json(const StructuralModel& model);
std::string serialize_model(const StructuralModel& model);

/// 64-bit FNV-1a of the canonical serialization, as 16 hex digits.
std::string content_hash(const StructuralModel& model);

// ---------------------------------------------------------------------------
// Validation

struct Finding {
  enum class Kind {
    kDimension,
    kDuplicateId,
    kDanglingReference,
    kDegenerateElement,
    kNonPositiveStiffness,
    kZeroLength,
    kImperfectionRange,
    kRigidBodyMode,
    kNoFreeDof,
    kDesignMap,
    kPlan,
  };
  Kind kind;
  std::string subject;  ///< e.g. "element 7", "node 3", "model"
  std::string message;

  friend bool operator==(const Finding&, const Finding&) = default;
};

std::string_view to_string(Finding::Kind kind);

struct ValidationReport {
  std::vector<Finding> findings;

  bool ok() const { return findings.empty(); }
  bool has(Finding::Kind kind) const;
};

/// Checks every structural invariant; the report is empty iff the model is
/// well-formed. Findings come back sorted, independent of input order.
ValidationReport validate_model(const StructuralModel& model);

// ---------------------------------------------------------------------------
// Derived models

/// Copy of `model` keeping only the listed elements (dense indices, any
/// order). Loads and nodes are kept; design and plan are dropped.
StructuralModel select_elements(const StructuralModel& model,
                                std::span<const int> element_indices);

/// Copy of `model` without the listed elements (dense indices).
StructuralModel remove_elements(const StructuralModel& model,
                                std::span<const int> element_indices);

/// Applies coords += M s for the model's design space. Throws ModelError
/// when the model has no design space or `s` has the wrong size.
StructuralModel apply_design(const StructuralModel& model,
                             const Eigen::VectorXd& s);

/// Imperfections used by assembly analyses: prefab elements contribute 0.
Eigen::VectorXd effective_alpha(const StructuralModel& model);

int parse_axis(std::string_view axis);
char axis_name(int axis);

}  // namespace redkit
