#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace redkit {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model document or model value violates the model contract.
class ModelError : public Error {
 public:
  enum class Kind {
    kSchema,
    kDanglingReference,
    kDuplicateId,
    kNonPositiveStiffness,
    kZeroLength,
  };

  ModelError(Kind kind, std::string path, const std::string& message)
      : Error(path.empty() ? message : path + ": " + message),
        kind_(kind),
        path_(std::move(path)) {}

  Kind kind() const noexcept { return kind_; }
  /// JSON-pointer-like location of the offending value, e.g. "/elements/3/EA".
  const std::string& path() const noexcept { return path_; }

 private:
  Kind kind_;
  std::string path_;
};

/// The structure is (or would become) kinematically indeterminate.
///
/// Thrown when rank(A) < n while assembling, or when an element removal
/// targets a member whose redundancy is below the removal threshold.
class MechanismError : public Error {
 public:
  MechanismError(const std::string& message, int mechanism_count,
                 Eigen::MatrixXd basis = {},
                 std::optional<int> element_id = std::nullopt)
      : Error(message),
        mechanism_count_(mechanism_count),
        basis_(std::move(basis)),
        element_id_(element_id) {}

  /// Dimension of the mechanism space (n - rank A).
  int mechanism_count() const noexcept { return mechanism_count_; }
  /// Columns span the mechanism space in free-dof coordinates (may be empty).
  const Eigen::MatrixXd& basis() const noexcept { return basis_; }
  /// Element whose removal was rejected, when applicable.
  std::optional<int> element_id() const noexcept { return element_id_; }

 private:
  int mechanism_count_;
  Eigen::MatrixXd basis_;
  std::optional<int> element_id_;
};

/// Factorization failure or an ill-conditioned system.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& message,
                          double condition_estimate = 0.0)
      : Error(message), condition_estimate_(condition_estimate) {}

  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

}  // namespace redkit
