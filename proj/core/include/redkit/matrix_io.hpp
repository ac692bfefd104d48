#pragma once

#include <istream>
#include <ostream>

#include <Eigen/Dense>

namespace redkit {

/// Dense debug dump: a "rows cols" header line, then one row per line with
/// round-trip decimal entries separated by single spaces.
void write_matrix(std::ostream& out, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(std::istream& in);

}  // namespace redkit
