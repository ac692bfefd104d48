#include "redkit/matrix_io.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "redkit/errors.hpp"

namespace redkit {

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  fmt::print(out, "{} {}\n", m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      fmt::print(out, j == 0 ? "{}" : " {}", m(i, j));
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix(std::istream& in) {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  if (!(in >> rows >> cols) || rows < 0 || cols < 0) {
    throw Error("matrix dump: bad header");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!(in >> m(i, j))) {
        throw Error(fmt::format("matrix dump: missing entry ({}, {})", i, j));
      }
    }
  }
  return m;
}

}  // namespace redkit
