#pragma once

#include <Eigen/Core>

#include "archrank/numerics.hpp"

namespace archrank::num {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<RowMajor> view(Matrix& m) {
  return {m.flat().data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

inline Eigen::Map<const RowMajor> view(const Matrix& m) {
  return {m.flat().data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

}  // namespace archrank::num
