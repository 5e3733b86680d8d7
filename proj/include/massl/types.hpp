#pragma once

#include <Eigen/Dense>

namespace massl {

// Row-major so that one row is one sample / one representation.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

}  // namespace massl
