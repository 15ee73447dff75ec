#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace hal {

using Scalar = double;
using Mat = Eigen::MatrixXd;   // rows are samples unless noted
using Vec = Eigen::VectorXd;
using IVec = Eigen::VectorXi;

}  // namespace hal
