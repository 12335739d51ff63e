#pragma once

#include <Eigen/Dense>

namespace pathsde {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace pathsde
