#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace rrm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

}  // namespace rrm
