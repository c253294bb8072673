#pragma once

#include <Eigen/Core>
#include <complex>

namespace phaseret {

using Index = Eigen::Index;

/// Real n-vector; also holds row-major flattened h*w grids for 2D problems.
using RealSignal = Eigen::VectorXd;

using ComplexSignal = Eigen::VectorXcd;

}  // namespace phaseret
