#pragma once

#include <Eigen/Core>

namespace uhr {

using Scalar = double;
using Index = Eigen::Index;

template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using Vec = VecX<Scalar>;
using Mat = MatX<Scalar>;

}  // namespace uhr
