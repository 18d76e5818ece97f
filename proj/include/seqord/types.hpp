#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace seqord {

template <typename F>
using Vx = Eigen::Matrix<F, Eigen::Dynamic, 1>;
template <typename F>
using Mx = Eigen::Matrix<F, Eigen::Dynamic, Eigen::Dynamic>;
template <typename F>
using V2 = Eigen::Matrix<F, 2, 1>;

using Vxd = Vx<double>;
using Mxd = Mx<double>;
using V2d = V2<double>;
using Vxi = Vx<int>;

// Row-major so that per-row incidence lookups stay contiguous.
using SpMxd = Eigen::SparseMatrix<double, Eigen::RowMajor>;

}  // namespace seqord
