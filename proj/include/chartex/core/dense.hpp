#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace chartex {

// Row-major dense grid indexed (row, col) == (y, x). All heatmaps, masks and
// image planes in this project are Grids so that Eigen expressions work on
// them directly.
template <typename Scalar>
using Grid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GridF = Grid<float>;
using GridD = Grid<double>;
using GridU8 = Grid<std::uint8_t>;

template <typename Scalar>
using VecX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

using VecXf = VecX<float>;
using VecXd = VecX<double>;

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace chartex
