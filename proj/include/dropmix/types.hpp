#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace dropmix {

using Scalar = double;
using Index = Eigen::Index;

// Row-major throughout: node embeddings are rows, and row slices of a
// row-major matrix are contiguous.
using Matrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

// Compressed-sparse-row layout.
using SparseMatrix = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

}  // namespace dropmix
