#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace treesaddle {

// Dense blocks are stored row-major in 64-bit floats; vectors are plain
// column vectors.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base class of all exceptions thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input: bad topology, inconsistent dimensions, unknown ids.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be invertible is singular to working precision.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be positive definite failed its Cholesky factorization.
class NotPositiveDefiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace treesaddle
