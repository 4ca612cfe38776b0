#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace fbtrans {

template <int N>
using Point = Eigen::Matrix<double, N, 1>;

template <int N>
using Matrix = Eigen::Matrix<double, N, N>;

/// Integer lattice coordinates of a node; the physical position is index * h.
template <int N>
using LatticeIndex = std::array<int, N>;

/// Raised when a precondition on an argument does not hold.
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a finite-difference stencil needs a node that is not on the grid.
class MissingNeighborError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a linear system has no Dirichlet anchor or fails to factor.
class SingularSystemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message)
{
    if (!condition) throw PreconditionError(message);
}

/// Only planar and spatial problems are supported.
inline void check_dimension(int dim)
{
    require(dim == 2 || dim == 3, "dimension must be 2 or 3, got " + std::to_string(dim));
}

/// |x'| where x' drops the last (normal) coordinate.
template <int N>
double tangential_norm(const Point<N>& x)
{
    return x.template head<N - 1>().norm();
}

}  // namespace fbtrans
