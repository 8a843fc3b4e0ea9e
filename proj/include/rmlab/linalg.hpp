#pragma once

#include <span>
#include <vector>

#include "rmlab/numarray.hpp"

namespace rmlab {

// Small dense helpers for the symmetric positive-definite systems this
// project produces (normal equations, information matrices). Sizes are tiny
// (d <= a few dozen), so plain O(n^3) routines are the right tool.

// Solve A x = b for symmetric positive definite A. Throws SingularError.
std::vector<double> cholesky_solve(const NumArray& a, std::span<const double> b);

// Inverse of a symmetric positive definite matrix. Throws SingularError.
NumArray cholesky_inverse(const NumArray& a);

// Least squares min ||X beta - y||_2 via normal equations.
std::vector<double> lstsq(const NumArray& x, std::span<const double> y);

// Eigenvalues of a symmetric matrix (cyclic Jacobi), ascending.
std::vector<double> symmetric_eigenvalues(const NumArray& a);

double trace(const NumArray& a);

// c = a * b for rank-2 arrays.
NumArray matmul(const NumArray& a, const NumArray& b);
// y = a * x for rank-2 a and vector x.
std::vector<double> matvec(const NumArray& a, std::span<const double> x);

}  // namespace rmlab
