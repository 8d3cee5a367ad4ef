#pragma once

#include "onset/common.hpp"

namespace onset::linalg {

// Thin SVD pieces of a matrix, singular values in decreasing order.
struct Svd {
  Matrix U;
  Vector sigma;
  Matrix V;
};

Svd thin_svd(const Matrix& m);

// Best rank-r approximation in Frobenius norm (SVD truncation).
Matrix truncate(const Svd& svd, int r);

// Count of singular values above rel_tol * sigma_1.
int numerical_rank(const Matrix& m, double rel_tol = 1e-10);

// sigma_{r+1} / sigma_1, or 0 when m has at most r singular values or is zero.
double tail_ratio(const Matrix& m, int r);

}  // namespace onset::linalg
