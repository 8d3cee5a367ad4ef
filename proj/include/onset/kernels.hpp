#pragma once

// Data-parallel inner loops shared by the solvers. Every kernel has an OpenMP
// version in onset::kernels and a plain serial version in onset::reference
// that is kept for testing and benchmarking. Parallel kernels assign each
// output element to exactly one thread and accumulate in a fixed order, so
// results do not depend on the thread count.

#include "onset/common.hpp"

namespace onset {

/// Value and gradient of the censored least-squares / squared-hinge loss
///   sum_complete 1/2 (x'w + b - y)^2 + lambda/2 sum_censored min(0, x'w + b - y)^2
struct LossEval {
  double value = 0.0;
  Vector grad_w;
  double grad_b = 0.0;
};

namespace kernels {

/// out(i) = X.col(i)' w + b
void predict_columns(const Matrix& X, const Vector& w, double b, Vector& out);

LossEval censored_loss(const Matrix& X_complete, const Vector& y_complete,
                       const Matrix& X_censored, const Vector& y_censored, const Vector& w,
                       double b, double lambda, bool with_gradient);

/// Fills the missing cells of each row of X from the k nearest rows of the
/// reference set. Distance is the root mean squared difference over mutually
/// observed columns; rows with no shared observed column are not eligible.
/// When exclude_self is set, reference row i is never a neighbour of row i.
/// Cells without any eligible neighbour take fallback(j).
Matrix knn_fill(const Matrix& X, const Mask& mask, const Matrix& reference,
                const Mask& reference_mask, int k, const Vector& fallback, bool exclude_self);

/// X(i, j) = clamp(M(i, j), lower(j), upper(j)) for every missing cell.
void clamp_missing(Matrix& X, const Mask& mask, const Matrix& M, const Vector& lower,
                   const Vector& upper);

}  // namespace kernels

namespace reference {

void predict_columns(const Matrix& X, const Vector& w, double b, Vector& out);

LossEval censored_loss(const Matrix& X_complete, const Vector& y_complete,
                       const Matrix& X_censored, const Vector& y_censored, const Vector& w,
                       double b, double lambda, bool with_gradient);

Matrix knn_fill(const Matrix& X, const Mask& mask, const Matrix& reference,
                const Mask& reference_mask, int k, const Vector& fallback, bool exclude_self);

void clamp_missing(Matrix& X, const Mask& mask, const Matrix& M, const Vector& lower,
                   const Vector& upper);

}  // namespace reference

}  // namespace onset
