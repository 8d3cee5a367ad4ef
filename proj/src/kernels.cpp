#include "onset/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <omp.h>

namespace onset {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_loss_dims(const Matrix& Xc, const Vector& yc, const Matrix& Xn, const Vector& yn,
                     const Vector& w) {
  if (Xc.cols() != yc.size() || Xn.cols() != yn.size()) {
    fail(Errc::kDimensionMismatch, "design columns and label lengths differ");
  }
  if ((Xc.cols() > 0 && Xc.rows() != w.size()) || (Xn.cols() > 0 && Xn.rows() != w.size())) {
    fail(Errc::kDimensionMismatch, "design rows differ from weight length");
  }
}

void check_knn_dims(const Matrix& X, const Mask& mask, const Matrix& reference,
                    const Mask& reference_mask, int k, const Vector& fallback) {
  if (mask.rows() != X.rows() || mask.cols() != X.cols() ||
      reference_mask.rows() != reference.rows() || reference_mask.cols() != reference.cols() ||
      (reference.rows() > 0 && reference.cols() != X.cols()) || fallback.size() != X.cols()) {
    fail(Errc::kDimensionMismatch, "knn_fill: inconsistent shapes");
  }
  if (k < 1) fail(Errc::kInvalidArgument, "knn_fill: k must be >= 1");
}

}  // namespace

namespace kernels {

void predict_columns(const Matrix& X, const Vector& w, double b, Vector& out) {
  if (X.cols() > 0 && X.rows() != w.size()) {
    fail(Errc::kDimensionMismatch, "predict_columns: design rows differ from weight length");
  }
  const Eigen::Index n = X.cols();
  out.resize(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i) = X.col(i).dot(w) + b;
  }
}

LossEval censored_loss(const Matrix& Xc, const Vector& yc, const Matrix& Xn, const Vector& yn,
                       const Vector& w, double b, double lambda, bool with_gradient) {
  check_loss_dims(Xc, yc, Xn, yn, w);
  const Eigen::Index nc = Xc.cols();
  const Eigen::Index nn = Xn.cols();
  const Eigen::Index dim = w.size();

  Vector residual(nc);
  Vector margin(nn);
#pragma omp parallel
  {
#pragma omp for schedule(static) nowait
    for (Eigen::Index i = 0; i < nc; ++i) {
      residual(i) = Xc.col(i).dot(w) + b - yc(i);
    }
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < nn; ++i) {
      margin(i) = std::min(0.0, Xn.col(i).dot(w) + b - yn(i));
    }
  }

  LossEval eval;
  eval.value = 0.5 * residual.squaredNorm() + 0.5 * lambda * margin.squaredNorm();
  if (!with_gradient) return eval;

  // Each thread owns a contiguous block of gradient rows and sweeps the
  // columns in order, so every entry sees the same summation sequence.
  eval.grad_w = Vector::Zero(dim);
#pragma omp parallel
  {
    const Eigen::Index threads = omp_get_num_threads();
    const Eigen::Index t = omp_get_thread_num();
    const Eigen::Index j0 = dim * t / threads;
    const Eigen::Index len = dim * (t + 1) / threads - j0;
    auto g = eval.grad_w.segment(j0, len);
    for (Eigen::Index i = 0; i < nc; ++i) g += residual(i) * Xc.col(i).segment(j0, len);
    for (Eigen::Index i = 0; i < nn; ++i) {
      if (margin(i) != 0.0) g += (lambda * margin(i)) * Xn.col(i).segment(j0, len);
    }
  }
  eval.grad_b = residual.sum() + lambda * margin.sum();
  return eval;
}

Matrix knn_fill(const Matrix& X, const Mask& mask, const Matrix& reference,
                const Mask& reference_mask, int k, const Vector& fallback, bool exclude_self) {
  check_knn_dims(X, mask, reference, reference_mask, k, fallback);
  Matrix out = X;
  const Eigen::Index n = X.rows();
  const Eigen::Index n_ref = reference.rows();
  const Eigen::Index p = X.cols();

  // Row-major copies keep the per-row distance scans contiguous.
  const RowMatrix Xr = X;
  const RowMask mr = mask;
  const RowMatrix ref = reference;
  const RowMask ref_mask = reference_mask;

#pragma omp parallel
  {
    std::vector<double> dist(static_cast<std::size_t>(n_ref));
    std::vector<char> eligible(static_cast<std::size_t>(n_ref));
    std::vector<std::pair<double, Eigen::Index>> candidates;
    candidates.reserve(static_cast<std::size_t>(n_ref));
#pragma omp for schedule(dynamic, 16)
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mr.row(i).all()) continue;
      for (Eigen::Index q = 0; q < n_ref; ++q) {
        double sum = 0.0;
        int shared = 0;
        for (Eigen::Index j = 0; j < p; ++j) {
          if (mr(i, j) && ref_mask(q, j)) {
            const double d = Xr(i, j) - ref(q, j);
            sum += d * d;
            ++shared;
          }
        }
        const auto qi = static_cast<std::size_t>(q);
        eligible[qi] = shared > 0 && !(exclude_self && q == i);
        dist[qi] = shared > 0 ? std::sqrt(sum / shared) : 0.0;
      }
      for (Eigen::Index j = 0; j < p; ++j) {
        if (mr(i, j)) continue;
        candidates.clear();
        for (Eigen::Index q = 0; q < n_ref; ++q) {
          const auto qi = static_cast<std::size_t>(q);
          if (eligible[qi] && ref_mask(q, j)) candidates.emplace_back(dist[qi], q);
        }
        const auto take = std::min(static_cast<std::size_t>(k), candidates.size());
        if (take == 0) {
          out(i, j) = fallback(j);
          continue;
        }
        std::partial_sort(candidates.begin(),
                          candidates.begin() + static_cast<std::ptrdiff_t>(take),
                          candidates.end());
        double sum = 0.0;
        for (std::size_t t = 0; t < take; ++t) sum += ref(candidates[t].second, j);
        out(i, j) = sum / static_cast<double>(take);
      }
    }
  }
  return out;
}

void clamp_missing(Matrix& X, const Mask& mask, const Matrix& M, const Vector& lower,
                   const Vector& upper) {
  const Eigen::Index p = X.cols();
  const Eigen::Index n = X.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!mask(i, j)) X(i, j) = std::clamp(M(i, j), lower(j), upper(j));
    }
  }
}

}  // namespace kernels

namespace reference {

void predict_columns(const Matrix& X, const Vector& w, double b, Vector& out) {
  out.resize(X.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    double s = b;
    for (Eigen::Index j = 0; j < X.rows(); ++j) s += X(j, i) * w(j);
    out(i) = s;
  }
}

LossEval censored_loss(const Matrix& Xc, const Vector& yc, const Matrix& Xn, const Vector& yn,
                       const Vector& w, double b, double lambda, bool with_gradient) {
  check_loss_dims(Xc, yc, Xn, yn, w);
  LossEval eval;
  if (with_gradient) eval.grad_w = Vector::Zero(w.size());

  for (Eigen::Index i = 0; i < Xc.cols(); ++i) {
    double r = b - yc(i);
    for (Eigen::Index j = 0; j < w.size(); ++j) r += Xc(j, i) * w(j);
    eval.value += 0.5 * r * r;
    if (with_gradient) {
      for (Eigen::Index j = 0; j < w.size(); ++j) eval.grad_w(j) += r * Xc(j, i);
      eval.grad_b += r;
    }
  }
  for (Eigen::Index i = 0; i < Xn.cols(); ++i) {
    double r = b - yn(i);
    for (Eigen::Index j = 0; j < w.size(); ++j) r += Xn(j, i) * w(j);
    if (r >= 0.0) continue;
    eval.value += 0.5 * lambda * r * r;
    if (with_gradient) {
      for (Eigen::Index j = 0; j < w.size(); ++j) eval.grad_w(j) += lambda * r * Xn(j, i);
      eval.grad_b += lambda * r;
    }
  }
  return eval;
}

Matrix knn_fill(const Matrix& X, const Mask& mask, const Matrix& reference,
                const Mask& reference_mask, int k, const Vector& fallback, bool exclude_self) {
  check_knn_dims(X, mask, reference, reference_mask, k, fallback);
  Matrix out = X;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (mask(i, j)) continue;
      // Candidates: eligible reference rows that observe column j.
      std::vector<std::pair<double, Eigen::Index>> candidates;
      for (Eigen::Index q = 0; q < reference.rows(); ++q) {
        if ((exclude_self && q == i) || !reference_mask(q, j)) continue;
        double sum = 0.0;
        int shared = 0;
        for (Eigen::Index c = 0; c < X.cols(); ++c) {
          if (!mask(i, c) || !reference_mask(q, c)) continue;
          sum += (X(i, c) - reference(q, c)) * (X(i, c) - reference(q, c));
          ++shared;
        }
        if (shared == 0) continue;
        candidates.emplace_back(std::sqrt(sum / shared), q);
      }
      const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), candidates.size());
      std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                        candidates.end());
      if (take == 0) {
        out(i, j) = fallback(j);
        continue;
      }
      double sum = 0.0;
      for (std::size_t t = 0; t < take; ++t) sum += reference(candidates[t].second, j);
      out(i, j) = sum / static_cast<double>(take);
    }
  }
  return out;
}

void clamp_missing(Matrix& X, const Mask& mask, const Matrix& M, const Vector& lower,
                   const Vector& upper) {
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (mask(i, j)) continue;
      X(i, j) = std::max(lower(j), std::min(upper(j), M(i, j)));
    }
  }
}

}  // namespace reference
}  // namespace onset
