#include "onset/imputation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "onset/kernels.hpp"
#include "onset/linalg.hpp"

namespace onset {
namespace {

void check_mask(const Matrix& X, const Mask& mask) {
  if (mask.rows() != X.rows() || mask.cols() != X.cols()) {
    fail(Errc::kDimensionMismatch, "values and mask differ in shape");
  }
}

void check_finite_observed(const Matrix& X, const Mask& mask) {
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (mask(i, j) && !std::isfinite(X(i, j))) {
        fail(Errc::kNonFinite, fmt::format("observed entry ({}, {}) is not finite", i, j));
      }
    }
  }
}

}  // namespace

ImputationMatrix imputation_rows(std::span<const WindowSample> windows) {
  std::map<std::pair<std::string, int>, std::pair<const WindowSample*, int>> unique;
  Eigen::Index P = windows.empty() ? 0 : windows.front().P();
  for (const auto& w : windows) {
    if (w.P() != P) fail(Errc::kDimensionMismatch, "windows differ in variable count");
    for (int t = 0; t < w.T(); ++t) unique.try_emplace({w.subject_id, w.first_day() + t}, &w, t);
  }
  ImputationMatrix out;
  out.X.resize(static_cast<Eigen::Index>(unique.size()), P);
  out.mask.resize(static_cast<Eigen::Index>(unique.size()), P);
  Eigen::Index i = 0;
  for (const auto& [key, source] : unique) {
    out.X.row(i) = source.first->x.row(source.second);
    out.mask.row(i) = source.first->x_mask.row(source.second);
    out.row_index.push_back(key);
    ++i;
  }
  return out;
}

ImputationMatrix imputation_rows(const Cohort& cohort) {
  Eigen::Index n = 0;
  for (const auto& s : cohort.subjects) n += s.days();
  ImputationMatrix out;
  out.X.resize(n, cohort.num_variables());
  out.mask.resize(n, cohort.num_variables());
  Eigen::Index i = 0;
  for (const auto& s : cohort.subjects) {
    out.X.middleRows(i, s.days()) = s.values;
    out.mask.middleRows(i, s.days()) = s.mask;
    for (int d = 0; d < s.days(); ++d) out.row_index.emplace_back(s.subject_id, s.first_day + d);
    i += s.days();
  }
  return out;
}

Bounds compute_bounds(const Matrix& X, const Mask& mask) {
  check_mask(X, mask);
  Bounds b{Vector(X.cols()), Vector(X.cols())};
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    bool any = false;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (!mask(i, j)) continue;
      b.lower(j) = any ? std::min(b.lower(j), X(i, j)) : X(i, j);
      b.upper(j) = any ? std::max(b.upper(j), X(i, j)) : X(i, j);
      any = true;
    }
    if (!any) fail(Errc::kEmptyColumn, fmt::format("column {} has no observed entry", j));
  }
  return b;
}

Vector observed_column_means(const Matrix& X, const Mask& mask) {
  check_mask(X, mask);
  Vector means(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    double sum = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (mask(i, j)) {
        sum += X(i, j);
        ++count;
      }
    }
    if (count == 0) fail(Errc::kEmptyColumn, fmt::format("column {} has no observed entry", j));
    means(j) = sum / static_cast<double>(count);
  }
  return means;
}

BmcResult bmc_fit(const Matrix& X, const Mask& mask, const BmcOptions& options) {
  check_mask(X, mask);
  if (options.rank < 1) fail(Errc::kInvalidArgument, "rank must be >= 1");
  if (options.rank > X.cols()) {
    fail(Errc::kInvalidArgument,
         fmt::format("rank {} exceeds the {} variables", options.rank, X.cols()));
  }
  if (options.max_iter < 1) fail(Errc::kInvalidArgument, "max_iter must be >= 1");
  check_finite_observed(X, mask);

  BmcResult result;
  BmcModel& model = result.model;
  model.column_means = observed_column_means(X, mask);
  const Bounds bounds = options.bounds ? *options.bounds : compute_bounds(X, mask);
  if (bounds.lower.size() != X.cols() || bounds.upper.size() != X.cols() ||
      (bounds.lower.array() > bounds.upper.array()).any()) {
    fail(Errc::kInvalidArgument, "bounds must have one ordered pair per column");
  }
  model.lower = bounds.lower;
  model.upper = bounds.upper;

  Matrix current = X;
  const Matrix seed = model.column_means.replicate(1, X.rows()).transpose();
  kernels::clamp_missing(current, mask, seed, model.lower, model.upper);

  // Each sweep projects onto rank r, then onto the box for the missing cells.
  // Both are exact minimizations, so ||X - M||_F^2 cannot increase; a sweep
  // that fails to decrease it (rounding at the fixed point) is discarded.
  Matrix basis;
  for (int it = 0; it < options.max_iter; ++it) {
    const linalg::Svd svd = linalg::thin_svd(current);
    const Matrix M = linalg::truncate(svd, options.rank);
    const double f = (current - M).squaredNorm();
    if (!std::isfinite(f)) fail(Errc::kNonFinite, "matrix completion objective is not finite");
    if (!result.objective_trace.empty() && f > result.objective_trace.back()) {
      result.converged = true;
      break;
    }
    const double f_prev = result.objective_trace.empty() ? f : result.objective_trace.back();
    result.objective_trace.push_back(f);
    result.iterations = it + 1;
    basis = svd.V.leftCols(std::min<Eigen::Index>(options.rank, svd.V.cols()));
    kernels::clamp_missing(current, mask, M, model.lower, model.upper);
    if (f == 0.0 || (it > 0 && f_prev - f < options.tol * f_prev)) {
      result.converged = true;
      break;
    }
  }

  model.basis = std::move(basis);
  model.rank = static_cast<int>(model.basis.cols());
  result.completed = std::move(current);
  return result;
}

Vector impute_new(const Vector& z, const MaskVector& observed, const BmcModel& model,
                  const ImputeOptions& options, std::vector<double>* trace) {
  const Eigen::Index P = model.basis.rows();
  if (z.size() != P || observed.size() != P || model.lower.size() != P ||
      model.upper.size() != P) {
    fail(Errc::kDimensionMismatch,
         fmt::format("vector of length {} does not match a {}-variable model", z.size(), P));
  }
  Vector out = z;
  if (observed.all()) return out;
  for (Eigen::Index j = 0; j < P; ++j) {
    if (observed(j)) continue;
    const double start = model.column_means.size() == P
                             ? model.column_means(j)
                             : 0.5 * (model.lower(j) + model.upper(j));
    out(j) = std::clamp(start, model.lower(j), model.upper(j));
  }

  double previous = 0.0;
  for (int it = 0; it < options.max_iter; ++it) {
    const Vector alpha = model.basis.transpose() * out;
    const Vector fit = model.basis * alpha;
    const double g = (out - fit).squaredNorm();
    if (it > 0 && g > previous) break;
    if (trace) trace->push_back(g);
    for (Eigen::Index j = 0; j < P; ++j) {
      if (!observed(j)) out(j) = std::clamp(fit(j), model.lower(j), model.upper(j));
    }
    if (g == 0.0 || (it > 0 && previous - g < options.tol * previous)) break;
    previous = g;
  }
  return out;
}

Matrix mean_impute(const Matrix& X, const Mask& mask) {
  const Vector means = observed_column_means(X, mask);
  Matrix out = X;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (!mask(i, j)) out(i, j) = means(j);
    }
  }
  return out;
}

Matrix knn_impute(const Matrix& X, const Mask& mask, int k) {
  const Vector fallback = observed_column_means(X, mask);
  return kernels::knn_fill(X, mask, X, mask, k, fallback, /*exclude_self=*/true);
}

std::string_view imputer_name(ImputerKind kind) {
  switch (kind) {
    case ImputerKind::kBmc: return "bmc";
    case ImputerKind::kMean: return "mean";
    case ImputerKind::kKnn: return "knn";
  }
  return "bmc";
}

ImputerKind parse_imputer(std::string_view name) {
  if (name == "bmc") return ImputerKind::kBmc;
  if (name == "mean") return ImputerKind::kMean;
  if (name == "knn") return ImputerKind::kKnn;
  fail(Errc::kInvalidArgument, fmt::format("unknown imputer '{}'", name));
}

std::unique_ptr<Imputer> make_imputer(const ImputerConfig& config) {
  switch (config.kind) {
    case ImputerKind::kBmc: return std::make_unique<BmcImputer>(config);
    case ImputerKind::kMean: return std::make_unique<MeanImputer>();
    case ImputerKind::kKnn: return std::make_unique<KnnImputer>(config.knn_k);
  }
  fail(Errc::kInvalidArgument, "unknown imputer kind");
}

BmcImputer::BmcImputer(BmcModel model, ImputeOptions options) : model_(std::move(model)) {
  config_.impute = options;
  config_.rank = model_.rank;
}

Matrix BmcImputer::fit(const Matrix& X, const Mask& mask) {
  BmcOptions options = config_.bmc;
  options.rank = config_.rank;
  last_fit_ = bmc_fit(X, mask, options);
  model_ = last_fit_.model;
  return last_fit_.completed;
}

Vector BmcImputer::impute(const Vector& z, const MaskVector& observed) const {
  if (model_.basis.size() == 0) fail(Errc::kInvalidArgument, "imputer has not been fitted");
  return impute_new(z, observed, model_, config_.impute);
}

Matrix MeanImputer::fit(const Matrix& X, const Mask& mask) {
  means_ = observed_column_means(X, mask);
  return mean_impute(X, mask);
}

Vector MeanImputer::impute(const Vector& z, const MaskVector& observed) const {
  if (means_.size() == 0) fail(Errc::kInvalidArgument, "imputer has not been fitted");
  if (z.size() != means_.size() || observed.size() != means_.size()) {
    fail(Errc::kDimensionMismatch, "vector length does not match the imputer");
  }
  Vector out = z;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    if (!observed(j)) out(j) = means_(j);
  }
  return out;
}

KnnImputer::KnnImputer(int k, Matrix reference, Mask reference_mask)
    : k_(k), reference_(std::move(reference)), reference_mask_(std::move(reference_mask)) {
  means_ = observed_column_means(reference_, reference_mask_);
}

Matrix KnnImputer::fit(const Matrix& X, const Mask& mask) {
  means_ = observed_column_means(X, mask);
  reference_ = X;
  reference_mask_ = mask;
  return kernels::knn_fill(X, mask, X, mask, k_, means_, /*exclude_self=*/true);
}

Vector KnnImputer::impute(const Vector& z, const MaskVector& observed) const {
  if (means_.size() == 0) fail(Errc::kInvalidArgument, "imputer has not been fitted");
  if (z.size() != means_.size() || observed.size() != means_.size()) {
    fail(Errc::kDimensionMismatch, "vector length does not match the imputer");
  }
  if (observed.all()) return z;
  const Matrix row = z.transpose();
  const Mask row_mask = observed.transpose();
  return kernels::knn_fill(row, row_mask, reference_, reference_mask_, k_, means_, false)
      .row(0)
      .transpose();
}

void impute_training_windows(std::vector<WindowSample>& windows, Imputer& imputer) {
  if (windows.empty()) return;
  ImputationMatrix rows = imputation_rows(windows);
  const Matrix completed = imputer.fit(rows.X, rows.mask);
  std::map<std::pair<std::string, int>, Eigen::Index> lookup;
  for (std::size_t i = 0; i < rows.row_index.size(); ++i) {
    lookup.emplace(rows.row_index[i], static_cast<Eigen::Index>(i));
  }
  for (auto& w : windows) {
    for (int t = 0; t < w.T(); ++t) {
      w.x.row(t) = completed.row(lookup.at({w.subject_id, w.first_day() + t}));
    }
    w.x_mask.setConstant(true);
  }
}

void impute_new_windows(std::vector<WindowSample>& windows, const Imputer& imputer) {
  for (auto& w : windows) {
    for (int t = 0; t < w.T(); ++t) {
      if (w.x_mask.row(t).all()) continue;
      const Vector z = w.x.row(t).transpose();
      const MaskVector observed = w.x_mask.row(t).transpose();
      w.x.row(t) = imputer.impute(z, observed).transpose();
    }
    w.x_mask.setConstant(true);
  }
}

}  // namespace onset
