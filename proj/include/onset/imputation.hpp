#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "onset/cohort.hpp"
#include "onset/common.hpp"

namespace onset {

/// Person-day observation vectors stacked as rows.
struct ImputationMatrix {
  Matrix X;
  Mask mask;
  std::vector<std::pair<std::string, int>> row_index;  // (subject_id, day)
};

/// Unique (subject, day) rows covered by the given windows, ordered by
/// subject id then day.
ImputationMatrix imputation_rows(std::span<const WindowSample> windows);

/// All person-days of a cohort, in cohort order.
ImputationMatrix imputation_rows(const Cohort& cohort);

struct Bounds {
  Vector lower;
  Vector upper;
};

Bounds compute_bounds(const Matrix& X, const Mask& mask);
Vector observed_column_means(const Matrix& X, const Mask& mask);

struct BmcModel {
  Matrix basis;  // P x r, orthonormal columns
  Vector lower;
  Vector upper;
  Vector column_means;  // training means of observed entries, used to seed impute_new
  int rank = 0;
  std::vector<std::string> variables;
};

struct BmcOptions {
  int rank = 3;
  double tol = 1e-6;
  int max_iter = 500;
  // Overrides the observed min/max box. Used to make the bounds inactive.
  std::optional<Bounds> bounds;
};

struct BmcResult {
  Matrix completed;
  BmcModel model;
  std::vector<double> objective_trace;  // ||X - M||_F^2 per iteration
  int iterations = 0;
  bool converged = false;
};

BmcResult bmc_fit(const Matrix& X, const Mask& mask, const BmcOptions& options);

struct ImputeOptions {
  double tol = 1e-8;
  int max_iter = 200;
};

/// Test-time completion of one daily vector against a fitted basis.
/// observed(j) marks the entries of z that are known. If trace is non-null
/// it receives ||z - basis * alpha||^2 after every alpha update.
Vector impute_new(const Vector& z, const MaskVector& observed, const BmcModel& model,
                  const ImputeOptions& options = {}, std::vector<double>* trace = nullptr);

Matrix mean_impute(const Matrix& X, const Mask& mask);

Matrix knn_impute(const Matrix& X, const Mask& mask, int k = 5);

// ---------------------------------------------------------------------------
// Imputer strategies used by the training pipeline.

enum class ImputerKind { kBmc, kMean, kKnn };

std::string_view imputer_name(ImputerKind kind);
ImputerKind parse_imputer(std::string_view name);

struct ImputerConfig {
  ImputerKind kind = ImputerKind::kBmc;
  int rank = 3;
  int knn_k = 5;
  BmcOptions bmc;  // rank is taken from ImputerConfig::rank
  ImputeOptions impute;
};

class Imputer {
 public:
  virtual ~Imputer() = default;

  /// Fits on training rows and returns them completed.
  virtual Matrix fit(const Matrix& X, const Mask& mask) = 0;
  /// Completes a single new row using only training information.
  virtual Vector impute(const Vector& z, const MaskVector& observed) const = 0;
  virtual ImputerKind kind() const = 0;
};

std::unique_ptr<Imputer> make_imputer(const ImputerConfig& config);

class BmcImputer final : public Imputer {
 public:
  explicit BmcImputer(ImputerConfig config) : config_(std::move(config)) {}
  explicit BmcImputer(BmcModel model, ImputeOptions options = {});

  Matrix fit(const Matrix& X, const Mask& mask) override;
  Vector impute(const Vector& z, const MaskVector& observed) const override;
  ImputerKind kind() const override { return ImputerKind::kBmc; }

  const BmcModel& model() const { return model_; }
  const BmcResult& last_fit() const { return last_fit_; }

 private:
  ImputerConfig config_;
  BmcModel model_;
  BmcResult last_fit_;
};

class MeanImputer final : public Imputer {
 public:
  MeanImputer() = default;
  explicit MeanImputer(Vector means) : means_(std::move(means)) {}

  Matrix fit(const Matrix& X, const Mask& mask) override;
  Vector impute(const Vector& z, const MaskVector& observed) const override;
  ImputerKind kind() const override { return ImputerKind::kMean; }

  const Vector& means() const { return means_; }

 private:
  Vector means_;
};

class KnnImputer final : public Imputer {
 public:
  explicit KnnImputer(int k = 5) : k_(k) {}
  KnnImputer(int k, Matrix reference, Mask reference_mask);

  Matrix fit(const Matrix& X, const Mask& mask) override;
  Vector impute(const Vector& z, const MaskVector& observed) const override;
  ImputerKind kind() const override { return ImputerKind::kKnn; }

  int k() const { return k_; }
  const Matrix& reference() const { return reference_; }
  const Mask& reference_mask() const { return reference_mask_; }

 private:
  int k_;
  Matrix reference_;
  Mask reference_mask_;
  Vector means_;
};

/// Fits the imputer on the person-days covered by the training windows and
/// writes the completed rows back into them.
void impute_training_windows(std::vector<WindowSample>& windows, Imputer& imputer);

/// Completes every row of the given windows with an already fitted imputer.
void impute_new_windows(std::vector<WindowSample>& windows, const Imputer& imputer);

}  // namespace onset
