#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "onset/cohort.hpp"
#include "onset/common.hpp"
#include "onset/kernels.hpp"

namespace onset {

/// Bilinear factors: w = u * v'.
struct Factors {
  Matrix u;  // T x r
  Matrix v;  // P x r
};

/// Weight matrix, intercept and the hyperparameters the fit used.
/// Prediction is <x, w> + b.
struct ModelParams {
  Matrix w;
  double b = 0.0;
  int rank = 0;
  double lambda = 0.0;
  std::optional<Factors> factors;

  int T() const { return static_cast<int>(w.rows()); }
  int P() const { return static_cast<int>(w.cols()); }
};

struct RidgePolicy {
  // epsilon = relative * trace(G) / dim
  double relative = 1e-8;
  // Used instead when G is numerically rank deficient.
  double deficient_relative = 1e-2;
  double rank_tol = 1e-10;
};

/// A = (G + ridge * I)^(-1/2) with G = X X'.
struct Preconditioner {
  Matrix A;
  double ridge = 0.0;
  bool rank_deficient = false;
};

struct SolveReport {
  std::vector<double> objective_trace;  // Eq. value after each accepted iterate
  std::vector<double> step_sizes;
  int iterations = 0;
  bool converged = false;
  bool preconditioned = false;
  double ridge = 0.0;
  int rank_w = 0;  // numerical rank of the recovered w
  // max over iterations of sigma_{r+1} / sigma_1 of the projected iterate;
  // only filled when PgdOptions::track_rank is set.
  double max_tail_ratio = 0.0;
};

double objective(const ModelParams& params, const DesignSet& design);

struct Gradient {
  Vector w;  // length T * P, row-concatenated
  double b = 0.0;
};

Gradient gradient(const ModelParams& params, const DesignSet& design);

Preconditioner build_preconditioner(const Matrix& X_complete, const RidgePolicy& policy = {});

Matrix project_rank(const Matrix& w_hat, int r);

enum class StepPolicy { kBacktracking, kFixed };

std::string_view step_policy_name(StepPolicy policy);
StepPolicy parse_step_policy(std::string_view name);

struct PgdOptions {
  StepPolicy step_policy = StepPolicy::kBacktracking;
  double eta = 1.0;  // initial step (backtracking) or the step (fixed)
  int max_halvings = 50;
  double tol = 1e-4;
  int max_iter = 5000;
  bool precondition = false;
  // Solve in mean-centred coordinates; the optimum and the rank constraint
  // on w are unchanged.
  bool center = true;
  RidgePolicy ridge;
  bool track_rank = false;
};

struct FitResult {
  ModelParams params;
  SolveReport report;
};

FitResult fit_pgd(const DesignSet& design, double lambda, int r, const PgdOptions& options = {});

double predict(const ModelParams& params, const WindowSample& sample);

/// Predictions for every column of a vectorized design block.
Vector predict_design(const ModelParams& params, const Matrix& X);

Factors factorize(const ModelParams& params);

}  // namespace onset
