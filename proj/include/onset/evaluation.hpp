#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onset/baselines.hpp"
#include "onset/cohort.hpp"
#include "onset/imputation.hpp"
#include "onset/regression.hpp"

namespace onset {

/// Mean absolute error over the complete (non-censored) samples only.
double mae(std::span<const double> predictions, std::span<const WindowSample> samples);

enum class Method { kCensoredLowRank, kOls, kSvr };

std::string_view method_name(Method method);
Method parse_method(std::string_view name);

/// A fitted model of any method, reduced to its linear predictor plus the
/// metadata needed to persist it.
struct TrainedModel {
  Method method = Method::kCensoredLowRank;
  ModelParams params;  // w, b, rank, lambda; factors when rank(w) <= rank
  SolveReport report;  // empty for baselines
  std::map<std::string, double> hyperparams;
};

struct TrainOptions {
  PgdOptions pgd;
  SvrOptions svr;
  CensoredMode baseline_mode = CensoredMode::kWeighted;
};

/// Fits one configuration on fully imputed windows.
TrainedModel train_model(std::span<const WindowSample> windows, Method method, int rank,
                         double lambda, const TrainOptions& options);

Vector predict_windows(const ModelParams& params, std::span<const WindowSample> windows);

struct Grid {
  std::vector<int> durations;
  std::vector<int> ranks;
  std::vector<double> lambdas;
};

struct CvOptions {
  Grid grid;
  std::vector<Method> methods{Method::kCensoredLowRank};
  ImputerConfig imputer;
  int k = 5;
  SplitUnit unit = SplitUnit::kSample;
  std::uint64_t seed = 0;
  int stride = 1;
  int horizon = 21;
  TrainOptions train;
  int jobs = 1;
};

struct CvEntry {
  int duration = 0;
  int rank = 0;
  double lambda = 0.0;
  Method method = Method::kCensoredLowRank;
  std::vector<double> fold_maes;
  double mean_mae = 0.0;
};

struct CvReport {
  std::vector<CvEntry> entries;
  std::uint64_t seed = 0;
  int k = 0;
  SplitUnit unit = SplitUnit::kSample;
};

/// Imputes (imputer fitted on the training windows only), trains and scores
/// one fold. Returns the trained model and the MAE on the test windows.
struct FoldOutcome {
  TrainedModel model;
  double test_mae = 0.0;
};

FoldOutcome run_fold(std::span<const WindowSample> windows, std::span<const std::size_t> train,
                     std::span<const std::size_t> test, Method method, int rank, double lambda,
                     const ImputerConfig& imputer, const TrainOptions& options);

CvReport cross_validate(const Cohort& cohort, const CvOptions& options);

struct GridRow {
  CvEntry entry;
  bool is_best = false;  // minimum mean MAE within its method
};

struct CurvePoint {
  Method method;
  int rank = 0;
  double x = 0.0;        // lambda or duration
  double at = 0.0;       // the minimizing duration or lambda
  double mean_mae = 0.0;
};

struct GridTables {
  std::vector<GridRow> grid;
  std::vector<CurvePoint> lambda_curve;    // x = lambda, at = best duration
  std::vector<CurvePoint> duration_curve;  // x = duration, at = best lambda
  int k = 0;
};

GridTables grid_report(const CvReport& report);

std::string grid_csv(const GridTables& tables);
std::string lambda_curve_csv(const GridTables& tables);
std::string duration_curve_csv(const GridTables& tables);

struct CoefficientEntry {
  std::string variable;
  int day_offset = 0;  // row of w, 0 = first day of the window
  double coefficient = 0.0;
};

std::vector<CoefficientEntry> coefficient_report(const ModelParams& params,
                                                 const std::vector<std::string>& variable_names,
                                                 std::size_t top_n);

std::string coefficients_csv(std::span<const CoefficientEntry> entries);

struct OnsetHistogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<std::size_t> complete;
  std::vector<std::size_t> censored;
  double complete_mean = 0.0;
  double censored_mean = 0.0;
};

/// Histograms of predicted values split by the censored flag.
OnsetHistogram onset_distribution(const ModelParams& params,
                                  std::span<const WindowSample> samples, int bins);

/// Same, with explicit shared bin edges (values outside land in the end bins).
OnsetHistogram onset_distribution(const ModelParams& params,
                                  std::span<const WindowSample> samples,
                                  std::vector<double> edges);

std::string onset_hist_csv(const OnsetHistogram& histogram);

std::string cv_report_json(const CvReport& report);
CvReport parse_cv_report_json(std::string_view text);

}  // namespace onset
