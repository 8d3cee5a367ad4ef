#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "onset/cohort.hpp"
#include "onset/regression.hpp"

namespace onset {

enum class BaselineKind { kOls, kSvr };

enum class CensoredMode { kIgnore, kWeighted };

std::string_view censored_mode_name(CensoredMode mode);
CensoredMode parse_censored_mode(std::string_view name);

struct BaselineParams {
  Vector w_vec;  // length T * P
  double b = 0.0;
  BaselineKind kind = BaselineKind::kOls;
  std::map<std::string, double> hyperparams;
  int T = 0;
  int P = 0;

  /// View as a weight matrix so the shared prediction and report code applies.
  ModelParams as_model() const;
};

/// Weighted least squares with an intercept, solved from the ridge-stabilized
/// normal equations followed by iterative refinement against the
/// unregularized system.
BaselineParams ols_fit(const DesignSet& design, double lambda, CensoredMode mode,
                       const RidgePolicy& ridge = {});

struct SvrOptions {
  double C = 1.0;
  double epsilon = 0.1;
  double tol = 1e-9;
  int max_iter = 20000;
  double smoothing_start = 1.0;
  double smoothing_min = 1e-7;
};

/// Linear epsilon-insensitive regression,
///   1/2 |w|^2 + C sum_complete max(0, |r| - eps) [+ lambda C sum_censored ...].
/// If trace is non-null it receives the best objective value found so far
/// after every iteration.
BaselineParams svr_fit(const DesignSet& design, const SvrOptions& options, double lambda,
                       CensoredMode mode, std::vector<double>* trace = nullptr);

double svr_objective(const BaselineParams& params, const DesignSet& design,
                     const SvrOptions& options, double lambda, CensoredMode mode);

double ols_objective(const BaselineParams& params, const DesignSet& design, double lambda,
                     CensoredMode mode);

double predict(const BaselineParams& params, const WindowSample& sample);

}  // namespace onset
