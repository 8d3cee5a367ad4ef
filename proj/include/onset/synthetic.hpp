#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "onset/baselines.hpp"
#include "onset/cohort.hpp"

namespace onset {

struct SyntheticSpec {
  int n_subjects = 200;
  int days_per_subject = 5;
  int P = 10;
  int T_star = 5;
  int true_rank = 2;
  double noise_sigma = 1.0;
  int censor_horizon = 21;
  double missing_rate = 0.0;
  int latent_rank = 3;
  std::uint64_t seed = 0;
  int first_day = 1;
  // Standard deviation of <x, w_star> over the subjects' first windows.
  double signal_scale = 4.0;
  // When set, b_star is calibrated so this fraction of subjects is censored;
  // otherwise b_star below is used as given.
  std::optional<double> censored_fraction = 0.3;
  double b_star = 10.0;
  // Isotropic noise added to each daily vector on top of the factor model.
  double daily_noise = 0.0;
  bool round_onset = false;
};

struct SyntheticTruth {
  Matrix w_star;    // T_star x P, rank true_rank
  double b_star = 0.0;
  Matrix loadings;  // P x latent_rank
  int clipped = 0;  // subjects whose onset was moved to one day after the window
};

/// Daily vectors follow x = L f with orthogonal loadings L scaled to unit
/// average variance per variable. Each subject's onset is the end of its
/// first T_star-day window plus <x_window, w_star> + b_star + noise, so that
/// window satisfies the planted linear model exactly when noise_sigma = 0.
std::pair<Cohort, SyntheticTruth> generate_cohort(const SyntheticSpec& spec);

/// n x r times r x p standard normal factors.
Matrix generate_lowrank_matrix(int n, int p, int r, std::uint64_t seed);

/// Independent reference solve of (Z Z' + ridge I) [w; b] = Z y with Z the
/// complete design augmented by a row of ones. Test-only.
BaselineParams oracle_ols(const DesignSet& design, double ridge);

}  // namespace onset
