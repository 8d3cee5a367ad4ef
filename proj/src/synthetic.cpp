#include "onset/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <fmt/format.h>

namespace onset {
namespace {

void validate(const SyntheticSpec& s) {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(Errc::kInvalidArgument, fmt::format("synthetic spec: {}", what));
  };
  require(s.n_subjects >= 1, "n_subjects must be >= 1");
  require(s.P >= 1 && s.T_star >= 1, "P and T_star must be >= 1");
  require(s.days_per_subject >= s.T_star, "days_per_subject must be >= T_star");
  require(s.true_rank >= 1 && s.true_rank <= std::min(s.T_star, s.P),
          "true_rank must lie in [1, min(T_star, P)]");
  require(s.latent_rank >= 1 && s.latent_rank <= s.P, "latent_rank must lie in [1, P]");
  require(s.missing_rate >= 0.0 && s.missing_rate < 1.0, "missing_rate must lie in [0, 1)");
  require(s.noise_sigma >= 0.0 && s.daily_noise >= 0.0, "noise levels must be >= 0");
  require(s.first_day >= 1, "first_day must be >= 1");
  require(s.censor_horizon >= s.first_day + s.T_star - 1,
          "censor_horizon must not precede the end of the first window");
  require(s.signal_scale > 0.0, "signal_scale must be > 0");
  require(!s.censored_fraction || (*s.censored_fraction >= 0.0 && *s.censored_fraction < 1.0),
          "censored_fraction must lie in [0, 1)");
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

// Linear-interpolation quantile of an unsorted sample.
double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace

std::pair<Cohort, SyntheticTruth> generate_cohort(const SyntheticSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;
  const int n = spec.n_subjects;
  const int D = spec.days_per_subject;
  const int P = spec.P;
  const int T = spec.T_star;
  const int q = spec.latent_rank;

  SyntheticTruth truth;
  const Matrix raw_loadings = normal_matrix(P, q, rng);
  const Matrix Q = Eigen::HouseholderQR<Matrix>(raw_loadings).householderQ() * Matrix::Identity(P, q);
  truth.loadings = Q * std::sqrt(static_cast<double>(P) / q);
  truth.w_star = normal_matrix(T, spec.true_rank, rng) * normal_matrix(spec.true_rank, P, rng);

  std::vector<Matrix> days(static_cast<std::size_t>(n));
  for (auto& x : days) {
    x = normal_matrix(D, q, rng) * truth.loadings.transpose();
    if (spec.daily_noise > 0.0) x += spec.daily_noise * normal_matrix(D, P, rng);
  }

  auto window_scores = [&] {
    std::vector<double> s(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] =
          (days[static_cast<std::size_t>(i)].topRows(T).array() * truth.w_star.array()).sum();
    }
    return s;
  };
  std::vector<double> score = window_scores();
  if (n > 1) {
    double mean = 0.0;
    for (double v : score) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : score) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    if (sd > 0.0) {
      truth.w_star *= spec.signal_scale / sd;
      score = window_scores();
    }
  }

  std::vector<double> noisy(score.size());
  for (std::size_t i = 0; i < score.size(); ++i) noisy[i] = score[i] + spec.noise_sigma * normal(rng);

  const int first_end = spec.first_day + T - 1;
  truth.b_star = spec.b_star;
  if (spec.censored_fraction) {
    truth.b_star =
        (spec.censor_horizon - first_end) - quantile(noisy, 1.0 - *spec.censored_fraction);
  }

  Cohort cohort;
  for (int p = 0; p < P; ++p) cohort.variables.push_back(fmt::format("var{:02d}", p + 1));
  const int width = std::max(4, static_cast<int>(std::to_string(n).size()));
  const int last_record = spec.first_day + D - 1;
  std::uniform_int_distribution<int> pick_column(0, P - 1);

  for (int i = 0; i < n; ++i) {
    SubjectSeries s;
    s.subject_id = fmt::format("S{:0{}d}", i + 1, width);
    s.first_day = spec.first_day;
    s.values = days[static_cast<std::size_t>(i)];
    s.mask = Mask::Constant(D, P, true);
    if (spec.missing_rate > 0.0) {
      for (int d = 0; d < D; ++d) {
        for (int p = 0; p < P; ++p) s.mask(d, p) = uniform(rng) >= spec.missing_rate;
      }
      // Keep the first and last day on record so the span survives a CSV round trip.
      for (int d : {0, D - 1}) {
        const int column = pick_column(rng);
        if (!s.mask.row(d).any()) s.mask(d, column) = true;
      }
      for (int d = 0; d < D; ++d) {
        for (int p = 0; p < P; ++p) {
          if (!s.mask(d, p)) s.values(d, p) = 0.0;
        }
      }
    }

    double onset = first_end + noisy[static_cast<std::size_t>(i)] + truth.b_star;
    if (onset < first_end + 1) {
      onset = first_end + 1;
      ++truth.clipped;
    }
    if (spec.round_onset) onset = std::round(onset);
    if (onset > spec.censor_horizon) {
      s.outcome = Censored{last_record};
      s.last_obs_day = last_record;
    } else {
      s.outcome = Event{onset};
      s.last_obs_day = std::max(last_record, static_cast<int>(std::ceil(onset)));
    }
    cohort.subjects.push_back(std::move(s));
  }
  return {std::move(cohort), std::move(truth)};
}

Matrix generate_lowrank_matrix(int n, int p, int r, std::uint64_t seed) {
  if (n < 1 || p < 1 || r < 1 || r > std::min(n, p)) {
    fail(Errc::kInvalidArgument, "low-rank matrix needs 1 <= r <= min(n, p)");
  }
  std::mt19937_64 rng(seed);
  const Matrix left = normal_matrix(n, r, rng);
  const Matrix right = normal_matrix(r, p, rng);
  return left * right;
}

BaselineParams oracle_ols(const DesignSet& design, double ridge) {
  const Eigen::Index dim = design.X_complete.rows();
  const Eigen::Index n = design.X_complete.cols();
  Matrix Z(dim + 1, n);
  Z << design.X_complete, Matrix::Ones(1, n);
  const Matrix lhs = Z * Z.transpose() + ridge * Matrix::Identity(dim + 1, dim + 1);
  const Vector theta = lhs.fullPivLu().solve(Z * design.y_complete);
  BaselineParams p;
  p.w_vec = theta.head(dim);
  p.b = theta(dim);
  p.kind = BaselineKind::kOls;
  p.T = design.T;
  p.P = design.P;
  p.hyperparams["ridge"] = ridge;
  return p;
}

}  // namespace onset
