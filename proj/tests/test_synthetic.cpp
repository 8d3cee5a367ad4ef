#include <cmath>

#include <gtest/gtest.h>

#include "onset/regression.hpp"
#include "onset/synthetic.hpp"

using namespace onset;

namespace {

Vector singular_values(const Matrix& m) { return Eigen::JacobiSVD<Matrix>(m).singularValues(); }

bool same_cohort(const Cohort& a, const Cohort& b) {
  if (a.variables != b.variables || a.subjects.size() != b.subjects.size()) return false;
  for (std::size_t i = 0; i < a.subjects.size(); ++i) {
    const auto& s = a.subjects[i];
    const auto& t = b.subjects[i];
    if (s.subject_id != t.subject_id || s.first_day != t.first_day ||
        s.last_obs_day != t.last_obs_day || s.values != t.values || !(s.mask == t.mask).all() ||
        s.has_event() != t.has_event()) {
      return false;
    }
    if (s.has_event() &&
        std::get<Event>(s.outcome).onset_day != std::get<Event>(t.outcome).onset_day) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST(GenerateCohort, NoMissingnessMeansFullMasks) {
  SyntheticSpec spec;
  spec.missing_rate = 0.0;
  spec.n_subjects = 30;
  const auto [cohort, truth] = generate_cohort(spec);
  for (const auto& s : cohort.subjects) EXPECT_TRUE(s.mask.all());
  EXPECT_EQ(truth.w_star.rows(), spec.T_star);
  EXPECT_EQ(truth.w_star.cols(), spec.P);
  const Vector sv = singular_values(truth.w_star);
  EXPECT_LE(sv(spec.true_rank), 1e-10 * sv(0));
  EXPECT_GT(sv(spec.true_rank - 1), 1e-6 * sv(0));
}

TEST(GenerateCohort, Deterministic) {
  SyntheticSpec spec;
  spec.missing_rate = 0.2;
  spec.n_subjects = 40;
  spec.seed = 17;
  const auto a = generate_cohort(spec);
  const auto b = generate_cohort(spec);
  EXPECT_TRUE(same_cohort(a.first, b.first));
  EXPECT_EQ(a.second.w_star, b.second.w_star);
  spec.seed = 18;
  EXPECT_FALSE(same_cohort(a.first, generate_cohort(spec).first));
}

TEST(GenerateCohort, InvariantsAndMissingRate) {
  SyntheticSpec spec;
  spec.n_subjects = 300;
  spec.days_per_subject = 8;
  spec.missing_rate = 0.25;
  spec.seed = 4;
  const auto [cohort, truth] = generate_cohort(spec);
  std::size_t hidden = 0;
  std::size_t cells = 0;
  int censored = 0;
  for (const auto& s : cohort.subjects) {
    EXPECT_EQ(s.days(), spec.days_per_subject);
    EXPECT_TRUE(s.mask.row(0).any());
    EXPECT_TRUE(s.mask.row(s.days() - 1).any());
    EXPECT_GE(s.last_obs_day, s.last_day());
    if (s.has_event()) {
      const double onset = std::get<Event>(s.outcome).onset_day;
      EXPECT_GT(onset, s.first_day + spec.T_star - 1);
      EXPECT_LE(onset, s.last_obs_day);
      EXPECT_LE(onset, spec.censor_horizon);
    } else {
      ++censored;
      EXPECT_EQ(std::get<Censored>(s.outcome).horizon_day, s.last_obs_day);
    }
    hidden += static_cast<std::size_t>((!s.mask).count());
    cells += static_cast<std::size_t>(s.mask.size());
  }
  const double rate = static_cast<double>(hidden) / static_cast<double>(cells);
  EXPECT_NEAR(rate, 0.25, 0.02);
  EXPECT_NEAR(censored / 300.0, 0.3, 0.05);
}

TEST(GenerateCohort, PlantedModelFitsFirstWindowsExactly) {
  SyntheticSpec spec;
  spec.noise_sigma = 0.0;
  spec.censored_fraction.reset();
  spec.censor_horizon = 1000000;
  spec.b_star = 40.0;
  spec.n_subjects = 50;
  spec.seed = 2;
  const auto [cohort, truth] = generate_cohort(spec);
  ASSERT_EQ(truth.clipped, 0);
  ModelParams planted;
  planted.w = truth.w_star;
  planted.b = truth.b_star;
  for (const auto& s : cohort.subjects) {
    WindowSample first;
    first.x = s.values.topRows(spec.T_star);
    first.x_mask = Mask::Constant(spec.T_star, spec.P, true);
    const double end = s.first_day + spec.T_star - 1;
    EXPECT_NEAR(predict(planted, first), std::get<Event>(s.outcome).onset_day - end, 1e-8);
  }
}

TEST(GenerateCohort, NoiselessRefitRecoversTrainingFit) {
  SyntheticSpec spec;
  spec.noise_sigma = 0.0;
  spec.censored_fraction.reset();
  spec.censor_horizon = 1000000;
  spec.b_star = 40.0;
  spec.n_subjects = 600;
  spec.seed = 5;
  const auto [cohort, truth] = generate_cohort(spec);
  // First windows only: the planted model holds exactly there.
  std::vector<WindowSample> windows;
  for (const auto& s : cohort.subjects) {
    WindowSample w;
    w.x = s.values.topRows(spec.T_star);
    w.x_mask = Mask::Constant(spec.T_star, spec.P, true);
    w.window_end_day = s.first_day + spec.T_star - 1;
    w.y = std::get<Event>(s.outcome).onset_day - w.window_end_day;
    w.subject_id = s.subject_id;
    windows.push_back(std::move(w));
  }
  const DesignSet d = assemble_design(windows);
  PgdOptions opts;
  opts.tol = 1e-12;
  opts.max_iter = 20000;
  const FitResult r = fit_pgd(d, 1.0, spec.true_rank, opts);
  double total = 0.0;
  for (const auto& w : windows) total += std::abs(predict(r.params, w) - w.y);
  EXPECT_LT(total / static_cast<double>(windows.size()), 0.1);
}

TEST(GenerateCohort, RejectsInfeasibleSpec) {
  SyntheticSpec spec;
  spec.days_per_subject = 3;
  spec.T_star = 5;
  EXPECT_THROW(generate_cohort(spec), Error);
  spec = {};
  spec.true_rank = 20;
  EXPECT_THROW(generate_cohort(spec), Error);
}

TEST(GenerateLowRank, StructureAndDeterminism) {
  const Matrix r1 = generate_lowrank_matrix(6, 5, 1, 3);
  for (int i = 0; i + 1 < 6; ++i) {
    for (int j = 0; j + 1 < 5; ++j) {
      const double minor = r1(i, j) * r1(i + 1, j + 1) - r1(i, j + 1) * r1(i + 1, j);
      EXPECT_LT(std::abs(minor), 1e-10);
    }
  }
  const Matrix r3 = generate_lowrank_matrix(20, 9, 3, 4);
  const Vector sv = singular_values(r3);
  for (Eigen::Index i = 3; i < sv.size(); ++i) EXPECT_LE(sv(i), 1e-10 * sv(0));
  EXPECT_EQ(generate_lowrank_matrix(20, 9, 3, 4), r3);
  EXPECT_THROW(generate_lowrank_matrix(4, 4, 0, 1), Error);
}

TEST(OracleOls, Examples) {
  DesignSet d;
  d.T = 1;
  d.P = 1;
  d.X_complete = Matrix::Constant(1, 1, 2.0);
  d.y_complete = Vector::Constant(1, 6.0);
  d.X_censored = Matrix(1, 0);
  d.y_censored = Vector(0);
  const BaselineParams p = oracle_ols(d, 1e-12);
  EXPECT_LT(std::abs(2.0 * p.w_vec(0) + p.b - 6.0), 1e-10);
  const BaselineParams big = oracle_ols(d, 1e12);
  EXPECT_LT(std::abs(big.w_vec(0)), 1e-10);
}
