#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "onset/regression.hpp"
#include "onset/synthetic.hpp"

using namespace onset;

namespace {

Matrix normal_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(r, c);
  for (auto& v : m.reshaped()) v = normal(rng);
  return m;
}

DesignSet random_design(int T, int P, int nc, int nn, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DesignSet d;
  d.T = T;
  d.P = P;
  d.X_complete = normal_matrix(T * P, nc, rng);
  d.y_complete = normal_matrix(nc, 1, rng);
  d.X_censored = normal_matrix(T * P, nn, rng);
  d.y_censored = normal_matrix(nn, 1, rng);
  return d;
}

ModelParams random_params(int T, int P, std::mt19937_64& rng) {
  ModelParams p;
  p.w = normal_matrix(T, P, rng);
  p.b = normal_matrix(1, 1, rng)(0, 0);
  return p;
}

DesignSet single(const Vector& x, double y, bool censored, int T, int P) {
  DesignSet d;
  d.T = T;
  d.P = P;
  d.X_complete = Matrix(T * P, censored ? 0 : 1);
  d.y_complete = Vector(censored ? 0 : 1);
  d.X_censored = Matrix(T * P, censored ? 1 : 0);
  d.y_censored = Vector(censored ? 1 : 0);
  if (censored) {
    d.X_censored.col(0) = x;
    d.y_censored(0) = y;
  } else {
    d.X_complete.col(0) = x;
    d.y_complete(0) = y;
  }
  return d;
}

int numerical_rank(const Matrix& w) {
  Eigen::JacobiSVD<Matrix> svd(w);
  const Vector s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > 1e-10 * s(0)) ++r;
  }
  return r;
}

Matrix svd_truncate(const Matrix& m, int r) {
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Matrix out = Matrix::Zero(m.rows(), m.cols());
  for (int i = 0; i < r && i < svd.singularValues().size(); ++i) {
    out += svd.singularValues()(i) * svd.matrixU().col(i) * svd.matrixV().col(i).transpose();
  }
  return out;
}

}  // namespace

TEST(Objective, HandExamples) {
  const Vector x = (Vector(2) << 1, 1).finished();
  ModelParams p;
  p.w = (Matrix(1, 2) << 1, 1).finished();
  p.b = 1.0;  // prediction 3
  p.lambda = 0.0;
  EXPECT_EQ(objective(p, single(x, 3.0, false, 1, 2)), 0.0);
  EXPECT_EQ(objective(p, single(x, 2.0, true, 1, 2)), 0.0);
  p.b = -1.0;  // prediction 1
  p.lambda = 2.0;
  EXPECT_DOUBLE_EQ(objective(p, single(x, 2.0, true, 1, 2)), 1.0);
}

TEST(Objective, DimensionMismatch) {
  const DesignSet d = random_design(2, 3, 4, 2, 1);
  ModelParams p;
  p.w = Matrix::Zero(3, 2);
  EXPECT_THROW(objective(p, d), Error);
  EXPECT_THROW(gradient(p, d), Error);
}

TEST(Gradient, ZeroAtStationaryPoints) {
  // Complete sample fitted exactly and censored margin satisfied.
  DesignSet d = random_design(1, 2, 1, 1, 3);
  ModelParams p;
  p.w = Matrix::Zero(1, 2);
  p.b = 5.0;
  p.lambda = 0.7;
  d.y_complete(0) = 5.0;
  d.y_censored(0) = 4.0;
  Gradient g = gradient(p, d);
  EXPECT_EQ(g.w, Vector::Zero(2));
  EXPECT_EQ(g.b, 0.0);

  DesignSet censored_only = random_design(2, 2, 0, 3, 4);
  censored_only.y_censored.setConstant(-100.0);
  p.w = Matrix::Zero(2, 2);
  g = gradient(p, censored_only);
  EXPECT_EQ(g.w, Vector::Zero(4));
  EXPECT_EQ(g.b, 0.0);
}

TEST(Gradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lam(0.01, 1.0);
  const double h = 1e-5;
  for (int inst = 0; inst < 20; ++inst) {
    const DesignSet d = random_design(4, 6, 20, 10, 100 + inst);
    ModelParams p = random_params(4, 6, rng);
    p.lambda = lam(rng);
    const Gradient g = gradient(p, d);
    for (int k = 0; k <= 24; ++k) {
      ModelParams hi = p;
      ModelParams lo = p;
      if (k < 24) {
        hi.w(k / 6, k % 6) += h;
        lo.w(k / 6, k % 6) -= h;
      } else {
        hi.b += h;
        lo.b -= h;
      }
      const double fd = (objective(hi, d) - objective(lo, d)) / (2 * h);
      const double an = k < 24 ? g.w(k) : g.b;
      EXPECT_LT(std::abs(fd - an), 1e-6 * std::max(1.0, std::abs(an)));
    }
  }
}

TEST(Preconditioner, IdentityScalarAndRandom) {
  RidgePolicy tiny;
  tiny.relative = 1e-14;
  const Preconditioner id = build_preconditioner(Matrix::Identity(4, 4), tiny);
  EXPECT_LT((id.A - Matrix::Identity(4, 4)).norm(), 1e-6);

  const Preconditioner half = build_preconditioner(2.0 * Matrix::Identity(3, 3), tiny);
  EXPECT_LT((half.A - 0.5 * Matrix::Identity(3, 3)).norm(), 1e-6);

  std::mt19937_64 rng(2);
  const Matrix X = normal_matrix(6, 20, rng);
  const Preconditioner pc = build_preconditioner(X);
  const Matrix G = X * X.transpose() + pc.ridge * Matrix::Identity(6, 6);
  EXPECT_LT((pc.A * G * pc.A - Matrix::Identity(6, 6)).norm(), 1e-6);
  EXPECT_FALSE(pc.rank_deficient);

  const Preconditioner def = build_preconditioner(normal_matrix(6, 2, rng));
  EXPECT_TRUE(def.rank_deficient);
  EXPECT_TRUE(def.A.allFinite());
  EXPECT_THROW(build_preconditioner(Matrix(6, 0)), Error);
}

TEST(ProjectRank, Examples) {
  const Vector a = (Vector(3) << 1, 2, 3).finished();
  const Vector b = (Vector(2) << -1, 4).finished();
  const Matrix r1 = a * b.transpose();
  EXPECT_LT((project_rank(r1, 1) - r1).norm(), 1e-12);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 3;
  d(1, 1) = 1;
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 0) = 3;
  EXPECT_LT((project_rank(d, 1) - expected).norm(), 1e-14);

  std::mt19937_64 rng(5);
  const Matrix m = normal_matrix(5, 4, rng);
  const Matrix p = project_rank(m, 2);
  EXPECT_LT((p - svd_truncate(m, 2)).norm(), 1e-10);
  EXPECT_LT((project_rank(p, 2) - p).norm(), 1e-10);
  EXPECT_LT((project_rank(m, 4) - m).norm(), 1e-12);
}

TEST(ProjectRank, BeatsRandomCompetitors) {
  std::mt19937_64 rng(6);
  for (int inst = 0; inst < 20; ++inst) {
    const Matrix m = normal_matrix(5, 4, rng);
    const double best = (m - project_rank(m, 2)).norm();
    for (int c = 0; c < 20; ++c) {
      const Matrix comp = normal_matrix(5, 2, rng) * normal_matrix(2, 4, rng);
      EXPECT_LE(best, (m - comp).norm());
    }
  }
}

TEST(FitPgd, SingleSampleInterpolated) {
  std::mt19937_64 rng(7);
  const Vector x = normal_matrix(6, 1, rng);
  const DesignSet d = single(x, 4.0, false, 2, 3);
  PgdOptions opts;
  opts.tol = 1e-15;
  opts.max_iter = 20000;
  const FitResult r = fit_pgd(d, 0.1, 1, opts);
  EXPECT_LT(r.report.objective_trace.back(), 1e-10);
  EXPECT_LE(r.report.rank_w, 1);
}

TEST(FitPgd, MatchesLeastSquaresOracleAtFullRank) {
  for (bool pre : {false, true}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const DesignSet d = random_design(3, 4, 40, 0, 30 + seed);
      PgdOptions opts;
      opts.precondition = pre;
      opts.tol = 1e-15;
      opts.max_iter = 50000;
      const FitResult r = fit_pgd(d, 0.5, 3, opts);
      const ModelParams oracle = oracle_ols(d, 0.0).as_model();
      const double fo = objective(oracle, d);
      const double fp = objective(r.params, d);
      EXPECT_LT(std::abs(fp - fo), 1e-8 * fo) << "pre=" << pre << " seed=" << seed;
      const Vector diff =
          predict_design(r.params, d.X_complete) - predict_design(oracle, d.X_complete);
      EXPECT_LT(diff.lpNorm<Eigen::Infinity>(), 1e-6);
    }
  }
}

TEST(FitPgd, TraceMonotoneAndRankFeasible) {
  for (bool pre : {false, true}) {
    const DesignSet d = random_design(4, 5, 30, 15, 77);
    PgdOptions opts;
    opts.precondition = pre;
    opts.track_rank = true;
    opts.tol = 1e-10;
    const FitResult r = fit_pgd(d, 0.3, 2, opts);
    const auto& t = r.report.objective_trace;
    ASSERT_GE(t.size(), 2u);
    for (std::size_t k = 1; k < t.size(); ++k) EXPECT_LE(t[k], t[k - 1]);
    EXPECT_EQ(r.report.step_sizes.size() + 1, t.size());
    EXPECT_LE(r.report.max_tail_ratio, 1e-10);
    EXPECT_EQ(r.report.preconditioned, pre);
    EXPECT_EQ(r.report.rank_w, numerical_rank(r.params.w));
    if (!pre) {
      // With preconditioning the rank bound holds for the transformed iterate.
      EXPECT_LE(numerical_rank(r.params.w), 2);
      ASSERT_TRUE(r.params.factors.has_value());
    }
    EXPECT_NEAR(t.back(), objective(r.params, d), 1e-10 * t.back());
  }
}

TEST(FitPgd, PreconditioningIsAReparameterizationAtFullRank) {
  const DesignSet d = random_design(2, 3, 30, 10, 12);
  PgdOptions opts;
  opts.tol = 1e-15;
  opts.max_iter = 50000;
  const double plain = fit_pgd(d, 0.4, 2, opts).report.objective_trace.back();
  opts.precondition = true;
  const double pre = fit_pgd(d, 0.4, 2, opts).report.objective_trace.back();
  EXPECT_LT(std::abs(plain - pre), 1e-6 * plain);
}

TEST(FitPgd, Errors) {
  const DesignSet censored_only = random_design(2, 2, 0, 5, 1);
  PgdOptions opts;
  opts.precondition = true;
  EXPECT_THROW(fit_pgd(censored_only, 1.0, 1, opts), Error);
  EXPECT_THROW(fit_pgd(random_design(2, 2, 5, 0, 1), 1.0, 0), Error);

  opts.precondition = false;
  opts.step_policy = StepPolicy::kFixed;
  opts.eta = 1e6;
  try {
    fit_pgd(random_design(2, 2, 20, 0, 2), 1.0, 2, opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNonFinite);
  }
  EXPECT_EQ(parse_step_policy(step_policy_name(StepPolicy::kFixed)), StepPolicy::kFixed);
  EXPECT_THROW(parse_step_policy("amigo"), Error);
}

TEST(Predict, Examples) {
  WindowSample s;
  s.x = (Matrix(2, 2) << 1, 2, 3, 4).finished();
  s.x_mask = Mask::Constant(2, 2, true);
  ModelParams p;
  p.w = Matrix::Identity(2, 2);
  EXPECT_EQ(predict(p, s), 5.0);
  p.w.setZero();
  p.b = 7.5;
  EXPECT_EQ(predict(p, s), 7.5);
  s.x_mask(0, 1) = false;
  EXPECT_THROW(predict(p, s), Error);
  p.w = Matrix::Zero(3, 2);
  s.x_mask.setConstant(true);
  EXPECT_THROW(predict(p, s), Error);
}

TEST(Factorize, ReconstructsAndBilinearIdentity) {
  std::mt19937_64 rng(9);
  ModelParams p;
  p.w = normal_matrix(4, 1, rng) * normal_matrix(1, 3, rng);
  p.rank = 1;
  Factors f = factorize(p);
  EXPECT_LT((f.u * f.v.transpose() - p.w).norm(), 1e-10 * p.w.norm());

  p.w.setZero();
  f = factorize(p);
  EXPECT_TRUE(f.u.isZero(0.0));
  EXPECT_TRUE(f.v.isZero(0.0));

  p.w = normal_matrix(5, 2, rng) * normal_matrix(2, 6, rng);
  p.rank = 2;
  p.b = 0.25;
  f = factorize(p);
  p.factors = f;
  for (int i = 0; i < 100; ++i) {
    WindowSample s;
    s.x = normal_matrix(5, 6, rng);
    s.x_mask = Mask::Constant(5, 6, true);
    double bilinear = 0.0;
    for (int r = 0; r < 2; ++r) bilinear += f.u.col(r).dot(s.x * f.v.col(r));
    EXPECT_NEAR(bilinear, (p.w.array() * s.x.array()).sum(), 1e-9);
    EXPECT_NEAR(predict(p, s), bilinear + p.b, 1e-9);
  }
}

TEST(KroneckerTransform, PreservesRank) {
  std::mt19937_64 rng(10);
  const int T = 4;
  const int P = 5;
  for (int i = 0; i < 50; ++i) {
    const int r = 1 + i % 3;
    const Matrix w = normal_matrix(T, r, rng) * normal_matrix(r, P, rng);
    const Matrix B = normal_matrix(T, T, rng);
    const Vector v = vectorize(w);
    Vector out = Vector::Zero(T * P);
    for (int a = 0; a < T; ++a) {
      for (int c = 0; c < T; ++c) out.segment(a * P, P) += B(a, c) * v.segment(c * P, P);
    }
    EXPECT_EQ(numerical_rank(reshape(out, T, P)), numerical_rank(w));
  }
}
