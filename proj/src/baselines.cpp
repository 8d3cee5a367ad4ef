#include "onset/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace onset {
namespace {

// Stacked samples with per-sample weights; censored samples carry lambda
// (weighted mode) and are dropped otherwise.
struct WeightedSet {
  Matrix X;  // dim x n
  Vector y;
  Vector weight;
};

WeightedSet gather(const DesignSet& design, double lambda, CensoredMode mode) {
  if (design.n_complete() == 0) fail(Errc::kEmptyDesign, "baseline needs a complete sample");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    fail(Errc::kInvalidArgument, "lambda must be finite and >= 0");
  }
  const bool use_censored = mode == CensoredMode::kWeighted && design.n_censored() > 0;
  const Eigen::Index n_c = design.n_complete();
  const Eigen::Index n = n_c + (use_censored ? design.n_censored() : 0);
  WeightedSet set{Matrix(design.dim(), n), Vector(n), Vector(n)};
  set.X.leftCols(n_c) = design.X_complete;
  set.y.head(n_c) = design.y_complete;
  set.weight.head(n_c).setOnes();
  if (use_censored) {
    set.X.rightCols(design.n_censored()) = design.X_censored;
    set.y.tail(design.n_censored()) = design.y_censored;
    set.weight.tail(design.n_censored()).setConstant(lambda);
  }
  return set;
}

BaselineParams make_params(const DesignSet& design, BaselineKind kind, Vector w, double b) {
  BaselineParams p;
  p.w_vec = std::move(w);
  p.b = b;
  p.kind = kind;
  p.T = design.T;
  p.P = design.P;
  return p;
}

// Huber-smoothed tube loss h(t) for t = |r| - epsilon, and its derivatives.
double smooth(double t, double mu) {
  if (t <= 0.0) return 0.0;
  return t <= mu ? 0.5 * t * t / mu : t - 0.5 * mu;
}
double smooth_d1(double t, double mu) {
  if (t <= 0.0) return 0.0;
  return t <= mu ? t / mu : 1.0;
}

double svr_value(const WeightedSet& set, const Vector& w, double b, double C, double eps,
                 double mu) {
  const Vector r = (set.X.transpose() * w).array() + b - set.y.array();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double t = std::abs(r(i)) - eps;
    loss += set.weight(i) * (mu > 0.0 ? smooth(t, mu) : std::max(0.0, t));
  }
  return 0.5 * w.squaredNorm() + C * loss;
}

}  // namespace

std::string_view censored_mode_name(CensoredMode mode) {
  return mode == CensoredMode::kIgnore ? "ignore" : "weighted";
}

CensoredMode parse_censored_mode(std::string_view name) {
  if (name == "ignore") return CensoredMode::kIgnore;
  if (name == "weighted") return CensoredMode::kWeighted;
  fail(Errc::kInvalidArgument, fmt::format("unknown censored mode '{}'", name));
}

ModelParams BaselineParams::as_model() const {
  ModelParams m;
  m.w = reshape(w_vec, T, P);
  m.b = b;
  m.rank = std::min(T, P);
  const auto it = hyperparams.find("lambda");
  m.lambda = it != hyperparams.end() ? it->second : 0.0;
  return m;
}

BaselineParams ols_fit(const DesignSet& design, double lambda, CensoredMode mode,
                       const RidgePolicy& ridge) {
  const WeightedSet set = gather(design, lambda, mode);
  const Eigen::Index dim = design.dim();
  const Eigen::Index n = set.X.cols();

  Matrix Z(dim + 1, n);
  Z.topRows(dim) = set.X;
  Z.row(dim).setOnes();
  const Matrix ZW = Z * set.weight.asDiagonal();
  const Matrix H = ZW * Z.transpose();
  const Vector rhs = ZW * set.y;

  double eps = ridge.relative * H.trace() / static_cast<double>(dim + 1);
  if (!(eps > 0.0)) eps = ridge.relative;
  const Matrix H_reg = H + eps * Matrix::Identity(dim + 1, dim + 1);
  const Eigen::LDLT<Matrix> ldlt(H_reg);
  if (ldlt.info() != Eigen::Success) fail(Errc::kNonFinite, "normal equations are singular");

  // Refine against the unregularized system so the ridge does not bias the fit.
  Vector theta = ldlt.solve(rhs);
  for (int it = 0; it < 200; ++it) {
    const Vector delta = ldlt.solve(rhs - H * theta);
    theta += delta;
    if (delta.norm() <= 1e-15 * std::max(theta.norm(), 1.0)) break;
  }
  if (!theta.allFinite()) fail(Errc::kNonFinite, "least-squares solution is not finite");

  BaselineParams p = make_params(design, BaselineKind::kOls, theta.head(dim), theta(dim));
  p.hyperparams["lambda"] = lambda;
  p.hyperparams["censored_weighted"] = mode == CensoredMode::kWeighted ? 1.0 : 0.0;
  return p;
}

BaselineParams svr_fit(const DesignSet& design, const SvrOptions& options, double lambda,
                       CensoredMode mode, std::vector<double>* trace) {
  if (!(options.C > 0.0) || !(options.epsilon >= 0.0)) {
    fail(Errc::kInvalidArgument, "SVR needs C > 0 and epsilon >= 0");
  }
  if (!(options.smoothing_start >= options.smoothing_min) || !(options.smoothing_min > 0.0)) {
    fail(Errc::kInvalidArgument, "smoothing must satisfy 0 < min <= start");
  }
  const WeightedSet set = gather(design, lambda, mode);
  const Eigen::Index dim = design.dim();
  const Eigen::Index n = set.X.cols();
  const double C = options.C;
  const double eps = options.epsilon;

  Vector w = Vector::Zero(dim);
  double b = design.y_complete.mean();
  Vector best_w = w;
  double best_b = b;
  double best = svr_value(set, w, b, C, eps, 0.0);
  if (trace) trace->push_back(best);

  // Newton iterations on the smoothed objective, tightening the smoothing
  // between stages. The exact objective of every iterate is tracked and the
  // best one returned.
  int iterations = 0;
  for (double mu = options.smoothing_start; iterations < options.max_iter; mu *= 0.1) {
    const bool last_stage = mu <= options.smoothing_min * (1.0 + 1e-12);
    mu = std::max(mu, options.smoothing_min);
    for (int inner = 0; inner < 100 && iterations < options.max_iter; ++inner) {
      const Vector r = (set.X.transpose() * w).array() + b - set.y.array();
      Vector coef(n);   // d/dr of the weighted smoothed loss
      Vector curv(n);   // d2/dr2
      for (Eigen::Index i = 0; i < n; ++i) {
        const double t = std::abs(r(i)) - eps;
        const double sign = r(i) >= 0.0 ? 1.0 : -1.0;
        coef(i) = C * set.weight(i) * smooth_d1(t, mu) * sign;
        curv(i) = (t > 0.0 && t <= mu) ? C * set.weight(i) / mu : 0.0;
      }
      Vector grad(dim + 1);
      grad.head(dim) = w + set.X * coef;
      grad(dim) = coef.sum();
      const double f_mu = svr_value(set, w, b, C, eps, mu);
      if (grad.lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, std::abs(f_mu))) break;

      Matrix H = Matrix::Zero(dim + 1, dim + 1);
      H.topLeftCorner(dim, dim).diagonal().setOnes();
      Matrix Z(dim + 1, n);
      Z.topRows(dim) = set.X;
      Z.row(dim).setOnes();
      H.noalias() += Z * curv.asDiagonal() * Z.transpose();
      H.diagonal().array() += 1e-10 * std::max(1.0, H.diagonal().maxCoeff());
      const Vector d = -H.ldlt().solve(grad);

      double alpha = 1.0;
      const double slope = grad.dot(d);
      Vector w_new;
      double b_new = b;
      double f_new = f_mu;
      bool moved = false;
      for (int h = 0; h < 60; ++h, alpha *= 0.5) {
        w_new = w + alpha * d.head(dim);
        b_new = b + alpha * d(dim);
        f_new = svr_value(set, w_new, b_new, C, eps, mu);
        if (f_new <= f_mu + 1e-4 * alpha * slope) {
          moved = true;
          break;
        }
      }
      ++iterations;
      if (moved) {
        w = std::move(w_new);
        b = b_new;
        const double exact = svr_value(set, w, b, C, eps, 0.0);
        if (exact < best) {
          best = exact;
          best_w = w;
          best_b = b;
        }
      }
      if (trace) trace->push_back(best);
      if (!moved || f_mu - f_new <= options.tol * std::max(1.0, std::abs(f_mu))) break;
    }
    if (last_stage) break;
  }
  if (!best_w.allFinite() || !std::isfinite(best_b)) {
    fail(Errc::kNonFinite, "SVR solution is not finite");
  }

  BaselineParams p = make_params(design, BaselineKind::kSvr, best_w, best_b);
  p.hyperparams["C"] = C;
  p.hyperparams["epsilon"] = eps;
  p.hyperparams["lambda"] = lambda;
  p.hyperparams["censored_weighted"] = mode == CensoredMode::kWeighted ? 1.0 : 0.0;
  return p;
}

double svr_objective(const BaselineParams& params, const DesignSet& design,
                     const SvrOptions& options, double lambda, CensoredMode mode) {
  const WeightedSet set = gather(design, lambda, mode);
  if (params.w_vec.size() != design.dim()) {
    fail(Errc::kDimensionMismatch, "weight length differs from the design");
  }
  return svr_value(set, params.w_vec, params.b, options.C, options.epsilon, 0.0);
}

double ols_objective(const BaselineParams& params, const DesignSet& design, double lambda,
                     CensoredMode mode) {
  const WeightedSet set = gather(design, lambda, mode);
  if (params.w_vec.size() != design.dim()) {
    fail(Errc::kDimensionMismatch, "weight length differs from the design");
  }
  const Vector r = (set.X.transpose() * params.w_vec).array() + params.b - set.y.array();
  return 0.5 * (set.weight.array() * r.array().square()).sum();
}

double predict(const BaselineParams& params, const WindowSample& sample) {
  return predict(params.as_model(), sample);
}

}  // namespace onset
