#include "onset/regression.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "onset/linalg.hpp"

namespace onset {
namespace {

void check_params(const ModelParams& params, const DesignSet& design) {
  if (params.T() != design.T || params.P() != design.P) {
    fail(Errc::kDimensionMismatch,
         fmt::format("weights are {}x{} but the design is {}x{}", params.T(), params.P(),
                     design.T, design.P));
  }
}

LossEval evaluate(const DesignSet& design, const Vector& w, double b, double lambda,
                  bool with_gradient) {
  return kernels::censored_loss(design.X_complete, design.y_complete, design.X_censored,
                                design.y_censored, w, b, lambda, with_gradient);
}

// Solver state: w = A v (A = I without preconditioning), b = scale * c - mu' w.
struct Coordinates {
  const Matrix* A = nullptr;
  Vector mu;
  double scale = 1.0;

  Vector weights(const Vector& v) const { return A ? Vector(*A * v) : v; }
  double intercept(const Vector& w, double c) const { return scale * c - mu.dot(w); }
};

}  // namespace

double objective(const ModelParams& params, const DesignSet& design) {
  check_params(params, design);
  return evaluate(design, vectorize(params.w), params.b, params.lambda, false).value;
}

Gradient gradient(const ModelParams& params, const DesignSet& design) {
  check_params(params, design);
  LossEval eval = evaluate(design, vectorize(params.w), params.b, params.lambda, true);
  return {std::move(eval.grad_w), eval.grad_b};
}

Preconditioner build_preconditioner(const Matrix& X_complete, const RidgePolicy& policy) {
  if (X_complete.rows() == 0 || X_complete.cols() == 0) {
    fail(Errc::kEmptyDesign, "preconditioner needs at least one complete sample");
  }
  const auto dim = static_cast<double>(X_complete.rows());
  const Matrix G = X_complete * X_complete.transpose();
  const double scale = G.trace() / dim;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(G);
  if (eig.info() != Eigen::Success) fail(Errc::kNonFinite, "eigendecomposition failed");
  const Vector& values = eig.eigenvalues();

  Preconditioner pre;
  pre.rank_deficient = !(values.minCoeff() > policy.rank_tol * values.maxCoeff());
  pre.ridge = (pre.rank_deficient ? policy.deficient_relative : policy.relative) * scale;
  if (!(pre.ridge > 0.0)) pre.ridge = 1.0;  // all-zero design
  const Vector inv_sqrt = (values.array().max(0.0) + pre.ridge).rsqrt();
  pre.A = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
  return pre;
}

Matrix project_rank(const Matrix& w_hat, int r) {
  if (r < 1) fail(Errc::kInvalidArgument, "rank must be >= 1");
  return linalg::truncate(linalg::thin_svd(w_hat), r);
}

std::string_view step_policy_name(StepPolicy policy) {
  return policy == StepPolicy::kBacktracking ? "backtracking" : "fixed";
}

StepPolicy parse_step_policy(std::string_view name) {
  if (name == "backtracking") return StepPolicy::kBacktracking;
  if (name == "fixed") return StepPolicy::kFixed;
  fail(Errc::kInvalidArgument, fmt::format("unknown step policy '{}'", name));
}

FitResult fit_pgd(const DesignSet& design, double lambda, int r, const PgdOptions& options) {
  if (r < 1) fail(Errc::kInvalidArgument, "rank must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    fail(Errc::kInvalidArgument, "lambda must be finite and >= 0");
  }
  if (!(options.eta > 0.0) || options.max_iter < 1 || options.max_halvings < 0) {
    fail(Errc::kInvalidArgument, "step size must be > 0 and max_iter >= 1");
  }
  const Eigen::Index n_c = design.n_complete();
  const Eigen::Index n_n = design.n_censored();
  if (design.dim() == 0 || n_c + n_n == 0) fail(Errc::kEmptyDesign, "design has no samples");
  if (options.precondition && n_c == 0) {
    fail(Errc::kEmptyDesign, "preconditioning needs at least one complete sample");
  }
  const int T = design.T;
  const int P = design.P;
  const Eigen::Index dim = design.dim();

  Coordinates coords;
  coords.mu = Vector::Zero(dim);
  if (options.center) {
    coords.mu = n_c > 0 ? Vector(design.X_complete.rowwise().mean())
                        : Vector(design.X_censored.rowwise().mean());
  }

  SolveReport report;
  Preconditioner pre;
  if (options.precondition) {
    const Matrix centred = design.X_complete.colwise() - coords.mu;
    pre = build_preconditioner(centred, options.ridge);
    coords.A = &pre.A;
    // The intercept block of the centred Gram is n_c, so scale it the same way.
    coords.scale = 1.0 / std::sqrt(static_cast<double>(n_c));
    report.preconditioned = true;
    report.ridge = pre.ridge;
  }

  double c0 = 0.0;
  if (n_c > 0) {
    c0 = design.y_complete.mean();
  } else if (n_n > 0) {
    c0 = design.y_censored.mean();
  }
  Vector v = Vector::Zero(dim);
  double c = c0 / coords.scale;

  auto loss_at = [&](const Vector& vv, double cc, bool with_gradient) {
    const Vector w = coords.weights(vv);
    return evaluate(design, w, coords.intercept(w, cc), lambda, with_gradient);
  };

  LossEval current = loss_at(v, c, true);
  if (!std::isfinite(current.value)) fail(Errc::kNonFinite, "objective is not finite at start");
  report.objective_trace.push_back(current.value);

  const int r_eff = std::min({r, T, P});
  double eta = options.eta;
  for (int it = 0; it < options.max_iter; ++it) {
    // Chain rule through w = A v and b = scale * c - mu' w.
    const Vector g_mix = current.grad_w - coords.mu * current.grad_b;
    const Vector grad_v = coords.A ? Vector(*coords.A * g_mix) : g_mix;
    const double grad_c = coords.scale * current.grad_b;

    auto step = [&](double size, Vector& v_out, double& c_out) {
      const Matrix moved = reshape(v - size * grad_v, T, P);
      v_out = vectorize(project_rank(moved, r_eff));
      c_out = c - size * grad_c;
    };

    Vector v_next;
    double c_next = 0.0;
    LossEval next;
    bool accepted = false;
    if (options.step_policy == StepPolicy::kFixed) {
      step(eta, v_next, c_next);
      next = loss_at(v_next, c_next, true);
      if (!std::isfinite(next.value)) {
        fail(Errc::kNonFinite,
             fmt::format("objective diverged at iteration {} with step {}", it + 1, eta));
      }
      accepted = true;
    } else {
      double trial = 2.0 * eta;
      if (it == 0) trial = options.eta;
      for (int h = 0; h <= options.max_halvings; ++h, trial *= 0.5) {
        step(trial, v_next, c_next);
        next = loss_at(v_next, c_next, true);
        if (std::isfinite(next.value) && next.value <= current.value) {
          accepted = true;
          eta = trial;
          break;
        }
      }
    }
    if (!accepted) {
      // No step within the halving budget decreases the objective.
      report.converged = true;
      break;
    }

    const double decrease = (current.value - next.value) / std::max(std::abs(current.value), 1.0);
    v = std::move(v_next);
    c = c_next;
    current = std::move(next);
    report.objective_trace.push_back(current.value);
    report.step_sizes.push_back(eta);
    report.iterations = it + 1;
    if (options.track_rank) {
      report.max_tail_ratio =
          std::max(report.max_tail_ratio, linalg::tail_ratio(reshape(v, T, P), r_eff));
    }
    // A fixed step may raise the objective; that is not convergence.
    if (decrease >= 0.0 && decrease < options.tol) {
      report.converged = true;
      break;
    }
  }

  FitResult result;
  const Vector w = coords.weights(v);
  result.params.w = reshape(w, T, P);
  result.params.b = coords.intercept(w, c);
  result.params.rank = r;
  result.params.lambda = lambda;
  report.rank_w = linalg::numerical_rank(result.params.w);
  if (report.rank_w <= r) result.params.factors = factorize(result.params);
  result.report = std::move(report);
  return result;
}

double predict(const ModelParams& params, const WindowSample& sample) {
  if (sample.T() != params.T() || sample.P() != params.P()) {
    fail(Errc::kDimensionMismatch,
         fmt::format("sample is {}x{} but the model is {}x{}", sample.T(), sample.P(), params.T(),
                     params.P()));
  }
  if (!sample.fully_observed()) {
    fail(Errc::kUnimputedSample,
         fmt::format("window of subject '{}' has missing entries", sample.subject_id));
  }
  return vectorize(sample.x).dot(vectorize(params.w)) + params.b;
}

Vector predict_design(const ModelParams& params, const Matrix& X) {
  Vector out;
  kernels::predict_columns(X, vectorize(params.w), params.b, out);
  return out;
}

Factors factorize(const ModelParams& params) {
  const int T = params.T();
  const int P = params.P();
  const int r = params.rank > 0 ? params.rank : std::min(T, P);
  Factors f{Matrix::Zero(T, r), Matrix::Zero(P, r)};
  const linalg::Svd svd = linalg::thin_svd(params.w);
  const Eigen::Index k = std::min<Eigen::Index>(r, svd.sigma.size());
  for (Eigen::Index i = 0; i < k; ++i) {
    if (svd.sigma(i) == 0.0) break;
    f.u.col(i) = svd.U.col(i) * svd.sigma(i);
    f.v.col(i) = svd.V.col(i);
  }
  return f;
}

}  // namespace onset
