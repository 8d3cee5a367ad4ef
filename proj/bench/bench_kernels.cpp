// Serial reference kernels against their OpenMP counterparts.

#include <random>

#include <benchmark/benchmark.h>

#include "onset/kernels.hpp"

using namespace onset;

namespace {

Matrix normal_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(r, c);
  for (auto& v : m.reshaped()) v = normal(rng);
  return m;
}

Mask random_mask(Eigen::Index r, Eigen::Index c, double hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution drop(hidden);
  Mask m(r, c);
  for (auto& v : m.reshaped()) v = !drop(rng);
  return m;
}

struct LossInputs {
  Matrix Xc, Xn;
  Vector yc, yn, w;

  explicit LossInputs(Eigen::Index n)
      : Xc(normal_matrix(50, n, 1)),
        Xn(normal_matrix(50, n / 2, 2)),
        yc(normal_matrix(n, 1, 3)),
        yn(normal_matrix(n / 2, 1, 4)),
        w(normal_matrix(50, 1, 5)) {}
};

template <bool Parallel>
void BM_CensoredLoss(benchmark::State& state) {
  const LossInputs in(state.range(0));
  for (auto _ : state) {
    LossEval e = Parallel
                     ? kernels::censored_loss(in.Xc, in.yc, in.Xn, in.yn, in.w, 0.1, 0.5, true)
                     : reference::censored_loss(in.Xc, in.yc, in.Xn, in.yn, in.w, 0.1, 0.5, true);
    benchmark::DoNotOptimize(e.value);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_KnnFill(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const Matrix X = normal_matrix(n, 10, 6);
  const Mask m = random_mask(n, 10, 0.1, 7);
  const Vector fallback = Vector::Zero(10);
  for (auto _ : state) {
    Matrix out = Parallel ? kernels::knn_fill(X, m, X, m, 5, fallback, true)
                          : reference::knn_fill(X, m, X, m, 5, fallback, true);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_ClampMissing(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const Matrix X = normal_matrix(n, 10, 8);
  const Matrix M = 3.0 * normal_matrix(n, 10, 9);
  const Mask m = random_mask(n, 10, 0.2, 10);
  const Vector lo = Vector::Constant(10, -1.0);
  const Vector hi = Vector::Constant(10, 1.0);
  for (auto _ : state) {
    Matrix Y = X;
    if (Parallel) {
      kernels::clamp_missing(Y, m, M, lo, hi);
    } else {
      reference::clamp_missing(Y, m, M, lo, hi);
    }
    benchmark::DoNotOptimize(Y.data());
  }
}

}  // namespace

BENCHMARK(BM_CensoredLoss<false>)->Name("censored_loss/reference")->Arg(1000)->Arg(20000);
BENCHMARK(BM_CensoredLoss<true>)->Name("censored_loss/openmp")->Arg(1000)->Arg(20000);
BENCHMARK(BM_KnnFill<false>)->Name("knn_fill/reference")->Arg(500)->Arg(2000);
BENCHMARK(BM_KnnFill<true>)->Name("knn_fill/openmp")->Arg(500)->Arg(2000);
BENCHMARK(BM_ClampMissing<false>)->Name("clamp_missing/reference")->Arg(10000);
BENCHMARK(BM_ClampMissing<true>)->Name("clamp_missing/openmp")->Arg(10000);

BENCHMARK_MAIN();
