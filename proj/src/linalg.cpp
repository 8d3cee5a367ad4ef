#include "onset/linalg.hpp"

#include <algorithm>

namespace onset::linalg {

Svd thin_svd(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

Matrix truncate(const Svd& svd, int r) {
  const Eigen::Index k = std::min<Eigen::Index>(r, svd.sigma.size());
  if (k <= 0) return Matrix::Zero(svd.U.rows(), svd.V.rows());
  return svd.U.leftCols(k) * svd.sigma.head(k).asDiagonal() * svd.V.leftCols(k).transpose();
}

int numerical_rank(const Matrix& m, double rel_tol) {
  if (m.size() == 0) return 0;
  const Vector sigma = Eigen::JacobiSVD<Matrix>(m).singularValues();
  if (sigma.size() == 0 || sigma(0) == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > rel_tol * sigma(0)) ++rank;
  }
  return rank;
}

double tail_ratio(const Matrix& m, int r) {
  if (m.size() == 0) return 0.0;
  const Vector sigma = Eigen::JacobiSVD<Matrix>(m).singularValues();
  if (r >= sigma.size() || sigma(0) == 0.0) return 0.0;
  return sigma(r) / sigma(0);
}

}  // namespace onset::linalg
