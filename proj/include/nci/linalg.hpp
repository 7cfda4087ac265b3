#pragma once

// Dense helpers shared by the generator, regressors and baselines. All are
// free functions over Eigen expressions; none touch the tape.

#include <nci/common.hpp>

#include <algorithm>
#include <vector>

namespace nci {

/// Column-wise standardization with the population (1/m) variance.
/// Throws DegenerateColumnError if a column's std is below `min_std`.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> standardize_columns(
    const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar min_std = 1e-12) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (m.rows() < 2) throw DimensionError("standardize_columns: need at least two rows");
  Mat out = m.rowwise() - m.colwise().mean();
  for (Index j = 0; j < out.cols(); ++j) {
    const Scalar sd = std::sqrt(out.col(j).squaredNorm() / static_cast<Scalar>(out.rows()));
    if (!(sd > min_std)) throw DegenerateColumnError("standardize_columns: zero-variance column " + std::to_string(j));
    out.col(j) /= sd;
  }
  return out;
}

/// Like standardize_columns but leaves (near-)constant columns at zero.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> standardize_columns_lenient(
    const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out = m.rowwise() - m.colwise().mean();
  for (Index j = 0; j < out.cols(); ++j) {
    const Scalar sd = std::sqrt(out.col(j).squaredNorm() / static_cast<Scalar>(out.rows()));
    if (sd > Scalar(1e-12)) {
      out.col(j) /= sd;
    } else {
      out.col(j).setZero();
    }
  }
  return out;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> squared_distances(
    const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Vec sq = z.rowwise().squaredNorm();
  const Vec ones = Vec::Ones(z.rows());
  Mat d2 = sq * ones.transpose() + ones * sq.transpose() - Scalar(2) * z * z.transpose();
  d2 = d2.cwiseMax(Scalar(0));
  d2.diagonal().setZero();
  return d2;
}

/// Median of the pairwise Euclidean distances over i < j. Returns `fallback`
/// when the median is zero (e.g. all rows identical) or there are < 2 rows.
template <typename Derived>
typename Derived::Scalar median_pairwise_distance(const Eigen::MatrixBase<Derived>& z,
                                                  typename Derived::Scalar fallback = 1) {
  using Scalar = typename Derived::Scalar;
  const Index n = z.rows();
  if (n < 2) return fallback;
  const auto d2 = squared_distances(z);
  std::vector<Scalar> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index j = 1; j < n; ++j)
    for (Index i = 0; i < j; ++i) d.push_back(std::sqrt(d2(i, j)));
  // Lower median for even counts keeps the value an actual observed distance.
  auto mid = d.begin() + static_cast<std::ptrdiff_t>((d.size() - 1) / 2);
  std::nth_element(d.begin(), mid, d.end());
  const Scalar med = *mid;
  return med > Scalar(1e-12) ? med : fallback;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> rbf_kernel(
    const Eigen::MatrixBase<Derived>& z, typename Derived::Scalar bandwidth) {
  using Scalar = typename Derived::Scalar;
  return (-squared_distances(z).array() / (Scalar(2) * bandwidth * bandwidth)).exp().matrix();
}

/// Features [x, x_i x_j (i <= j)], each column standardized.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> quadratic_lift(
    const Eigen::MatrixBase<Derived>& x) {
  using Mat = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Index d = x.cols();
  Mat f(x.rows(), d + d * (d + 1) / 2);
  f.leftCols(d) = x;
  Index at = d;
  for (Index i = 0; i < d; ++i)
    for (Index j = i; j < d; ++j) f.col(at++) = x.col(i).cwiseProduct(x.col(j));
  return standardize_columns_lenient(f);
}

/// Features [x, x^2, x^3] per coordinate, each column standardized.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> separable_cubic_lift(
    const Eigen::MatrixBase<Derived>& x) {
  using Mat = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Index d = x.cols();
  Mat f(x.rows(), 3 * d);
  f.leftCols(d) = x;
  f.middleCols(d, d) = x.array().square().matrix();
  f.rightCols(d) = x.array().cube().matrix();
  return standardize_columns_lenient(f);
}

}  // namespace nci
