#pragma once

// Closed-form ridge and kernel ridge regression, in two flavours: Tensor
// versions that record on the tape, and plain Eigen versions for scoring.

#include <nci/diff.hpp>
#include <nci/linalg.hpp>

#include <optional>

namespace nci {

struct RidgeConfig {
  double lambda = 1e-3;
  void validate() const {
    if (!(lambda > 0.0)) throw ConfigError("RidgeConfig: lambda must be > 0");
  }
};

struct KernelConfig {
  double beta = 1e-3;
  /// Fixed RBF bandwidth; the median pairwise distance of the batch when empty.
  std::optional<double> bandwidth;
  void validate() const {
    if (!(beta > 0.0)) throw ConfigError("KernelConfig: beta must be > 0");
    if (bandwidth && !(*bandwidth > 0.0)) throw ConfigError("KernelConfig: bandwidth must be > 0");
  }
};

struct RidgeFit {
  Tensor prediction;  // m x q
  Tensor weights;     // p x q
};

/// W = (Z^T Z + lambda I)^{-1} Z^T T, prediction Z W.
RidgeFit ridge_fit_predict(const Tensor& z, const Tensor& t, double lambda);

/// (1/m) sum_j |T_j - prediction_j|^2 as a 1x1 tensor.
Tensor ridge_mse(const Tensor& z, const Tensor& t, double lambda);

double kernel_bandwidth(const Matrix& z, const KernelConfig& cfg);

/// K (K + beta I)^{-1} T with K = rbf_gram(Zb); the bandwidth is not
/// differentiated.
Tensor kernel_ridge_predict(const Tensor& zb, const Tensor& t, const KernelConfig& cfg);

/// [a, b, min/max] as a 1x3 tensor.
Tensor fusion_features(const Tensor& mse_xy, const Tensor& mse_yx);
RowVector fusion_features(double mse_xy, double mse_yx);

// --- plain Eigen versions ---------------------------------------------------------

template <typename DZ, typename DT>
Matrix ridge_weights(const Eigen::MatrixBase<DZ>& z, const Eigen::MatrixBase<DT>& t, double lambda) {
  if (z.rows() != t.rows()) throw DimensionError("ridge_weights: row mismatch " + shape_str(z.rows(), z.cols()) +
                                                 " vs " + shape_str(t.rows(), t.cols()));
  if (z.rows() < 2) throw DimensionError("ridge_weights: need at least two rows");
  Matrix gram = z.transpose() * z;
  gram.diagonal().array() += lambda;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) throw NotPositiveDefiniteError("ridge_weights: Cholesky failed");
  return llt.solve(z.transpose() * t);
}

template <typename DZ, typename DT>
Matrix ridge_predict(const Eigen::MatrixBase<DZ>& z, const Eigen::MatrixBase<DT>& t, double lambda) {
  return z * ridge_weights(z, t, lambda);
}

template <typename DZ, typename DT>
double ridge_mse_value(const Eigen::MatrixBase<DZ>& z, const Eigen::MatrixBase<DT>& t, double lambda) {
  return (t - ridge_predict(z, t, lambda)).squaredNorm() / static_cast<double>(z.rows());
}

template <typename DZ, typename DT>
Matrix kernel_ridge_predict_dense(const Eigen::MatrixBase<DZ>& z, const Eigen::MatrixBase<DT>& t, double beta,
                                  double bandwidth) {
  const Matrix k = rbf_kernel(z, bandwidth);
  Matrix reg = k;
  reg.diagonal().array() += beta;
  Eigen::LLT<Matrix> llt(reg);
  if (llt.info() != Eigen::Success) throw NotPositiveDefiniteError("kernel_ridge_predict_dense: Cholesky failed");
  return k * llt.solve(Matrix(t));
}

}  // namespace nci
