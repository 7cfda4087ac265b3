#include <nci/regress.hpp>

namespace nci {

RidgeFit ridge_fit_predict(const Tensor& z, const Tensor& t, double lambda) {
  if (z.rows() != t.rows()) {
    throw DimensionError("ridge_fit_predict: row mismatch " + shape_str(z.rows(), z.cols()) + " vs " +
                         shape_str(t.rows(), t.cols()));
  }
  if (z.rows() < 2) throw DimensionError("ridge_fit_predict: need at least two rows");
  if (!(lambda > 0.0)) throw UsageError("ridge_fit_predict: lambda must be > 0");
  const Tensor zt = transpose(z);
  const Tensor gram = add_diagonal(matmul(zt, z), lambda);
  RidgeFit fit;
  fit.weights = spd_solve(gram, matmul(zt, t));
  fit.prediction = matmul(z, fit.weights);
  return fit;
}

Tensor ridge_mse(const Tensor& z, const Tensor& t, double lambda) {
  const RidgeFit fit = ridge_fit_predict(z, t, lambda);
  return scale(frobenius_sq(sub(t, fit.prediction)), 1.0 / static_cast<double>(z.rows()));
}

double kernel_bandwidth(const Matrix& z, const KernelConfig& cfg) {
  return cfg.bandwidth ? *cfg.bandwidth : median_pairwise_distance(z, 1.0);
}

Tensor kernel_ridge_predict(const Tensor& zb, const Tensor& t, const KernelConfig& cfg) {
  if (zb.rows() != t.rows()) throw DimensionError("kernel_ridge_predict: row mismatch");
  if (zb.rows() < 2) throw UsageError("kernel_ridge_predict: need at least two rows");
  cfg.validate();
  const Tensor k = rbf_gram(zb, kernel_bandwidth(zb.value(), cfg));
  return matmul(k, spd_solve(add_diagonal(k, cfg.beta), t));
}

Tensor fusion_features(const Tensor& mse_xy, const Tensor& mse_yx) { return fusion(mse_xy, mse_yx); }

RowVector fusion_features(double mse_xy, double mse_yx) {
  if (mse_xy < 0.0 || mse_yx < 0.0) throw UsageError("fusion_features: negative input");
  RowVector f(3);
  const double hi = std::max(mse_xy, mse_yx);
  f << mse_xy, mse_yx, (hi <= 1e-12 ? 1.0 : std::min(mse_xy, mse_yx) / hi);
  return f;
}

}  // namespace nci
