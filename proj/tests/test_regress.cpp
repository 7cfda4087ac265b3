#include <nci/optim.hpp>
#include <nci/regress.hpp>
#include <nci/rng.hpp>

#include "support/grad_cases.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace nci;

namespace {

Matrix randn(Index r, Index c, Rng& rng) {
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Brute-force median of all pairwise distances, lower median on ties.
double median_distance_oracle(const Matrix& z) {
  std::vector<double> d;
  for (Index i = 0; i < z.rows(); ++i)
    for (Index j = i + 1; j < z.rows(); ++j) d.push_back((z.row(i) - z.row(j)).norm());
  std::sort(d.begin(), d.end());
  return d[(d.size() - 1) / 2];
}

}  // namespace

TEST_SUITE("optim") {
  TEST_CASE("first AdamW step moves by lr against the gradient sign") {
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    std::vector<Matrix> params{Matrix::Ones(1, 1)};
    const std::vector<Matrix> grads{Matrix::Constant(1, 1, 0.37)};
    auto state = make_adamw_state(params, cfg);
    adamw_step(params, grads, state);
    CHECK(params[0](0, 0) == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(state.t == 1);
  }

  TEST_CASE("weight decay is decoupled from the moment estimates") {
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.5;
    std::vector<Matrix> params{Matrix::Constant(1, 1, 2.0)};
    const std::vector<Matrix> grads{Matrix::Zero(1, 1)};
    auto state = make_adamw_state(params, cfg);
    adamw_step(params, grads, state);
    // p <- p (1 - lr wd); a zero gradient adds nothing.
    CHECK(params[0](0, 0) == doctest::Approx(2.0 * (1 - 0.05)));
  }

  TEST_CASE("two hand-computed steps") {
    AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.1;
    std::vector<Matrix> params{Matrix::Constant(1, 1, 1.0)};
    auto state = make_adamw_state(params, cfg);
    double p = 1.0, m = 0.0, v = 0.0;
    const double gs[2] = {0.5, -2.0};
    for (int t = 1; t <= 2; ++t) {
      adamw_step(params, std::vector<Matrix>{Matrix::Constant(1, 1, gs[t - 1])}, state);
      p *= 1 - cfg.lr * cfg.weight_decay;
      m = 0.9 * m + 0.1 * gs[t - 1];
      v = 0.999 * v + 0.001 * gs[t - 1] * gs[t - 1];
      const double mh = m / (1 - std::pow(0.9, t));
      const double vh = v / (1 - std::pow(0.999, t));
      p -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
    CHECK(params[0](0, 0) == doctest::Approx(p).epsilon(1e-12));
  }

  TEST_CASE("AdamW minimizes a quadratic through the tape") {
    const Tensor w = Tensor::parameter(Matrix::Constant(1, 3, 4.0));
    AdamWConfig cfg;
    cfg.lr = 0.05;
    cfg.weight_decay = 0.0;
    AdamW opt({w}, cfg);
    for (int i = 0; i < 500; ++i) {
      opt.zero_grad();
      Tape tape;
      TapeScope scope(tape);
      tape.backward(frobenius_sq(sub(w, Tensor::constant(Matrix::Ones(1, 3)))));
      opt.step();
    }
    CHECK((w.value().array() - 1.0).abs().maxCoeff() < 1e-2);
  }
}

TEST_SUITE("regress") {
  TEST_CASE("ridge matches the normal equations") {
    Rng rng(1);
    const Matrix z = randn(40, 5, rng);
    const Matrix t = randn(40, 3, rng);
    const double lambda = 0.3;
    const Matrix w_oracle = (z.transpose() * z + lambda * Matrix::Identity(5, 5)).inverse() * z.transpose() * t;
    const auto fit = ridge_fit_predict(Tensor::constant(z), Tensor::constant(t), lambda);
    CHECK((fit.weights.value() - w_oracle).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((ridge_weights(z, t, lambda) - w_oracle).cwiseAbs().maxCoeff() < 1e-10);
    const double mse = (t - z * w_oracle).squaredNorm() / 40.0;
    CHECK(ridge_mse(Tensor::constant(z), Tensor::constant(t), lambda).item() == doctest::Approx(mse));
    CHECK(ridge_mse_value(z, t, lambda) == doctest::Approx(mse));
  }

  TEST_CASE("ridge on an exact linear map has near-zero error") {
    Rng rng(2);
    const Matrix z = randn(200, 4, rng);
    const Matrix a = randn(4, 4, rng);
    CHECK(ridge_mse_value(z, z * a, 1e-8) < 1e-10);
  }

  TEST_CASE("ridge shape errors") {
    CHECK_THROWS_AS(ridge_mse(Tensor::constant(Matrix::Zero(5, 2)), Tensor::constant(Matrix::Zero(4, 2)), 1e-3),
                    DimensionError);
  }

  TEST_CASE("kernel ridge matches the dense inverse to 1e-10") {
    Rng rng(3);
    for (int i = 0; i < 10; ++i) {
      const Matrix z = randn(30, 4, rng);
      const Matrix t = randn(30, 5, rng);
      const double bw = median_distance_oracle(z);
      Matrix k(30, 30);
      for (Index a = 0; a < 30; ++a)
        for (Index b = 0; b < 30; ++b) k(a, b) = std::exp(-(z.row(a) - z.row(b)).squaredNorm() / (2 * bw * bw));
      const Matrix oracle = k * (k + 1e-3 * Matrix::Identity(30, 30)).inverse() * t;
      KernelConfig cfg;
      const Matrix got = kernel_ridge_predict(Tensor::constant(z), Tensor::constant(t), cfg).value();
      CHECK((got - oracle).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((kernel_ridge_predict_dense(z, t, 1e-3, bw) - oracle).cwiseAbs().maxCoeff() < 1e-10);
    }
  }

  TEST_CASE("median heuristic bandwidth") {
    Rng rng(4);
    const Matrix z = randn(25, 3, rng);
    CHECK(kernel_bandwidth(z, KernelConfig{}) == doctest::Approx(median_distance_oracle(z)).epsilon(1e-12));
    KernelConfig fixed;
    fixed.bandwidth = 2.5;
    CHECK(kernel_bandwidth(z, fixed) == 2.5);
    CHECK(kernel_bandwidth(Matrix::Ones(6, 2), KernelConfig{}) == 1.0);
  }

  TEST_CASE("grad_check on the ridge and kernel ridge composites over 20 instances") {
    CHECK(gradcases::worst_error(gradcases::ridge_case(), 20) <= 1e-4);
    CHECK(gradcases::worst_error(gradcases::adversary_case(), 20) <= 1e-4);
  }

  TEST_CASE("fusion features") {
    const RowVector f = fusion_features(0.2, 0.8);
    CHECK(f(0) == 0.2);
    CHECK(f(1) == 0.8);
    CHECK(f(2) == doctest::Approx(0.25));
  }
}
