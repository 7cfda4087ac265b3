#include <nci/diff.hpp>
#include <nci/rng.hpp>

#include "support/grad_cases.hpp"

#include <doctest.h>

#include <cmath>

using namespace nci;

using gradcases::randn;
using gradcases::spd;
using gradcases::weigh;

namespace {

// Central differences written independently of the library's checker.
Matrix numeric_grad(const std::function<double(const Matrix&)>& f, Matrix x, double eps = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + eps;
    const double up = f(x);
    x.data()[i] = keep - eps;
    const double down = f(x);
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2 * eps);
  }
  return g;
}

}  // namespace

TEST_SUITE("diff") {
  TEST_CASE("values without a tape record nothing") {
    Tape tape;
    const Tensor a = Tensor::parameter(Matrix::Ones(2, 2));
    const Tensor b = matmul(a, a);
    CHECK(tape.size() == 0);
    CHECK(b.value()(0, 0) == doctest::Approx(2.0));
    {
      TapeScope scope(tape);
      (void)matmul(a, a);
      (void)matmul(Tensor::constant(Matrix::Ones(2, 2)), Tensor::constant(Matrix::Ones(2, 2)));
    }
    CHECK(tape.size() == 1);
    CHECK(active_tape() == nullptr);
  }

  TEST_CASE("leaf gradients accumulate across backward calls") {
    const Tensor a = Tensor::parameter(Matrix::Constant(1, 1, 3.0));
    for (int i = 0; i < 2; ++i) {
      Tape tape;
      TapeScope scope(tape);
      tape.backward(mul(a, a));
    }
    CHECK(a.grad()(0, 0) == doctest::Approx(12.0));
  }

  TEST_CASE("shared subexpressions sum their contributions") {
    const Tensor a = Tensor::parameter(Matrix::Constant(1, 1, 2.0));
    Tape tape;
    TapeScope scope(tape);
    const Tensor b = scale(a, 3.0);
    tape.backward(add(mul(b, b), b));  // 9a^2 + 3a
    CHECK(a.grad()(0, 0) == doctest::Approx(39.0));
  }

  TEST_CASE("shape errors name the offending shapes") {
    const Tensor a = Tensor::constant(Matrix::Zero(2, 3));
    CHECK_THROWS_AS(matmul(a, a), DimensionError);
    CHECK_THROWS_AS(add(a, Tensor::constant(Matrix::Zero(3, 2))), DimensionError);
    CHECK_THROWS_AS(row_mean_pool(a, 3), DimensionError);
    CHECK_THROWS_AS(slice_rows(a, 1, 2), DimensionError);
    try {
      (void)matmul(a, a);
    } catch (const DimensionError& e) {
      CHECK(std::string(e.what()).find("2x3") != std::string::npos);
    }
  }

  TEST_CASE("spd_solve rejects indefinite and asymmetric systems") {
    Matrix a(2, 2);
    a << 1, 2, 2, 1;
    CHECK_THROWS_AS(spd_solve(Tensor::constant(a), Tensor::constant(Matrix::Ones(2, 1))), NotPositiveDefiniteError);
    a << 2, 1, 0, 2;
    CHECK_THROWS_AS(spd_solve(Tensor::constant(a), Tensor::constant(Matrix::Ones(2, 1))), NumericError);
  }

  TEST_CASE("non-finite inputs raise NumericError") {
    Matrix a = Matrix::Ones(2, 2);
    a(0, 1) = std::nan("");
    CHECK_THROWS_AS(tanh(Tensor::constant(a)), NumericError);
  }

  TEST_CASE("softmax cross entropy matches a hand computation") {
    Matrix logits(2, 3);
    logits << 1, 2, 3, 0, 0, 0;
    const std::vector<int> labels{2, 0};
    const double row0 = -std::log(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
    const double row1 = std::log(3.0);
    CHECK(softmax_cross_entropy(Tensor::constant(logits), labels).item() == doctest::Approx((row0 + row1) / 2));
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor::constant(logits), std::vector<int>{3, 0}), DimensionError);
  }

  TEST_CASE("fusion ratio is symmetric and bounded") {
    const auto f = fusion(Tensor::scalar(2.0), Tensor::scalar(4.0)).value();
    CHECK(f(0, 2) == doctest::Approx(0.5));
    CHECK(fusion(Tensor::scalar(0.0), Tensor::scalar(0.0)).value()(0, 2) == doctest::Approx(1.0));
  }

  TEST_CASE("catalog names round-trip") {
    for (int p = 0; p <= static_cast<int>(Primitive::Fusion); ++p) {
      const auto prim = static_cast<Primitive>(p);
      CHECK(primitive_from_name(primitive_name(prim)) == prim);
    }
    CHECK_THROWS_AS(primitive_from_name("conv2d"), UsageError);
  }

  TEST_CASE("matmul gradient matches independent central differences") {
    Rng rng(11);
    const Matrix a = randn(3, 4, rng);
    const Matrix b = randn(4, 2, rng);
    const Tensor ta = Tensor::parameter(a);
    Tape tape;
    {
      TapeScope scope(tape);
      tape.backward(weigh(matmul(ta, Tensor::constant(b)), 5));
    }
    const Matrix numeric = numeric_grad(
        [&](const Matrix& x) { return weigh(matmul(Tensor::constant(x), Tensor::constant(b)), 5).item(); }, a);
    CHECK((ta.grad() - numeric).cwiseAbs().maxCoeff() < 1e-7);
  }

  TEST_CASE("spd_solve gradient matches independent central differences") {
    Rng rng(12);
    const Matrix a = spd(4, rng);
    const Matrix b = randn(4, 3, rng);
    const Tensor ta = Tensor::parameter(a);
    Tape tape;
    {
      TapeScope scope(tape);
      // Symmetrize inside so that perturbing one entry keeps the system SPD.
      tape.backward(weigh(spd_solve(scale(add(ta, transpose(ta)), 0.5), Tensor::constant(b)), 6));
    }
    const Matrix numeric = numeric_grad(
        [&](const Matrix& x) {
          const Matrix s = 0.5 * (x + x.transpose());
          return weigh(Tensor::constant(Matrix(s.llt().solve(b))), 6).item();
        },
        a);
    CHECK((ta.grad() - numeric).cwiseAbs().maxCoeff() < 1e-6);
  }

  TEST_CASE("grad_check over every primitive") {
    for (const auto& c : gradcases::primitive_cases()) {
      CAPTURE(c.name);
      CHECK(gradcases::worst_error(c, gradcases::kInstances) <= gradcases::kTolerance);
    }
  }

  TEST_CASE("apply_primitive dispatches by name") {
    Rng rng(3);
    const std::vector<Tensor> in{Tensor::constant(randn(2, 2, rng))};
    Attributes attrs;
    attrs.scalar = 2.0;
    CHECK(apply_primitive(Primitive::Scale, in, attrs).value().isApprox(2.0 * in[0].value()));
    CHECK_THROWS_AS(apply_primitive(Primitive::MatMul, in), UsageError);
  }
}
