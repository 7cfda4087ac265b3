#include <nci/baselines.hpp>
#include <nci/model.hpp>

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace nci;

namespace {

GenConfig tiny_gen() {
  GenConfig g;
  g.dim = 3;
  g.pairs = 20;
  return g;
}

Architecture tiny_arch() {
  Architecture a;
  a.dim = 3;
  a.hidden = 4;
  a.shared_width = 5;
  a.sup_width = 6;
  a.z_dim = 4;
  a.cls_width = 5;
  return a;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 8;
  t.samples_per_epoch = 32;
  t.validation_size = 16;
  t.seed = 4;
  return t;
}

}  // namespace

TEST_SUITE("ncinet") {
  TEST_CASE("forward shapes and the ridge features") {
    const auto p = NCINetParams::init(tiny_arch(), 1);
    const auto s = generate_stream_sample(tiny_gen(), 2, 0);
    const auto f = forward(p, s, 1e-3);
    CHECK(f.logits.rows() == 1);
    CHECK(f.logits.cols() == 3);
    CHECK(f.z.cols() == 4);
    const Matrix zx = p.shared.forward(Tensor::constant(s.x)).value();
    CHECK(f.mse_xy.item() == doctest::Approx(ridge_mse_value(zx, s.y, 1e-3)).epsilon(1e-12));
    CHECK(f.fusion.value()(0, 2) <= 1.0);
  }

  TEST_CASE("batched and per-sample forward agree") {
    const auto p = NCINetParams::init(tiny_arch(), 1);
    const auto batch = generate_epoch(tiny_gen(), 3, 5);
    const auto bf = forward_batch(p, batch, 1e-3);
    double reg = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto f = forward(p, batch[i], 1e-3);
      CHECK((bf.logits.value().row(static_cast<Index>(i)) - f.logits.value()).cwiseAbs().maxCoeff() < 1e-10);
      reg += f.mse_xy.item() + f.mse_yx.item();
    }
    CHECK(bf.regression.item() == doctest::Approx(reg / 5.0));
  }

  TEST_CASE("total loss composes its terms") {
    const auto p = NCINetParams::init(tiny_arch(), 1);
    const auto batch = generate_epoch(tiny_gen(), 3, 6);
    auto cfg = tiny_train();
    cfg.lambda_adv = 2.0;
    const auto l = losses(p, batch, cfg);
    CHECK(l.total.item() ==
          doctest::Approx(l.classification.item() + l.regression.item() + 2.0 * l.adversarial.item()));
    CHECK(l.adversarial.item() <= 0.0);
    CHECK_THROWS_AS(losses(p, std::span(batch).first(1), cfg), UsageError);
  }

  TEST_CASE("parameter gradients match central differences") {
    const auto p = NCINetParams::init(tiny_arch(), 7);
    const auto batch = generate_epoch(tiny_gen(), 8, 4);
    const auto cfg = tiny_train();
    {
      Tape tape;
      TapeScope scope(tape);
      tape.backward(losses(p, batch, cfg).total);
    }
    const auto params = p.parameters();
    Rng pick(9);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      auto t = params[static_cast<std::size_t>(pick.integer(0, static_cast<long>(params.size()) - 1))];
      const Index k = pick.integer(0, static_cast<long>(t.value().size()) - 1);
      const double analytic = t.grad().data()[k];
      const double keep = t.value().data()[k];
      const double eps = 1e-6;
      t.mutable_value().data()[k] = keep + eps;
      const double up = losses(p, batch, cfg).total.item();
      t.mutable_value().data()[k] = keep - eps;
      const double down = losses(p, batch, cfg).total.item();
      t.mutable_value().data()[k] = keep;
      const double numeric = (up - down) / (2 * eps);
      worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)));
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("argmax breaks ties toward the smaller label") {
    RowVector l(3);
    l << 0.5, 0.5, 0.1;
    CHECK(argmax_label(l) == 0);
    l << 0.1, 0.7, 0.7;
    CHECK(argmax_label(l) == 1);
  }

  TEST_CASE("training is deterministic and skips the excluded class") {
    const auto a = train(tiny_gen(), tiny_train(), FunctionClass::Bilinear);
    const auto b = train(tiny_gen(), tiny_train(), FunctionClass::Bilinear);
    CHECK(a.history.size() == 2);
    CHECK(a.class_counts[static_cast<std::size_t>(FunctionClass::Bilinear)] == 0);
    const auto pa = a.params.parameters();
    const auto pb = b.params.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].value() == pb[i].value());
  }

  TEST_CASE("checkpoint round trip") {
    const auto p = NCINetParams::init(tiny_arch(), 3);
    const auto path = std::filesystem::temp_directory_path() / "nci_test.ckpt";
    save_checkpoint(path, p, tiny_train());
    const auto c = load_checkpoint(path);
    const auto a = p.parameters();
    const auto b = c.params.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].value() == b[i].value());
    CHECK(c.train.epochs == 2);
    std::filesystem::remove(path);
  }

  TEST_CASE("dimension mismatch is reported") {
    const auto p = NCINetParams::init(tiny_arch(), 3);
    auto g = tiny_gen();
    g.dim = 4;
    CHECK_THROWS_AS(forward(p, generate_stream_sample(g, 1, 0), 1e-3), DimensionError);
  }
}

TEST_SUITE("baselines") {
  TEST_CASE("hsic matches the trace form") {
    Rng rng(1);
    Matrix a(30, 2), b(30, 3);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    for (Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
    const Matrix k = rbf_kernel(a, median_pairwise_distance(a));
    const Matrix l = rbf_kernel(b, median_pairwise_distance(b));
    const Matrix h = Matrix::Identity(30, 30) - Matrix::Constant(30, 30, 1.0 / 30);
    CHECK(hsic(a, b) == doctest::Approx((k * h * l * h).trace() / 900.0).epsilon(1e-12));
  }

  TEST_CASE("hsic separates dependence from independence") {
    Rng rng(2);
    Matrix a(200, 2), b(200, 2);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    for (Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
    const Matrix dep = a.array().square().matrix();
    CHECK(hsic(a, dep) > 3 * hsic(a, b));
  }

  TEST_CASE("scores are antisymmetric under swapping") {
    GenConfig g;
    g.dim = 3;
    g.pairs = 60;
    for (const auto& s : generate_epoch(g, 5, 6)) {
      const Sample t = s.swapped();
      CHECK(reci_score(s) == doctest::Approx(-reci_score(t)));
      CHECK(anm_score(s) == doctest::Approx(-anm_score(t)));
      CHECK(bfit_score(s) == doctest::Approx(-bfit_score(t)));
    }
  }

  TEST_CASE("threshold classification") {
    CHECK(classify_score(0.3, 0.5) == 0);
    CHECK(classify_score(0.7, 0.5) == 1);
    CHECK(classify_score(-0.7, 0.5) == 2);
    const std::vector<double> s{-3.0, -2.0, -0.1, 0.05, 0.2, 2.5, 4.0};
    const std::vector<int> l{2, 2, 0, 0, 0, 1, 1};
    const double tau = calibrate_threshold(s, l);
    CHECK(threshold_accuracy(s, l, tau) == 1.0);
    CHECK(threshold_accuracy(s, l, tau) >= threshold_accuracy(s, l, 0.0));
    CHECK_THROWS_AS(calibrate_threshold(s, std::vector<int>{1, 1, 1, 1, 1, 1, 2}), UsageError);
  }

  TEST_CASE("calibration never loses to tau zero") {
    GenConfig g;
    g.dim = 3;
    g.pairs = 40;
    const auto val = generate_epoch(g, 6, 60);
    std::vector<int> labels;
    for (const auto& s : val) labels.push_back(s.label);
    for (auto m : {ScoreMethod::ANM, ScoreMethod::BFit, ScoreMethod::RECI}) {
      std::vector<double> sc;
      for (const auto& s : val) sc.push_back(score(m, s));
      const double tau = calibrate_threshold(sc, labels);
      CHECK(threshold_accuracy(sc, labels, tau) >= threshold_accuracy(sc, labels, 0.0));
    }
  }

  TEST_CASE("NCC trains deterministically") {
    NCCTrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.samples_per_epoch = 16;
    cfg.seed = 2;
    const auto a = ncc_train(tiny_gen(), cfg);
    const auto b = ncc_train(tiny_gen(), cfg);
    const auto set = generate_epoch(tiny_gen(), 3, 10);
    CHECK(ncc_predict_labels(a.params, set) == ncc_predict_labels(b.params, set));
    CHECK(ncc_logits(a.params, set).rows() == 10);
  }
}
