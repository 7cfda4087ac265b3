#include <nci/dataset_io.hpp>
#include <nci/linalg.hpp>
#include <nci/regress.hpp>
#include <nci/synth.hpp>

#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

using namespace nci;

namespace {

bool standardized(const Matrix& m) {
  const RowVector mean = m.colwise().mean();
  const RowVector var = (m.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(m.rows());
  return mean.cwiseAbs().maxCoeff() < 1e-9 && (var.array() - 1.0).abs().maxCoeff() < 1e-9;
}

GenConfig small(Index d = 4, Index m = 50) {
  GenConfig cfg;
  cfg.dim = d;
  cfg.pairs = m;
  return cfg;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("every graph and class yields standardized finite samples") {
    const auto cfg = small();
    Rng rng(1);
    for (auto g : kAllGraphs) {
      for (auto f : kAllFunctionClasses) {
        CAPTURE(graph_name(g));
        CAPTURE(function_name(f));
        const Sample s = generate_sample(g, f, cfg, rng);
        CHECK(s.x.rows() == 50);
        CHECK(s.x.cols() == 4);
        CHECK(s.y.rows() == 50);
        CHECK(all_finite(s.x));
        CHECK(all_finite(s.y));
        CHECK(standardized(s.x));
        CHECK(standardized(s.y));
        CHECK(s.label == causal_label(g));
        CHECK(s.noise_variance > 0.0);
        CHECK(s.noise_variance <= cfg.noise_max);
      }
    }
  }

  TEST_CASE("G1 linear replays from the documented draw order") {
    const auto cfg = small(3, 40);
    Rng rng(77);
    const Sample s = generate_sample(GraphKind::G1, FunctionClass::Linear, cfg, rng);

    Rng r(77);
    const double v = cfg.noise_max * (1.0 - r.uniform());
    const GmmSpec spec = GmmSpec::random_default(3, r);
    const Matrix w = standardize_columns(sample_gmm(spec, 40, r));
    const auto f1 = draw_causal_function(FunctionClass::Linear, w, 3, cfg, r);
    const Matrix x = add_noise_and_standardize(apply_causal_function(f1, w), v, r);
    const auto f2 = draw_causal_function(FunctionClass::Linear, x, 3, cfg, r);
    const Matrix y = add_noise_and_standardize(apply_causal_function(f2, x), v, r);
    CHECK(s.x == x);
    CHECK(s.y == y);
    CHECK(s.noise_variance == v);
  }

  TEST_CASE("linear effect is an affine image of its cause up to noise") {
    auto cfg = small(4, 500);
    Rng rng(5);
    const Sample s = generate_sample(GraphKind::G1, FunctionClass::Linear, cfg, rng);
    // Each standardized column keeps at most v / var(pre-noise column) of noise.
    CHECK(ridge_mse_value(s.x, s.y, 1e-8) / 4.0 < 0.1);
    CHECK(ridge_mse_value(s.x, s.y, 1e-8) < ridge_mse_value(s.x, Matrix(s.y.colwise().reverse()), 1e-8));
  }

  TEST_CASE("stream samples are reproducible and order independent") {
    const auto cfg = small();
    const auto a = generate_epoch(cfg, 123, 20);
    const auto b = generate_epoch(cfg, 123, 10, std::nullopt, 10);
    for (int i = 0; i < 10; ++i) {
      CHECK(a[static_cast<std::size_t>(10 + i)].x == b[static_cast<std::size_t>(i)].x);
      CHECK(a[static_cast<std::size_t>(10 + i)].y == b[static_cast<std::size_t>(i)].y);
    }
    CHECK(generate_stream_sample(cfg, 124, 0).x != a[0].x);
  }

  TEST_CASE("excluded classes never appear") {
    const auto cfg = small(3, 20);
    for (auto f : kAllFunctionClasses) {
      const auto set = generate_epoch(cfg, 9, 200, f);
      for (const auto& s : set) CHECK(s.func != f);
    }
  }

  TEST_CASE("graph frequencies are consistent with a uniform draw") {
    // 3000 draws, p = 1/6: mean 500, sd ~20.4; 5 sd is far outside chance.
    const auto cfg = small(2, 10);
    std::map<GraphKind, int> counts;
    for (std::uint64_t i = 0; i < 3000; ++i) {
      Rng rng(derive_seed(31, {i}));
      counts[kAllGraphs[static_cast<std::size_t>(rng.integer(0, 5))]]++;
    }
    for (auto g : kAllGraphs) CHECK(std::abs(counts[g] - 500) < 102);
    std::map<int, int> labels;
    for (const auto& s : generate_epoch(cfg, 31, 600)) labels[s.label]++;
    // Each label covers two graphs: mean 200, sd ~11.5.
    for (int l = 0; l < 3; ++l) CHECK(std::abs(labels[l] - 200) < 58);
  }

  TEST_CASE("swapping roles maps the labels") {
    Rng rng(2);
    const Sample s = generate_sample(GraphKind::G4, FunctionClass::Hadamard, small(), rng);
    const Sample t = s.swapped();
    CHECK(t.graph == GraphKind::G5);
    CHECK(t.label == 2);
    CHECK(t.x == s.y);
    CHECK(t.swapped().graph == GraphKind::G4);
  }

  TEST_CASE("spline interpolates its knots") {
    SplineParams::Spline sp;
    sp.knots = Vector::LinSpaced(5, -2.0, 2.0);
    sp.values = Vector::LinSpaced(5, 0.0, 4.0).array().square();
    sp.tangents = catmull_rom_tangents(sp.knots, sp.values);
    for (Index i = 0; i < 5; ++i) CHECK(sp.eval(sp.knots(i)) == doctest::Approx(sp.values(i)));
    // Linear data has exact Catmull-Rom tangents.
    const Vector lin = 3.0 * sp.knots;
    const Vector t = catmull_rom_tangents(sp.knots, lin);
    CHECK((t.array() - 3.0).abs().maxCoeff() < 1e-12);
  }

  TEST_CASE("configuration errors") {
    auto cfg = small();
    cfg.noise_max = 0.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small();
    cfg.dim = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    GmmSpec g;
    g.weights = Vector::Constant(2, 0.4);
    g.means = Matrix::Zero(2, 4);
    g.variances = Matrix::Ones(2, 4);
    CHECK_THROWS_AS(g.validate(), ConfigError);
    CHECK_THROWS_AS(function_from_name("quartic"), ConfigError);
    CHECK(function_from_name("cubic spline") == FunctionClass::CubicSpline);
    CHECK(graph_from_name("G6") == GraphKind::G6);
  }

  TEST_CASE("constant columns are degenerate") {
    Rng rng(3);
    CHECK_THROWS_AS(standardize_columns(Matrix::Ones(5, 2)), DegenerateColumnError);
    const Matrix out = add_noise_and_standardize(Matrix::Ones(20, 2), 0.01, rng);
    CHECK(standardized(out));
  }

  TEST_CASE("fixed GMM is honoured") {
    auto cfg = small(2, 400);
    GmmSpec g;
    g.weights = Vector::Ones(1);
    g.means = Matrix::Zero(1, 2);
    g.variances = Matrix::Ones(1, 2);
    cfg.gmm = g;
    CHECK_NOTHROW(cfg.validate());
    Rng rng(4);
    const Matrix w = sample_gmm(g, 4000, rng);
    CHECK(w.colwise().mean().cwiseAbs().maxCoeff() < 0.1);
  }
}

TEST_SUITE("dataset_io") {
  TEST_CASE("round trip through the container") {
    const auto set = generate_epoch(small(3, 12), 5, 7);
    std::stringstream buf;
    write_dataset(buf, set);
    const auto back = read_dataset(buf);
    REQUIRE(back.size() == set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
      CHECK(back[i].label == set[i].label);
      CHECK(back[i].graph == set[i].graph);
      CHECK(back[i].func == set[i].func);
      CHECK((back[i].x - set[i].x).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((back[i].y - set[i].y).cwiseAbs().maxCoeff() < 1e-6);
    }
  }

  TEST_CASE("header layout") {
    const auto set = generate_epoch(small(2, 3), 5, 1);
    std::stringstream buf;
    write_dataset(buf, set);
    const std::string bytes = buf.str();
    CHECK(bytes.substr(0, 8) == "NCIDATA1");
    const auto len = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[8])) |
                     static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[9])) << 8;
    CHECK(bytes.size() == 12 + len + 2 * 3 * 2 * 4);
  }

  TEST_CASE("corrupt input is rejected") {
    std::stringstream bad("NOTADATASET");
    CHECK_THROWS_AS(read_dataset(bad), IoError);
    const auto set = generate_epoch(small(2, 3), 5, 2);
    std::stringstream buf;
    write_dataset(buf, set);
    std::string bytes = buf.str();
    bytes.resize(bytes.size() - 5);
    std::stringstream truncated(bytes);
    CHECK_THROWS_AS(read_dataset(truncated), IoError);
  }
}
