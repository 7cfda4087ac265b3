#include <nci/linalg.hpp>
#include <nci/synth.hpp>

#include <algorithm>
#include <cctype>

namespace nci {

namespace {

constexpr std::array<std::string_view, 5> kFunctionNames{"Linear", "Hadamard", "Bilinear", "CubicSpline", "MlpFunc"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Matrix normal_matrix(Index r, Index c, Rng& rng) {
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

}  // namespace

std::string_view function_name(FunctionClass f) { return kFunctionNames[static_cast<std::size_t>(f)]; }

std::string_view graph_name(GraphKind g) {
  static constexpr std::array<std::string_view, 6> names{"G1", "G2", "G3", "G4", "G5", "G6"};
  return names[static_cast<std::size_t>(g) - 1];
}

FunctionClass function_from_name(std::string_view name) {
  const std::string n = lower(name);
  if (n == "linear") return FunctionClass::Linear;
  if (n == "hadamard") return FunctionClass::Hadamard;
  if (n == "bilinear") return FunctionClass::Bilinear;
  if (n == "cubicspline" || n == "cubic spline" || n == "spline") return FunctionClass::CubicSpline;
  if (n == "mlpfunc" || n == "mlp" || n == "nn") return FunctionClass::MlpFunc;
  throw ConfigError("unknown function class: " + std::string(name));
}

GraphKind graph_from_name(std::string_view name) {
  const std::string n = lower(name);
  for (auto g : kAllGraphs)
    if (lower(graph_name(g)) == n) return g;
  throw ConfigError("unknown graph: " + std::string(name));
}

Vector function_one_hot(FunctionClass f) {
  Vector v = Vector::Zero(kNumFunctionClasses);
  v(static_cast<Index>(f)) = 1.0;
  return v;
}

Sample Sample::swapped() const {
  Sample s = *this;
  std::swap(s.x, s.y);
  switch (graph) {
    case GraphKind::G1: s.graph = GraphKind::G2; break;
    case GraphKind::G2: s.graph = GraphKind::G1; break;
    case GraphKind::G4: s.graph = GraphKind::G5; break;
    case GraphKind::G5: s.graph = GraphKind::G4; break;
    default: break;
  }
  s.label = causal_label(s.graph);
  return s;
}

// --- GMM ------------------------------------------------------------------------

void GmmSpec::validate() const {
  if (weights.size() == 0) throw ConfigError("GmmSpec: no components");
  if (means.rows() != weights.size() || variances.rows() != weights.size() || variances.cols() != means.cols()) {
    throw ConfigError("GmmSpec: inconsistent shapes");
  }
  if ((weights.array() < 0.0).any()) throw ConfigError("GmmSpec: negative weight");
  if (std::abs(weights.sum() - 1.0) > 1e-12) throw ConfigError("GmmSpec: weights must sum to 1");
  if (!(variances.array() > 0.0).all()) throw ConfigError("GmmSpec: variances must be > 0");
}

GmmSpec GmmSpec::random_default(Index dim, Rng& rng) {
  constexpr Index k = 3;
  GmmSpec s;
  s.weights.resize(k);
  for (Index i = 0; i < k; ++i) s.weights(i) = -std::log(1.0 - rng.uniform());  // Gamma(1)
  s.weights /= s.weights.sum();
  s.means.resize(k, dim);
  s.variances.resize(k, dim);
  for (Index j = 0; j < dim; ++j)
    for (Index i = 0; i < k; ++i) s.means(i, j) = rng.normal(0.0, 2.0);
  for (Index j = 0; j < dim; ++j)
    for (Index i = 0; i < k; ++i) s.variances(i, j) = rng.uniform(0.5, 1.5);
  return s;
}

Matrix sample_gmm(const GmmSpec& spec, Index m, Rng& rng) {
  const Index d = spec.dim();
  Matrix out(m, d);
  for (Index r = 0; r < m; ++r) {
    const double u = rng.uniform();
    Index comp = spec.components() - 1;
    double cum = 0.0;
    for (Index k = 0; k < spec.components(); ++k) {
      cum += spec.weights(k);
      if (u < cum && spec.weights(k) > 0.0) {
        comp = k;
        break;
      }
    }
    while (spec.weights(comp) <= 0.0 && comp > 0) --comp;  // u rounding past the last live component
    for (Index j = 0; j < d; ++j) {
      out(r, j) = spec.means(comp, j) + std::sqrt(spec.variances(comp, j)) * rng.normal();
    }
  }
  return out;
}

void GenConfig::validate() const {
  if (dim < 2) throw ConfigError("GenConfig: dim must be >= 2");
  if (pairs < 2) throw ConfigError("GenConfig: pairs must be >= 2");
  if (!(noise_max > 0.0 && noise_max <= 0.1)) throw ConfigError("GenConfig: noise_max must lie in (0, 0.1]");
  if (knots_min < 2 || knots_max < knots_min) throw ConfigError("GenConfig: bad knot range");
  if (mlp_depth_min < 0 || mlp_depth_max < mlp_depth_min) throw ConfigError("GenConfig: bad MLP depth range");
  if (mlp_width_min < 1 || mlp_width_max < mlp_width_min) throw ConfigError("GenConfig: bad MLP width range");
  if (gmm) {
    gmm->validate();
    if (gmm->dim() != dim) throw ConfigError("GenConfig: GMM dimension differs from dim");
  }
}

// --- causal functions -----------------------------------------------------------

Vector catmull_rom_tangents(const Vector& knots, const Vector& values) {
  const Index k = knots.size();
  Vector t(k);
  if (k == 1) {
    t(0) = 0.0;
    return t;
  }
  t(0) = (values(1) - values(0)) / (knots(1) - knots(0));
  t(k - 1) = (values(k - 1) - values(k - 2)) / (knots(k - 1) - knots(k - 2));
  for (Index i = 1; i + 1 < k; ++i) t(i) = (values(i + 1) - values(i - 1)) / (knots(i + 1) - knots(i - 1));
  return t;
}

double SplineParams::Spline::eval(double x) const {
  const Index k = knots.size();
  if (x <= knots(0)) return values(0) + tangents(0) * (x - knots(0));
  if (x >= knots(k - 1)) return values(k - 1) + tangents(k - 1) * (x - knots(k - 1));
  const auto* begin = knots.data();
  const auto* it = std::upper_bound(begin, begin + k, x);
  const Index i = static_cast<Index>(it - begin) - 1;
  const double h = knots(i + 1) - knots(i);
  const double s = (x - knots(i)) / h;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  return h00 * values(i) + h10 * h * tangents(i) + h01 * values(i + 1) + h11 * h * tangents(i + 1);
}

CausalFunction draw_causal_function(FunctionClass cls, const Matrix& input, Index out_dim, const GenConfig& cfg,
                                    Rng& rng) {
  CausalFunction f;
  f.cls = cls;
  f.in_dim = input.cols();
  f.out_dim = out_dim;
  const Index in = input.cols();
  switch (cls) {
    case FunctionClass::Linear:
      f.params = LinearParams{normal_matrix(out_dim, in, rng)};
      break;
    case FunctionClass::Hadamard: {
      Matrix a = normal_matrix(out_dim, in, rng);
      Matrix b = normal_matrix(out_dim, in, rng);
      f.params = HadamardParams{std::move(a), std::move(b)};
      break;
    }
    case FunctionClass::Bilinear: {
      BilinearParams p;
      for (Index k = 0; k < out_dim; ++k) p.forms.push_back(normal_matrix(in, in, rng));
      f.params = std::move(p);
      break;
    }
    case FunctionClass::CubicSpline: {
      SplineParams p;
      p.out = out_dim;
      for (Index c = 0; c < in; ++c) {
        const long k = rng.integer(cfg.knots_min, cfg.knots_max);
        const auto col = input.col(c);
        const double mean = col.mean();
        const double sd = std::sqrt((col.array() - mean).square().mean());
        double lo = col.minCoeff() - sd;
        double hi = col.maxCoeff() + sd;
        if (!(hi - lo > 1e-9)) {
          lo -= 1.0;
          hi += 1.0;
        }
        SplineParams::Spline s;
        s.knots = Vector::LinSpaced(k, lo, hi);
        s.values.resize(k);
        for (long i = 0; i < k; ++i) s.values(i) = rng.normal();
        s.tangents = catmull_rom_tangents(s.knots, s.values);
        p.splines.push_back(std::move(s));
      }
      f.params = std::move(p);
      break;
    }
    case FunctionClass::MlpFunc: {
      MlpParams p;
      const long depth = rng.integer(cfg.mlp_depth_min, cfg.mlp_depth_max);
      Index prev = in;
      for (long l = 0; l < depth; ++l) {
        const Index w = rng.integer(cfg.mlp_width_min, cfg.mlp_width_max);
        p.layers.push_back(normal_matrix(w, prev, rng));
        prev = w;
      }
      p.layers.push_back(normal_matrix(out_dim, prev, rng));
      f.params = std::move(p);
      break;
    }
  }
  return f;
}

Matrix apply_causal_function(const CausalFunction& f, const Matrix& input) {
  if (input.cols() != f.in_dim) {
    throw DimensionError("apply_causal_function: input has " + std::to_string(input.cols()) + " columns, expected " +
                         std::to_string(f.in_dim));
  }
  return std::visit(
      [&](const auto& p) -> Matrix {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LinearParams>) {
          return input * p.a.transpose();
        } else if constexpr (std::is_same_v<P, HadamardParams>) {
          return input.cwiseAbs2() * p.a.transpose() + input * p.b.transpose();
        } else if constexpr (std::is_same_v<P, BilinearParams>) {
          Matrix out(input.rows(), static_cast<Index>(p.forms.size()));
          for (std::size_t k = 0; k < p.forms.size(); ++k) {
            out.col(static_cast<Index>(k)) = (input * p.forms[k]).cwiseProduct(input).rowwise().sum();
          }
          return out;
        } else if constexpr (std::is_same_v<P, SplineParams>) {
          Matrix out = Matrix::Zero(input.rows(), p.out);
          for (std::size_t c = 0; c < p.splines.size(); ++c) {
            const Index target = static_cast<Index>(c) % p.out;
            for (Index r = 0; r < input.rows(); ++r) {
              out(r, target) += p.splines[c].eval(input(r, static_cast<Index>(c)));
            }
          }
          return out;
        } else {
          Matrix h = input;
          for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) {
            h = (h * p.layers[l].transpose()).array().tanh().matrix();
          }
          return h * p.layers.back().transpose();
        }
      },
      f.params);
}

Matrix add_noise_and_standardize(const Matrix& m, double variance, Rng& rng) {
  if (!(variance > 0.0 && variance <= 0.1)) throw UsageError("add_noise_and_standardize: variance must lie in (0, 0.1]");
  if (!m.allFinite()) throw NumericError("add_noise_and_standardize: non-finite input");
  const double sd = std::sqrt(variance);
  for (int attempt = 0;; ++attempt) {
    Matrix noisy = m;
    for (Index j = 0; j < noisy.cols(); ++j)
      for (Index i = 0; i < noisy.rows(); ++i) noisy(i, j) += sd * rng.normal();
    try {
      return standardize_columns(noisy);
    } catch (const DegenerateColumnError&) {
      if (attempt >= 1) throw;
    }
  }
}

// --- samples ------------------------------------------------------------------

Sample generate_sample(GraphKind graph, FunctionClass func, const GenConfig& cfg, Rng& rng) {
  const Index d = cfg.dim;
  const Index m = cfg.pairs;
  const double v = cfg.noise_max * (1.0 - rng.uniform());  // (0, noise_max]

  auto relate = [&](const Matrix& input) {
    const CausalFunction f = draw_causal_function(func, input, d, cfg, rng);
    return add_noise_and_standardize(apply_causal_function(f, input), v, rng);
  };
  auto initial = [&] {
    const GmmSpec spec = cfg.gmm ? *cfg.gmm : GmmSpec::random_default(d, rng);
    const Matrix w = standardize_columns(sample_gmm(spec, m, rng));
    return relate(w);
  };

  Sample s;
  s.graph = graph;
  s.func = func;
  s.label = causal_label(graph);
  s.noise_variance = v;
  switch (graph) {
    case GraphKind::G1:
    case GraphKind::G2: {
      Matrix cause = initial();
      Matrix effect = relate(cause);
      s.x = std::move(cause);
      s.y = std::move(effect);
      break;
    }
    case GraphKind::G3: {
      s.x = initial();
      s.y = initial();
      break;
    }
    case GraphKind::G4:
    case GraphKind::G5: {
      const Matrix z = initial();
      Matrix cause = relate(z);
      Matrix joint(m, 2 * d);
      joint << cause, z;
      Matrix effect = relate(joint);
      s.x = std::move(cause);
      s.y = std::move(effect);
      break;
    }
    case GraphKind::G6: {
      const Matrix z = initial();
      s.x = relate(z);
      s.y = relate(z);
      break;
    }
  }
  if (graph == GraphKind::G2 || graph == GraphKind::G5) std::swap(s.x, s.y);
  return s;
}

namespace {

std::vector<FunctionClass> allowed_classes(std::optional<FunctionClass> exclude) {
  std::vector<FunctionClass> out;
  for (auto f : kAllFunctionClasses)
    if (!exclude || f != *exclude) out.push_back(f);
  return out;
}

}  // namespace

Sample generate_stream_sample(const GenConfig& cfg, std::uint64_t stream_seed, std::uint64_t index,
                              std::optional<FunctionClass> exclude) {
  static thread_local std::vector<FunctionClass> scratch;
  scratch = allowed_classes(exclude);
  Rng rng(derive_seed(stream_seed, {index}));
  const GraphKind g = kAllGraphs[static_cast<std::size_t>(rng.integer(0, 5))];
  const FunctionClass f = scratch[static_cast<std::size_t>(rng.integer(0, static_cast<long>(scratch.size()) - 1))];
  return generate_sample(g, f, cfg, rng);
}

std::vector<Sample> generate_epoch(const GenConfig& cfg, std::uint64_t stream_seed, std::size_t n,
                                   std::optional<FunctionClass> exclude, std::uint64_t first) {
  if (n == 0) throw UsageError("generate_epoch: n must be >= 1");
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_stream_sample(cfg, stream_seed, first + i, exclude));
  return out;
}

std::vector<Sample> generate_function_set(const GenConfig& cfg, std::uint64_t stream_seed, std::size_t n,
                                          FunctionClass only) {
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(stream_seed, {i}));
    const GraphKind g = kAllGraphs[static_cast<std::size_t>(rng.integer(0, 5))];
    out.push_back(generate_sample(g, only, cfg, rng));
  }
  return out;
}

}  // namespace nci
