#pragma once

// Synthetic cause-effect representation pairs.
//
// Every sample is drawn from its own RNG substream (master seed, stream id,
// sample index), so datasets are reproducible and can be generated in any
// order or in parallel.

#include <nci/common.hpp>
#include <nci/rng.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

namespace nci {

enum class FunctionClass { Linear = 0, Hadamard = 1, Bilinear = 2, CubicSpline = 3, MlpFunc = 4 };
inline constexpr int kNumFunctionClasses = 5;
inline constexpr std::array<FunctionClass, 5> kAllFunctionClasses{
    FunctionClass::Linear, FunctionClass::Hadamard, FunctionClass::Bilinear, FunctionClass::CubicSpline,
    FunctionClass::MlpFunc};

enum class GraphKind { G1 = 1, G2, G3, G4, G5, G6 };
inline constexpr std::array<GraphKind, 6> kAllGraphs{GraphKind::G1, GraphKind::G2, GraphKind::G3,
                                                     GraphKind::G4, GraphKind::G5, GraphKind::G6};

/// 1: X -> Y, 2: X <- Y, 0: no causal relation.
constexpr int causal_label(GraphKind g) {
  switch (g) {
    case GraphKind::G1:
    case GraphKind::G4: return 1;
    case GraphKind::G2:
    case GraphKind::G5: return 2;
    default: return 0;
  }
}

constexpr bool is_confounded(GraphKind g) {
  return g == GraphKind::G4 || g == GraphKind::G5 || g == GraphKind::G6;
}

std::string_view function_name(FunctionClass f);
std::string_view graph_name(GraphKind g);
FunctionClass function_from_name(std::string_view name);
GraphKind graph_from_name(std::string_view name);
Vector function_one_hot(FunctionClass f);

struct GmmSpec {
  Vector weights;     // K
  Matrix means;       // K x d
  Matrix variances;   // K x d, diagonal covariances

  Index components() const { return weights.size(); }
  Index dim() const { return means.cols(); }
  /// Throws ConfigError unless weights sum to 1 (1e-12), are >= 0 and
  /// variances are > 0.
  void validate() const;

  /// K = 3, weights ~ Dirichlet(1,1,1), means ~ N(0, 2^2), variances ~ U(0.5, 1.5).
  static GmmSpec random_default(Index dim, Rng& rng);
};

struct GenConfig {
  Index dim = 8;
  Index pairs = 100;
  double noise_max = 0.1;  // v ~ Uniform(0, noise_max)
  long knots_min = 5;
  long knots_max = 20;
  long mlp_depth_min = 0;
  long mlp_depth_max = 3;
  long mlp_width_min = 8;
  long mlp_width_max = 20;
  /// Fixed mixture for the exogenous W; when empty each sample draws its own
  /// from GmmSpec::random_default.
  std::optional<GmmSpec> gmm;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Sample {
  Matrix x;  // m x d
  Matrix y;  // m x d
  int label = 0;
  GraphKind graph = GraphKind::G1;
  FunctionClass func = FunctionClass::Linear;
  /// Noise variance used for every additive-noise step of this sample.
  double noise_variance = 0.0;

  /// Swaps the roles of X and Y, mapping G1<->G2 and G4<->G5.
  Sample swapped() const;
};

Matrix sample_gmm(const GmmSpec& spec, Index m, Rng& rng);

// --- causal functions ---------------------------------------------------------

struct LinearParams {
  Matrix a;  // out x in
};
struct HadamardParams {
  Matrix a;  // out x in, applied to x*x
  Matrix b;  // out x in
};
struct BilinearParams {
  std::vector<Matrix> forms;  // out forms, each in x in
};
/// One cubic Hermite spline per input column; input column c adds into output
/// column c mod out.
struct SplineParams {
  struct Spline {
    Vector knots;   // strictly increasing
    Vector values;
    Vector tangents;
    double eval(double x) const;
  };
  std::vector<Spline> splines;
  Index out = 0;
};
/// tanh hidden layers, linear output, no biases.
struct MlpParams {
  std::vector<Matrix> layers;  // each out x in
};

using FunctionParams = std::variant<LinearParams, HadamardParams, BilinearParams, SplineParams, MlpParams>;

struct CausalFunction {
  FunctionClass cls = FunctionClass::Linear;
  FunctionParams params;
  Index in_dim = 0;
  Index out_dim = 0;
};

/// Draws fresh N(0,1) parameters for `cls`. Spline knots span the support of
/// `input` (min - std, max + std per column), so the input is needed here.
CausalFunction draw_causal_function(FunctionClass cls, const Matrix& input, Index out_dim, const GenConfig& cfg,
                                    Rng& rng);

/// Pre-noise effect matrix; throws DimensionError if input.cols() != in_dim.
Matrix apply_causal_function(const CausalFunction& f, const Matrix& input);

/// Catmull-Rom tangents for a knot sequence; one-sided at the ends.
Vector catmull_rom_tangents(const Vector& knots, const Vector& values);

/// Adds i.i.d. N(0, v) noise then standardizes each column over the rows.
/// A zero-variance column triggers one noise resample, then
/// DegenerateColumnError.
Matrix add_noise_and_standardize(const Matrix& m, double variance, Rng& rng);

Sample generate_sample(GraphKind graph, FunctionClass func, const GenConfig& cfg, Rng& rng);

/// Sample `index` of a stream: graph uniform over G1..G6, class uniform over
/// the non-excluded classes, all drawn from substream (stream_seed, index).
Sample generate_stream_sample(const GenConfig& cfg, std::uint64_t stream_seed, std::uint64_t index,
                              std::optional<FunctionClass> exclude = std::nullopt);

/// Samples [first, first + n) of a stream.
std::vector<Sample> generate_epoch(const GenConfig& cfg, std::uint64_t stream_seed, std::size_t n,
                                   std::optional<FunctionClass> exclude = std::nullopt,
                                   std::uint64_t first = 0);

/// Test-set helper: every sample uses class `only` and a uniform graph.
std::vector<Sample> generate_function_set(const GenConfig& cfg, std::uint64_t stream_seed, std::size_t n,
                                          FunctionClass only);

}  // namespace nci
