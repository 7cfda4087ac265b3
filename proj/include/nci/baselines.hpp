#pragma once

// Score-based baselines (ANM, BFit, RECI) with a calibrated three-class
// threshold, and the supervised NCC pair classifier.

#include <nci/mlp.hpp>
#include <nci/optim.hpp>
#include <nci/synth.hpp>

#include <optional>
#include <span>
#include <string_view>

namespace nci {

enum class ScoreMethod { ANM, BFit, RECI };

std::string_view method_name(ScoreMethod m);

/// log(MSE_{Y->X} / MSE_{X->Y}); ridge on the degree-2 lift of the input.
double reci_score(const Sample& s, double lambda_ridge = 1e-3);

/// HSIC(residual_{Y->X}, Y) - HSIC(residual_{X->Y}, X); ridge on the
/// separable cubic lift, biased HSIC with median-heuristic RBF kernels.
double anm_score(const Sample& s, double lambda_ridge = 1e-3);

/// Mean per-column R^2 of X->Y minus that of Y->X; ridge on the separable
/// cubic lift.
double bfit_score(const Sample& s, double lambda_ridge = 1e-3);

double score(ScoreMethod method, const Sample& s, double lambda_ridge = 1e-3);

/// Biased V-statistic HSIC, (1/m^2) tr(K H L H).
double hsic(const Matrix& a, const Matrix& b);

/// 0 if |s| < tau, else 1 for s > 0 and 2 for s < 0.
int classify_score(double s, double tau);

/// Fraction of scores classified to their label at threshold tau.
double threshold_accuracy(std::span<const double> scores, std::span<const int> labels, double tau);

/// Threshold maximizing accuracy over `grid` evenly spaced points from 0 to
/// the 99th percentile of |s|; ties keep the smaller tau. Throws UsageError
/// unless all three labels are present.
double calibrate_threshold(std::span<const double> scores, std::span<const int> labels, int grid = 200);

struct ThresholdTable {
  double anm = 0.0;
  double bfit = 0.0;
  double reci = 0.0;
  double& at(ScoreMethod m);
  double at(ScoreMethod m) const;
};

ThresholdTable calibrate_all(std::span<const Sample> validation, double lambda_ridge = 1e-3);

// --- NCC ------------------------------------------------------------------------

struct NCCParams {
  Index dim = 8;
  Mlp embed;  // 2d -> 32 -> 32 per pair, tanh, then mean pooled
  Mlp head;   // 32 -> 32 -> 3

  static NCCParams init(Index dim, std::uint64_t seed);
  std::vector<Tensor> parameters() const;
};

struct NCCTrainConfig {
  AdamWConfig adamw;
  int epochs = 50;
  int batch_size = 32;
  int samples_per_epoch = 1000;
  std::uint64_t seed = 0;
};

/// n x 3 logits for a batch of equal-sized samples.
Tensor ncc_logits(const NCCParams& p, std::span<const Sample> batch);

struct NCCTrainResult {
  NCCParams params;
  std::vector<double> epoch_loss;
  std::array<long, kNumFunctionClasses> class_counts{};
};

NCCTrainResult ncc_train(const GenConfig& gen, const NCCTrainConfig& cfg,
                         std::optional<FunctionClass> exclude = std::nullopt);
int ncc_predict(const NCCParams& p, const Sample& s);
std::vector<int> ncc_predict_labels(const NCCParams& p, std::span<const Sample> samples);

}  // namespace nci
