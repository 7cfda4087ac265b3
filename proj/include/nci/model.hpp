#pragma once

// NCINet: a shared per-pair encoder, a pooled supervised encoder, a ridge
// regression branch in both directions, a kernel-ridge adversary on the pooled
// code and a classifier over [code, fusion features].

#include <nci/mlp.hpp>
#include <nci/optim.hpp>
#include <nci/regress.hpp>
#include <nci/synth.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <span>

namespace nci {

struct Architecture {
  Index dim = 8;
  Index hidden = 32;        // shared encoder output h
  Index shared_width = 32;
  Index sup_width = 64;
  Index z_dim = 32;
  Index cls_width = 32;

  void validate() const;
};

struct NCINetParams {
  Architecture arch;
  Mlp shared;      // d -> width -> h
  Mlp supervised;  // 2h -> width -> z
  Mlp classifier;  // z + 3 -> width -> 3

  static NCINetParams init(const Architecture& arch, std::uint64_t seed);
  std::vector<Tensor> parameters() const;
  NCINetParams clone() const;
};

struct TrainConfig {
  double lambda_ridge = 1e-3;
  double beta_adv = 1e-3;
  double lambda_adv = 1.0;
  AdamWConfig adamw;
  int epochs = 50;
  int batch_size = 32;
  int samples_per_epoch = 1000;
  int validation_size = 300;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Encoding {
  Tensor zx;  // m x h
  Tensor zy;  // m x h
  Tensor z;   // 1 x z_dim
};

Encoding encode(const NCINetParams& p, const Sample& s);

struct ForwardResult {
  Tensor logits;  // 1 x 3
  Tensor fusion;  // 1 x 3
  Tensor z;       // 1 x z_dim
  Tensor mse_xy;
  Tensor mse_yx;
};

ForwardResult forward(const NCINetParams& p, const Sample& s, double lambda_ridge);

/// Batched forward: the encoders run once over the stacked pairs.
struct BatchForward {
  Tensor logits;      // n x 3
  Tensor fusion;      // n x 3
  Tensor z;           // n x z_dim
  Tensor regression;  // 1x1, mean over the batch of mse_xy + mse_yx
};

BatchForward forward_batch(const NCINetParams& p, std::span<const Sample> batch, double lambda_ridge);

struct Losses {
  Tensor classification;
  Tensor regression;
  Tensor adversarial;
  Tensor total;
};

/// Throws UsageError for batches smaller than two samples.
Losses losses(const NCINetParams& p, std::span<const Sample> batch, const TrainConfig& cfg);

struct Prediction {
  RowVector logits;
  int label = 0;
};

/// Argmax; ties go to the smaller label.
int argmax_label(const RowVector& logits);

Prediction predict(const NCINetParams& p, const Sample& s, double lambda_ridge = 1e-3);
std::vector<int> predict_labels(const NCINetParams& p, std::span<const Sample> samples, double lambda_ridge = 1e-3);
double accuracy(const NCINetParams& p, std::span<const Sample> samples, double lambda_ridge = 1e-3);

struct EpochMetrics {
  int epoch = 0;
  double loss_c = 0.0;
  double loss_r = 0.0;
  double loss_a = 0.0;
  double total = 0.0;
  double val_accuracy = 0.0;
  double val_total = 0.0;  // total loss on the fixed validation set
};

struct TrainResult {
  NCINetParams params;
  std::vector<EpochMetrics> history;
  /// Training samples consumed per function class.
  std::array<long, kNumFunctionClasses> class_counts{};
};

struct TrainingDiverged : NumericError {
  using NumericError::NumericError;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains on freshly generated samples; the validation set is drawn from its
/// own stream with the same exclusion. Throws TrainingDiverged on a
/// non-finite loss.
TrainResult train(const GenConfig& gen, const TrainConfig& cfg, std::optional<FunctionClass> exclude = std::nullopt,
                  const EpochCallback& on_epoch = {});

// --- checkpoints ----------------------------------------------------------------
//
//   "NCINET01" | u32 LE header length | JSON header | f64 LE weights

struct Checkpoint {
  NCINetParams params;
  TrainConfig train;
};

void save_checkpoint(const std::filesystem::path& path, const NCINetParams& p, const TrainConfig& cfg);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nci
