#pragma once

// Causal consistency of learned representations. Labels with a known causal
// relation are rendered into observations by a frozen random network; two
// attribute predictors are trained on them and their penultimate activations,
// snapshotted every epoch, serve as the representation pair (x, y).

#include <nci/labels.hpp>
#include <nci/mlp.hpp>
#include <nci/optim.hpp>

#include <filesystem>
#include <functional>
#include <string>

namespace nci {

struct ObservationConfig {
  Index out_dim = 32;      // D
  Index noise_dim = 8;
  Index width = 64;
  double signal_scale = 3.0;  // multiplies the one-hot label codes
  double noise_sd = 0.3;
};

/// I = g(onehot(a_x) || onehot(a_y) || eps) with g a frozen tanh network.
struct ObservationModel {
  int arity_x = 4;
  int arity_y = 4;
  ObservationConfig cfg;
  Mlp g;

  static ObservationModel make(int arity_x, int arity_y, const ObservationConfig& cfg, std::uint64_t seed);

  /// Rows of g for explicit noise; no standardization.
  Matrix map(const std::vector<LabelPair>& labels, const Matrix& eps) const;
};

/// One observation per label pair, standardized per dimension over the set.
Matrix generate_observations(const std::vector<LabelPair>& labels, const ObservationModel& model, Rng& rng);

struct PredictorConfig {
  Index rep_dim = 8;  // r
  AdamWConfig adamw;
  int epochs = 50;
  int batch_size = 64;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct EpochSnapshot {
  int epoch = 0;
  double val_accuracy = 0.0;
  double train_accuracy = 0.0;
  Matrix train_reps;  // penultimate activations
  Matrix val_reps;
};

struct PredictorRun {
  Mlp net;  // D -> r (tanh) -> arity
  std::vector<EpochSnapshot> snapshots;
};

/// Trains a D -> r -> arity classifier on the first train_fraction of rows
/// and snapshots representations of both splits after every epoch.
PredictorRun train_attribute_predictor(const Matrix& observations, const std::vector<int>& labels, int arity,
                                       const PredictorConfig& cfg);

struct PredictorPair {
  PredictorRun x;
  PredictorRun y;
};

PredictorPair train_attribute_predictors(const Matrix& observations, const std::vector<LabelPair>& labels,
                                         int arity_x, int arity_y, const PredictorConfig& cfg);

/// Label {0, 1, 2} for one representation subset.
using SubsetClassifier = std::function<int(const Sample&)>;

struct ConsistencyReport {
  std::string graph;
  std::string method;
  std::vector<double> per_epoch;  // one value per snapshot
  double mean = 0.0;              // over the last K snapshots
  double std = 0.0;               // unbiased, over the same window
  Index subsets = 0;
  Index subset_size = 0;
  int window = 0;
};

/// Fraction of disjoint row subsets (remainder dropped) whose classified
/// label equals true_label, per snapshot. Each subset is standardized per
/// column before classification. Throws UsageError when fewer than two
/// subsets fit.
ConsistencyReport causal_consistency(const std::vector<Matrix>& reps_x, const std::vector<Matrix>& reps_y,
                                     int true_label, const SubsetClassifier& method, Index subset_size = 100,
                                     int k = 10);

/// Epoch at which validation accuracy first comes within 1% of its running
/// maximum over the whole run (1-based).
int converged_epoch(const std::vector<EpochSnapshot>& snaps);

void write_consistency_csv(const std::filesystem::path& path, const std::vector<ConsistencyReport>& reports);

}  // namespace nci
