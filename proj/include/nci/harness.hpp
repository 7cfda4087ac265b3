#pragma once

// Experiment drivers: leave-one-function-out benchmark, ablations over the
// adversarial weight and the pair count, and the causal-consistency suite.

#include <nci/baselines.hpp>
#include <nci/consistency.hpp>
#include <nci/model.hpp>
#include <nci/tables.hpp>

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nci {

enum class Method { NCINet, NCC, ANM, BFit, RECI };

std::string_view method_label(Method m);
Method method_from_label(std::string_view name);
inline constexpr std::array<Method, 5> kAllMethods{Method::NCINet, Method::NCC, Method::ANM, Method::BFit,
                                                   Method::RECI};

struct ExperimentConfig {
  GenConfig gen;
  TrainConfig train;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  int runs = 5;
  int test_size = 600;         // per held-out class
  int calibration_size = 200;  // threshold validation set, training classes only
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "results";
  /// Trained NCINet checkpoints are reused from here when set.
  std::optional<std::filesystem::path> cache_dir;

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

using Progress = std::function<void(const std::string&)>;

/// Seed of run `run` with held-out class `f` for stream `stream`.
std::uint64_t lofo_seed(const ExperimentConfig& cfg, std::uint64_t stream, int run, FunctionClass f);

/// Trains NCINet, or loads it from cfg.cache_dir when an identical run was
/// cached before.
NCINetParams train_ncinet(const ExperimentConfig& cfg, const TrainConfig& train,
                          std::optional<FunctionClass> exclude, const Progress& progress = {});

struct LofoResult {
  ResultTable table;
  /// accuracy[method][held-out class][run]; NaN marks a failed training.
  std::vector<std::vector<std::vector<double>>> accuracy;
};

LofoResult run_lofo(const ExperimentConfig& cfg, const Progress& progress = {});

struct AdvAblation {
  ResultTable table;                       // rows "lambda_adv=<v>"
  std::vector<double> lambdas;
  std::vector<std::vector<double>> delta;  // [lambda][run]: average(with) - average(lambda 0), percent
};

AdvAblation run_adv_ablation(const ExperimentConfig& cfg, const std::vector<double>& lambdas,
                             const Progress& progress = {});

struct SampleComplexity {
  ResultTable table;  // rows "m=<m>"
  std::vector<Index> pairs;
  std::vector<double> seconds;
};

SampleComplexity run_sample_complexity(const ExperimentConfig& cfg, const std::vector<Index>& pairs,
                                       const Progress& progress = {});

// --- consistency suite ------------------------------------------------------------

struct SuiteConfig {
  std::vector<GraphKind> graphs{kAllGraphs.begin(), kAllGraphs.end()};
  std::vector<Strength> strengths{Strength::High};
  std::vector<Method> methods{Method::NCINet, Method::RECI, Method::NCC};
  std::size_t observations = 5000;
  ObservationConfig observation;
  ObservationConfig overfit_observation{.signal_scale = 1.0, .noise_sd = 1.0};
  PredictorConfig predictor;
  Index subset_size = 100;
  int window = 10;
  std::uint64_t seed = 0;
};

struct SuiteModels {
  NCINetParams ncinet;
  NCCParams ncc;
  double reci_tau = 0.0;
  double lambda_ridge = 1e-3;
};

/// NCINet and NCC trained on all function classes, RECI threshold calibrated
/// on a held-out validation stream.
SuiteModels train_suite_models(const ExperimentConfig& cfg, const Progress& progress = {});

struct SuiteEntry {
  GraphKind graph = GraphKind::G1;
  Strength strength = Strength::High;
  ConsistencyReport report;
  double val_accuracy_x = 0.0;  // final epoch
  double val_accuracy_y = 0.0;
  int converged = 0;            // later of the two predictors
};

SubsetClassifier make_classifier(Method m, const SuiteModels& models);

/// Report mean and std cover `window` epochs from the converged epoch.
std::vector<SuiteEntry> run_consistency_suite(const SuiteConfig& cfg, const SuiteModels& models,
                                              const Progress& progress = {});

struct OverfitCurves {
  std::vector<double> train;  // consistency on training-split representations
  std::vector<double> val;
  std::vector<double> train_accuracy;
  std::vector<double> val_accuracy;
};

/// Small training split and long training, NCINet consistency per epoch on
/// both splits.
OverfitCurves run_overfitting(const SuiteConfig& cfg, const SuiteModels& models, GraphKind graph,
                              std::size_t train_observations = 500, std::size_t val_observations = 1000,
                              int epochs = 200);

}  // namespace nci
