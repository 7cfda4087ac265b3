#include <nci/harness.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

namespace nci {

static_assert(streams::kTrain != streams::kTest && streams::kValidation != streams::kTest &&
                  streams::kCalibration != streams::kTest && streams::kTrain != streams::kValidation &&
                  streams::kTrain != streams::kCalibration && streams::kValidation != streams::kCalibration,
              "data streams must be disjoint");

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Mean and unbiased std of `k` epochs starting at 1-based epoch `from`,
// shifted back when the run ends first.
void window_from(ConsistencyReport& r, int from, int k) {
  const auto n = static_cast<int>(r.per_epoch.size());
  const int w = std::min(k, n);
  const int begin = std::clamp(from - 1, 0, n - w);
  double mean = 0.0;
  for (int e = begin; e < begin + w; ++e) mean += r.per_epoch[static_cast<std::size_t>(e)];
  mean /= w;
  double ss = 0.0;
  for (int e = begin; e < begin + w; ++e) {
    const double dv = r.per_epoch[static_cast<std::size_t>(e)] - mean;
    ss += dv * dv;
  }
  r.mean = mean;
  r.std = w > 1 ? std::sqrt(ss / (w - 1)) : 0.0;
  r.window = w;
}

void say(const Progress& p, const std::string& msg) {
  if (p) p(msg);
}

std::vector<std::string> function_columns() {
  std::vector<std::string> cols;
  for (auto f : kAllFunctionClasses) cols.emplace_back(function_name(f));
  return cols;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

double hit_rate(const std::vector<int>& pred, std::span<const Sample> test) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < test.size(); ++i) hit += pred[i] == test[i].label ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(test.size());
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json gen_json(const GenConfig& g) {
  nlohmann::json j{{"dim", g.dim},
                   {"pairs", g.pairs},
                   {"noise_max", g.noise_max},
                   {"knots_min", g.knots_min},
                   {"knots_max", g.knots_max},
                   {"mlp_depth_min", g.mlp_depth_min},
                   {"mlp_depth_max", g.mlp_depth_max},
                   {"mlp_width_min", g.mlp_width_min},
                   {"mlp_width_max", g.mlp_width_max}};
  if (g.gmm) {
    auto rows = [](const Matrix& m) {
      std::vector<std::vector<double>> r;
      for (Index i = 0; i < m.rows(); ++i) {
        std::vector<double> row;
        for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        r.push_back(std::move(row));
      }
      return r;
    };
    std::vector<double> w(g.gmm->weights.data(), g.gmm->weights.data() + g.gmm->weights.size());
    j["gmm"] = {{"weights", w}, {"means", rows(g.gmm->means)}, {"variances", rows(g.gmm->variances)}};
  }
  return j;
}

nlohmann::json train_json(const TrainConfig& t) {
  return {{"lambda_ridge", t.lambda_ridge},
          {"beta_adv", t.beta_adv},
          {"lambda_adv", t.lambda_adv},
          {"lr", t.adamw.lr},
          {"weight_decay", t.adamw.weight_decay},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"samples_per_epoch", t.samples_per_epoch},
          {"validation_size", t.validation_size}};
}

template <typename T>
void take(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* where) {
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* known : keys) ok = ok || k == known;
    if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + k + "'");
  }
}

Matrix matrix_from(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return Matrix();
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Index>(rows[i].size()) != m.cols()) throw ConfigError("gmm: ragged matrix");
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
  }
  return m;
}

NCCTrainConfig ncc_config(const TrainConfig& t, std::uint64_t seed) {
  NCCTrainConfig c;
  c.adamw = t.adamw;
  c.epochs = t.epochs;
  c.batch_size = t.batch_size;
  c.samples_per_epoch = t.samples_per_epoch;
  c.seed = seed;
  return c;
}

}  // namespace

std::string_view method_label(Method m) {
  switch (m) {
    case Method::NCINet: return "NCINet";
    case Method::NCC: return "NCC";
    case Method::ANM: return "ANM";
    case Method::BFit: return "BFit";
    case Method::RECI: return "RECI";
  }
  return "?";
}

Method method_from_label(std::string_view name) {
  for (auto m : kAllMethods)
    if (method_label(m) == name) return m;
  throw ConfigError("unknown method: " + std::string(name));
}

void ExperimentConfig::validate() const {
  gen.validate();
  train.validate();
  if (runs < 1) throw ConfigError("ExperimentConfig: runs must be >= 1");
  if (test_size < 1) throw ConfigError("ExperimentConfig: test_size must be >= 1");
  if (calibration_size < 3) throw ConfigError("ExperimentConfig: calibration_size must be >= 3");
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["gen"] = gen_json(cfg.gen);
  j["train"] = train_json(cfg.train);
  auto methods = nlohmann::json::array();
  for (auto m : cfg.methods) methods.push_back(std::string(method_label(m)));
  j["methods"] = std::move(methods);
  j["runs"] = cfg.runs;
  j["test_size"] = cfg.test_size;
  j["calibration_size"] = cfg.calibration_size;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir.string();
  if (cfg.cache_dir) j["cache_dir"] = cfg.cache_dir->string();
  return j;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    reject_unknown(j, {"gen", "train", "methods", "runs", "test_size", "calibration_size", "seed", "out_dir", "cache_dir"},
                   "config");
    if (j.contains("gen")) {
      const auto& g = j.at("gen");
      reject_unknown(g, {"dim", "pairs", "noise_max", "knots_min", "knots_max", "mlp_depth_min", "mlp_depth_max",
                         "mlp_width_min", "mlp_width_max", "gmm"},
                     "config.gen");
      take(g, "dim", c.gen.dim);
      take(g, "pairs", c.gen.pairs);
      take(g, "noise_max", c.gen.noise_max);
      take(g, "knots_min", c.gen.knots_min);
      take(g, "knots_max", c.gen.knots_max);
      take(g, "mlp_depth_min", c.gen.mlp_depth_min);
      take(g, "mlp_depth_max", c.gen.mlp_depth_max);
      take(g, "mlp_width_min", c.gen.mlp_width_min);
      take(g, "mlp_width_max", c.gen.mlp_width_max);
      if (g.contains("gmm")) {
        const auto& m = g.at("gmm");
        GmmSpec spec;
        const auto w = m.at("weights").get<std::vector<double>>();
        spec.weights = Eigen::Map<const Vector>(w.data(), static_cast<Index>(w.size()));
        spec.means = matrix_from(m.at("means"));
        spec.variances = matrix_from(m.at("variances"));
        c.gen.gmm = std::move(spec);
      }
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      reject_unknown(t, {"lambda_ridge", "beta_adv", "lambda_adv", "lr", "weight_decay", "epochs", "batch_size",
                         "samples_per_epoch", "validation_size"},
                     "config.train");
      take(t, "lambda_ridge", c.train.lambda_ridge);
      take(t, "beta_adv", c.train.beta_adv);
      take(t, "lambda_adv", c.train.lambda_adv);
      take(t, "lr", c.train.adamw.lr);
      take(t, "weight_decay", c.train.adamw.weight_decay);
      take(t, "epochs", c.train.epochs);
      take(t, "batch_size", c.train.batch_size);
      take(t, "samples_per_epoch", c.train.samples_per_epoch);
      take(t, "validation_size", c.train.validation_size);
    }
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(method_from_label(m.get<std::string>()));
    }
    take(j, "runs", c.runs);
    take(j, "test_size", c.test_size);
    take(j, "calibration_size", c.calibration_size);
    take(j, "seed", c.seed);
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("cache_dir")) c.cache_dir = std::filesystem::path(j.at("cache_dir").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return experiment_from_json(j);
}

std::uint64_t lofo_seed(const ExperimentConfig& cfg, std::uint64_t stream, int run, FunctionClass f) {
  return derive_seed(cfg.seed, {streams::kRun, stream, static_cast<std::uint64_t>(run),
                                static_cast<std::uint64_t>(f)});
}

NCINetParams train_ncinet(const ExperimentConfig& cfg, const TrainConfig& train,
                          std::optional<FunctionClass> exclude, const Progress& progress) {
  std::filesystem::path cached;
  if (cfg.cache_dir) {
    nlohmann::json key{{"gen", gen_json(cfg.gen)}, {"train", train_json(train)}, {"seed", train.seed},
                       {"exclude", exclude ? std::string(function_name(*exclude)) : std::string("none")}};
    char name[48];
    std::snprintf(name, sizeof name, "ncinet-%016llx.ckpt", static_cast<unsigned long long>(fnv1a(key.dump())));
    std::filesystem::create_directories(*cfg.cache_dir);
    cached = *cfg.cache_dir / name;
    if (std::filesystem::exists(cached)) {
      say(progress, "  loaded cached model " + cached.filename().string());
      return load_checkpoint(cached).params;
    }
  }
  auto r = nci::train(cfg.gen, train, exclude, [&](const EpochMetrics& e) {
    if (e.epoch % 10 == 0 || e.epoch == train.epochs) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "  epoch %d  L_C %.4f  L_R %.4f  L_A %.5f  val acc %.3f", e.epoch, e.loss_c,
                    e.loss_r, e.loss_a, e.val_accuracy);
      say(progress, buf);
    }
  });
  if (!cached.empty()) save_checkpoint(cached, r.params, train);
  return std::move(r.params);
}

LofoResult run_lofo(const ExperimentConfig& cfg, const Progress& progress) {
  cfg.validate();
  LofoResult out;
  out.accuracy.assign(cfg.methods.size(),
                      std::vector<std::vector<double>>(kNumFunctionClasses, std::vector<double>(cfg.runs, kNaN)));
  for (int run = 0; run < cfg.runs; ++run) {
    for (auto f : kAllFunctionClasses) {
      const auto fi = static_cast<std::size_t>(f);
      say(progress, "run " + std::to_string(run + 1) + "/" + std::to_string(cfg.runs) + ", held out " +
                        std::string(function_name(f)));
      const auto calibration =
          generate_epoch(cfg.gen, lofo_seed(cfg, streams::kCalibration, run, f),
                         static_cast<std::size_t>(cfg.calibration_size), f);
      const auto test = generate_function_set(cfg.gen, lofo_seed(cfg, streams::kTest, run, f),
                                              static_cast<std::size_t>(cfg.test_size), f);
      std::vector<int> labels;
      for (const auto& s : calibration) labels.push_back(s.label);

      for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
        const Method m = cfg.methods[k];
        try {
          double acc = kNaN;
          switch (m) {
            case Method::NCINet: {
              TrainConfig t = cfg.train;
              t.seed = lofo_seed(cfg, streams::kTrain, run, f);
              const auto params = train_ncinet(cfg, t, f, progress);
              acc = hit_rate(predict_labels(params, test, t.lambda_ridge), test);
              break;
            }
            case Method::NCC: {
              const auto r = ncc_train(cfg.gen, ncc_config(cfg.train, lofo_seed(cfg, streams::kInit, run, f)), f);
              acc = hit_rate(ncc_predict_labels(r.params, test), test);
              break;
            }
            default: {
              const ScoreMethod sm = m == Method::ANM ? ScoreMethod::ANM
                                     : m == Method::BFit ? ScoreMethod::BFit
                                                         : ScoreMethod::RECI;
              std::vector<double> sc;
              for (const auto& s : calibration) sc.push_back(score(sm, s, cfg.train.lambda_ridge));
              const double tau = calibrate_threshold(sc, labels);
              std::vector<int> pred;
              for (const auto& s : test) pred.push_back(classify_score(score(sm, s, cfg.train.lambda_ridge), tau));
              acc = hit_rate(pred, test);
              break;
            }
          }
          out.accuracy[k][fi][static_cast<std::size_t>(run)] = acc;
          char buf[96];
          std::snprintf(buf, sizeof buf, "  %-6s %.2f%%", std::string(method_label(m)).c_str(), 100.0 * acc);
          say(progress, buf);
        } catch (const NumericError& e) {
          say(progress, "  " + std::string(method_label(m)) + " failed: " + e.what());
        }
      }
    }
  }
  std::vector<std::string> names;
  for (auto m : cfg.methods) names.emplace_back(method_label(m));
  out.table = make_table(names, function_columns(), out.accuracy);
  return out;
}

AdvAblation run_adv_ablation(const ExperimentConfig& cfg, const std::vector<double>& lambdas,
                             const Progress& progress) {
  if (lambdas.empty()) throw UsageError("run_adv_ablation: no lambda values");
  AdvAblation out;
  out.lambdas = lambdas;
  std::vector<std::string> rows;
  std::vector<std::vector<std::vector<double>>> acc;
  ExperimentConfig base = cfg;
  base.methods = {Method::NCINet};
  for (double lambda : lambdas) {
    say(progress, "lambda_adv = " + format_value(lambda));
    ExperimentConfig c = base;
    c.train.lambda_adv = lambda;
    auto r = run_lofo(c, progress);
    rows.push_back("lambda_adv=" + format_value(lambda));
    acc.push_back(std::move(r.accuracy.front()));
  }
  out.table = make_table(rows, function_columns(), acc);

  // Per-run average over held-out classes, relative to lambda_adv = 0.
  auto run_average = [&](std::size_t li, int run) {
    double s = 0.0;
    for (const auto& per_f : acc[li]) s += per_f[static_cast<std::size_t>(run)];
    return 100.0 * s / static_cast<double>(kNumFunctionClasses);
  };
  std::optional<std::size_t> zero;
  for (std::size_t i = 0; i < lambdas.size(); ++i)
    if (lambdas[i] == 0.0) zero = i;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    std::vector<double> d;
    for (int run = 0; run < cfg.runs; ++run) d.push_back(zero ? run_average(i, run) - run_average(*zero, run) : kNaN);
    out.delta.push_back(std::move(d));
  }
  return out;
}

SampleComplexity run_sample_complexity(const ExperimentConfig& cfg, const std::vector<Index>& pairs,
                                       const Progress& progress) {
  if (pairs.empty()) throw UsageError("run_sample_complexity: no pair counts");
  SampleComplexity out;
  out.pairs = pairs;
  std::vector<std::string> rows;
  std::vector<std::vector<std::vector<double>>> acc;
  for (Index m : pairs) {
    say(progress, "m = " + std::to_string(m));
    ExperimentConfig c = cfg;
    c.methods = {Method::NCINet};
    c.gen.pairs = m;
    const auto t0 = std::chrono::steady_clock::now();
    auto r = run_lofo(c, progress);
    out.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    rows.push_back("m=" + std::to_string(m));
    acc.push_back(std::move(r.accuracy.front()));
  }
  out.table = make_table(rows, function_columns(), acc);
  return out;
}

// --- consistency suite ------------------------------------------------------------

SuiteModels train_suite_models(const ExperimentConfig& cfg, const Progress& progress) {
  SuiteModels models;
  models.lambda_ridge = cfg.train.lambda_ridge;
  TrainConfig t = cfg.train;
  t.seed = derive_seed(cfg.seed, {streams::kRun, streams::kTrain});
  say(progress, "training NCINet on all function classes");
  models.ncinet = train_ncinet(cfg, t, std::nullopt, progress);
  say(progress, "training NCC on all function classes");
  models.ncc = ncc_train(cfg.gen, ncc_config(cfg.train, derive_seed(cfg.seed, {streams::kRun, streams::kInit}))).params;
  const auto val = generate_epoch(cfg.gen, derive_seed(cfg.seed, {streams::kRun, streams::kCalibration}),
                                  static_cast<std::size_t>(cfg.calibration_size));
  std::vector<double> sc;
  std::vector<int> labels;
  for (const auto& s : val) {
    sc.push_back(reci_score(s, cfg.train.lambda_ridge));
    labels.push_back(s.label);
  }
  models.reci_tau = calibrate_threshold(sc, labels);
  return models;
}

SubsetClassifier make_classifier(Method m, const SuiteModels& models) {
  switch (m) {
    case Method::NCINet:
      return [&models](const Sample& s) { return predict(models.ncinet, s, models.lambda_ridge).label; };
    case Method::NCC:
      return [&models](const Sample& s) { return ncc_predict(models.ncc, s); };
    case Method::RECI:
      return [&models](const Sample& s) {
        return classify_score(reci_score(s, models.lambda_ridge), models.reci_tau);
      };
    default:
      throw ConfigError("consistency suite supports NCINet, NCC and RECI only");
  }
}

std::vector<SuiteEntry> run_consistency_suite(const SuiteConfig& cfg, const SuiteModels& models,
                                              const Progress& progress) {
  std::vector<SuiteEntry> out;
  for (auto strength : cfg.strengths) {
    for (auto g : cfg.graphs) {
      const std::string sname = strength == Strength::High ? "high" : "low";
      say(progress, std::string(graph_name(g)) + " (" + sname + " strength)");
      const auto net = default_cpts(g, strength);
      const auto cell = static_cast<std::uint64_t>(g) * 2 + (strength == Strength::High ? 0 : 1);
      Rng label_rng(derive_seed(cfg.seed, {streams::kLabels, cell}));
      const auto labels = gibbs_sample(net, cfg.observations, label_rng);
      const auto model = ObservationModel::make(net.nodes[0].arity, net.nodes[1].arity, cfg.observation,
                                                derive_seed(cfg.seed, {cell}));
      Rng obs_rng(derive_seed(cfg.seed, {streams::kObservations, cell}));
      const Matrix obs = generate_observations(labels, model, obs_rng);
      PredictorConfig pc = cfg.predictor;
      pc.seed = derive_seed(cfg.seed, {streams::kInit, cell});
      const auto preds = train_attribute_predictors(obs, labels, net.nodes[0].arity, net.nodes[1].arity, pc);

      std::vector<Matrix> rx;
      std::vector<Matrix> ry;
      for (std::size_t e = 0; e < preds.x.snapshots.size(); ++e) {
        rx.push_back(preds.x.snapshots[e].val_reps);
        ry.push_back(preds.y.snapshots[e].val_reps);
      }
      for (auto m : cfg.methods) {
        SuiteEntry entry;
        entry.graph = g;
        entry.strength = strength;
        entry.report = causal_consistency(rx, ry, causal_label(g), make_classifier(m, models), cfg.subset_size,
                                          cfg.window);
        entry.report.graph = std::string(graph_name(g)) + "-" + sname;
        entry.report.method = std::string(method_label(m));
        entry.val_accuracy_x = preds.x.snapshots.back().val_accuracy;
        entry.val_accuracy_y = preds.y.snapshots.back().val_accuracy;
        entry.converged = std::max(converged_epoch(preds.x.snapshots), converged_epoch(preds.y.snapshots));
        window_from(entry.report, entry.converged, cfg.window);
        char buf[160];
        std::snprintf(buf, sizeof buf, "  %-6s consistency %.3f +- %.3f (val acc %.3f / %.3f)",
                      entry.report.method.c_str(), entry.report.mean, entry.report.std, entry.val_accuracy_x,
                      entry.val_accuracy_y);
        say(progress, buf);
        out.push_back(std::move(entry));
      }
    }
  }
  return out;
}

OverfitCurves run_overfitting(const SuiteConfig& cfg, const SuiteModels& models, GraphKind graph,
                              std::size_t train_observations, std::size_t val_observations, int epochs) {
  const auto net = default_cpts(graph, Strength::High);
  const std::uint64_t cell = 1000 + static_cast<std::uint64_t>(graph);
  Rng label_rng(derive_seed(cfg.seed, {streams::kLabels, cell}));
  const std::size_t total = train_observations + val_observations;
  const auto labels = gibbs_sample(net, total, label_rng);
  const auto model = ObservationModel::make(net.nodes[0].arity, net.nodes[1].arity, cfg.overfit_observation,
                                            derive_seed(cfg.seed, {cell}));
  Rng obs_rng(derive_seed(cfg.seed, {streams::kObservations, cell}));
  const Matrix obs = generate_observations(labels, model, obs_rng);
  PredictorConfig pc = cfg.predictor;
  pc.epochs = epochs;
  pc.train_fraction = static_cast<double>(train_observations) / static_cast<double>(total);
  pc.seed = derive_seed(cfg.seed, {streams::kInit, cell});
  const auto preds = train_attribute_predictors(obs, labels, net.nodes[0].arity, net.nodes[1].arity, pc);

  std::vector<Matrix> tx, ty, vx, vy;
  OverfitCurves out;
  for (std::size_t e = 0; e < preds.x.snapshots.size(); ++e) {
    tx.push_back(preds.x.snapshots[e].train_reps);
    ty.push_back(preds.y.snapshots[e].train_reps);
    vx.push_back(preds.x.snapshots[e].val_reps);
    vy.push_back(preds.y.snapshots[e].val_reps);
    out.train_accuracy.push_back(0.5 * (preds.x.snapshots[e].train_accuracy + preds.y.snapshots[e].train_accuracy));
    out.val_accuracy.push_back(0.5 * (preds.x.snapshots[e].val_accuracy + preds.y.snapshots[e].val_accuracy));
  }
  const auto classify = make_classifier(Method::NCINet, models);
  out.train = causal_consistency(tx, ty, causal_label(graph), classify, cfg.subset_size, cfg.window).per_epoch;
  out.val = causal_consistency(vx, vy, causal_label(graph), classify, cfg.subset_size, cfg.window).per_epoch;
  return out;
}

}  // namespace nci
