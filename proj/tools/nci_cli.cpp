// ncinet: command-line front end for data generation, training and the
// benchmark experiments.

#include <nci/dataset_io.hpp>
#include <nci/harness.hpp>
#include <nci/labels.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace {

using namespace nci;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::optional<Index> dim;
  std::optional<Index> pairs;
  bool quiet = false;
};

ExperimentConfig resolve(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_experiment(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  if (g.dim) cfg.gen.dim = *g.dim;
  if (g.pairs) cfg.gen.pairs = *g.pairs;
  cfg.validate();
  return cfg;
}

Progress progress(const Globals& g) {
  if (g.quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

std::optional<FunctionClass> optional_function(const std::string& name) {
  if (name.empty() || name == "none") return std::nullopt;
  return function_from_name(name);
}

std::filesystem::path prepare_out(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "config.json", to_json(cfg).dump(2) + "\n");
  return cfg.out_dir;
}

void write_table(const std::filesystem::path& dir, const std::string& stem, const ResultTable& t) {
  write_text(dir / (stem + ".csv"), emit_csv(t));
  write_text(dir / (stem + ".md"), emit_markdown(t));
  std::cout << emit_markdown(t);
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& n : names)
    if (!n.empty()) out.push_back(method_from_label(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NCINet causal discovery for representation pairs"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->type_name("U64");
  app.add_option("--config", g.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--dim", g.dim, "Representation dimension d");
  app.add_option("--pairs", g.pairs, "Pairs per sample m");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  std::size_t gen_n = 1000;
  std::string gen_exclude;
  std::string gen_only;
  std::string gen_file = "dataset.ncid";
  gen->add_option("-n,--count", gen_n, "Number of samples");
  gen->add_option("--exclude", gen_exclude, "Function class to leave out");
  gen->add_option("--only", gen_only, "Restrict to one function class");
  gen->add_option("--file", gen_file, "File name inside the output directory");

  // train
  auto* tr = app.add_subcommand("train", "Train NCINet and write a checkpoint");
  std::string tr_exclude;
  std::optional<int> tr_epochs;
  std::optional<double> tr_lambda;
  tr->add_option("--exclude", tr_exclude, "Function class to leave out");
  tr->add_option("--epochs", tr_epochs, "Training epochs");
  tr->add_option("--lambda-adv", tr_lambda, "Adversarial loss weight");

  // lofo
  auto* lofo = app.add_subcommand("lofo", "Leave-one-function-out benchmark");
  std::vector<std::string> lofo_methods;
  std::optional<int> lofo_runs;
  lofo->add_option("--methods", lofo_methods, "Methods (NCINet NCC ANM BFit RECI)")
      ->expected(0, CLI::detail::expected_max_vector_size);
  lofo->add_option("--runs", lofo_runs, "Independent runs");

  // ablate-adv
  auto* adv = app.add_subcommand("ablate-adv", "LOFO averages over the adversarial weight");
  std::vector<double> adv_lambdas{0.0, 0.5, 1.0, 2.0, 10.0};
  std::optional<int> adv_runs;
  adv->add_option("--lambdas", adv_lambdas, "lambda_adv values");
  adv->add_option("--runs", adv_runs, "Independent runs");

  // ablate-m
  auto* abm = app.add_subcommand("ablate-m", "LOFO averages over the pair count");
  std::vector<Index> abm_pairs{10, 100, 1000};
  std::optional<int> abm_runs;
  abm->add_option("--m", abm_pairs, "Pair counts");
  abm->add_option("--runs", abm_runs, "Independent runs");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Calibrate ANM, BFit and RECI thresholds");
  std::string cal_input;
  cal->add_option("--input", cal_input, "Validation dataset (generated when omitted)")->check(CLI::ExistingFile);

  // consistency
  auto* con = app.add_subcommand("consistency", "Causal-consistency suite on synthetic labels");
  std::vector<std::string> con_graphs;
  std::vector<std::string> con_strengths{"high"};
  std::vector<std::string> con_methods;
  std::size_t con_obs = 5000;
  bool con_overfit = false;
  con->add_option("--graphs", con_graphs, "Graphs (G1..G6)");
  con->add_option("--strengths", con_strengths, "high and/or low");
  con->add_option("--methods", con_methods, "NCINet RECI NCC");
  con->add_option("--observations", con_obs, "Observations per graph");
  con->add_flag("--overfit", con_overfit, "Also run the overfitting experiment on G1");

  // emit
  auto* emit = app.add_subcommand("emit", "Re-emit a result CSV as CSV or markdown");
  std::string emit_input;
  std::string emit_format = "markdown";
  emit->add_option("input", emit_input, "Result CSV")->required()->check(CLI::ExistingFile);
  emit->add_option("--format", emit_format, "csv or markdown")->check(CLI::IsMember({"csv", "markdown"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    const auto report = progress(g);
    if (emit->parsed()) {
      const auto table = parse_csv(read_text(emit_input));
      const std::string text = emit_format == "csv" ? emit_csv(table) : emit_markdown(table);
      if (g.out.empty()) {
        std::cout << text;
      } else {
        std::filesystem::create_directories(g.out);
        const auto stem = std::filesystem::path(emit_input).stem().string();
        write_text(std::filesystem::path(g.out) / (stem + (emit_format == "csv" ? ".csv" : ".md")), text);
      }
      return kExitOk;
    }

    ExperimentConfig cfg = resolve(g);

    if (gen->parsed()) {
      const auto dir = prepare_out(cfg);
      const auto stream = derive_seed(cfg.seed, {streams::kTest});
      const auto samples = gen_only.empty()
                               ? generate_epoch(cfg.gen, stream, gen_n, optional_function(gen_exclude))
                               : generate_function_set(cfg.gen, stream, gen_n, function_from_name(gen_only));
      write_dataset(dir / gen_file, samples);
      std::cout << "wrote " << samples.size() << " samples to " << (dir / gen_file).string() << '\n';
    } else if (tr->parsed()) {
      if (tr_epochs) cfg.train.epochs = *tr_epochs;
      if (tr_lambda) cfg.train.lambda_adv = *tr_lambda;
      cfg.validate();
      const auto dir = prepare_out(cfg);
      TrainConfig t = cfg.train;
      t.seed = derive_seed(cfg.seed, {streams::kTrain});
      const auto result = train(cfg.gen, t, optional_function(tr_exclude), [&](const EpochMetrics& e) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "epoch %d  L_C %.4f  L_R %.4f  L_A %.5f  val acc %.3f", e.epoch, e.loss_c,
                      e.loss_r, e.loss_a, e.val_accuracy);
        if (report) report(buf);
      });
      save_checkpoint(dir / "ncinet.ckpt", result.params, t);
      std::cout << "validation accuracy " << result.history.back().val_accuracy << '\n';
    } else if (lofo->parsed()) {
      if (lofo->count("--methods") > 0) cfg.methods = parse_methods(lofo_methods);
      if (lofo_runs) cfg.runs = *lofo_runs;
      cfg.validate();
      const auto dir = prepare_out(cfg);
      if (cfg.methods.empty()) {
        std::vector<std::string> cols;
        for (auto f : kAllFunctionClasses) cols.emplace_back(function_name(f));
        write_table(dir, "lofo", make_table({}, cols, {}));
        return kExitOk;
      }
      write_table(dir, "lofo", run_lofo(cfg, report).table);
    } else if (adv->parsed()) {
      if (adv_runs) cfg.runs = *adv_runs;
      cfg.validate();
      const auto dir = prepare_out(cfg);
      const auto r = run_adv_ablation(cfg, adv_lambdas, report);
      write_table(dir, "ablate_adv", r.table);
      std::ostringstream delta;
      delta << "lambda_adv";
      for (int run = 0; run < cfg.runs; ++run) delta << ",run" << run + 1;
      delta << '\n';
      for (std::size_t i = 0; i < r.lambdas.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", r.lambdas[i]);
        delta << buf;
        for (double v : r.delta[i]) {
          std::snprintf(buf, sizeof buf, ",%.2f", v);
          delta << buf;
        }
        delta << '\n';
      }
      write_text(dir / "ablate_adv_delta.csv", delta.str());
    } else if (abm->parsed()) {
      if (abm_runs) cfg.runs = *abm_runs;
      cfg.validate();
      const auto dir = prepare_out(cfg);
      const auto r = run_sample_complexity(cfg, abm_pairs, report);
      write_table(dir, "ablate_m", r.table);
      std::ostringstream times;
      times << "m,seconds\n";
      for (std::size_t i = 0; i < r.pairs.size(); ++i) times << r.pairs[i] << ',' << r.seconds[i] << '\n';
      write_text(dir / "ablate_m_seconds.csv", times.str());
    } else if (cal->parsed()) {
      const auto dir = prepare_out(cfg);
      const auto validation =
          cal_input.empty() ? generate_epoch(cfg.gen, derive_seed(cfg.seed, {streams::kCalibration}),
                                             static_cast<std::size_t>(cfg.calibration_size))
                            : read_dataset(std::filesystem::path(cal_input));
      const auto t = calibrate_all(validation, cfg.train.lambda_ridge);
      const nlohmann::json j{{"ANM", t.anm}, {"BFit", t.bfit}, {"RECI", t.reci}};
      write_text(dir / "thresholds.json", j.dump(2) + "\n");
      std::cout << j.dump(2) << '\n';
    } else if (con->parsed()) {
      const auto dir = prepare_out(cfg);
      SuiteConfig suite;
      suite.seed = cfg.seed;
      suite.observations = con_obs;
      if (!con_graphs.empty()) {
        suite.graphs.clear();
        for (const auto& name : con_graphs) suite.graphs.push_back(graph_from_name(name));
      }
      suite.strengths.clear();
      for (const auto& s : con_strengths) {
        if (s == "high") {
          suite.strengths.push_back(Strength::High);
        } else if (s == "low") {
          suite.strengths.push_back(Strength::Low);
        } else {
          throw ConfigError("unknown strength: " + s);
        }
      }
      if (!con_methods.empty()) suite.methods = parse_methods(con_methods);
      for (auto m : suite.methods)
        if (m != Method::NCINet && m != Method::RECI && m != Method::NCC)
          throw ConfigError("consistency suite supports NCINet, NCC and RECI only");
      const auto models = train_suite_models(cfg, report);
      const auto entries = run_consistency_suite(suite, models, report);
      std::vector<ConsistencyReport> reports;
      std::ostringstream summary;
      summary << "graph,method,mean,std,val_accuracy_x,val_accuracy_y,converged_epoch\n";
      for (const auto& e : entries) {
        reports.push_back(e.report);
        summary << e.report.graph << ',' << e.report.method << ',' << e.report.mean << ',' << e.report.std << ','
                << e.val_accuracy_x << ',' << e.val_accuracy_y << ',' << e.converged << '\n';
      }
      write_consistency_csv(dir / "consistency.csv", reports);
      write_text(dir / "consistency_summary.csv", summary.str());
      std::cout << summary.str();
      if (con_overfit) {
        const auto curves = run_overfitting(suite, models, GraphKind::G1);
        std::ostringstream csv;
        csv << "epoch,train_consistency,val_consistency,train_accuracy,val_accuracy\n";
        for (std::size_t e = 0; e < curves.val.size(); ++e)
          csv << e + 1 << ',' << curves.train[e] << ',' << curves.val[e] << ',' << curves.train_accuracy[e] << ','
              << curves.val_accuracy[e] << '\n';
        write_text(dir / "overfitting.csv", csv.str());
      }
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
