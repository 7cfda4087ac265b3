#include <nci/consistency.hpp>
#include <nci/linalg.hpp>
#include <nci/model.hpp>

#include <fstream>
#include <iomanip>
#include <numeric>

namespace nci {

ObservationModel ObservationModel::make(int arity_x, int arity_y, const ObservationConfig& cfg, std::uint64_t seed) {
  if (arity_x < 2 || arity_y < 2) throw ConfigError("ObservationModel: arities must be >= 2");
  if (cfg.out_dim < 1 || cfg.noise_dim < 0 || cfg.width < 1 || cfg.noise_sd < 0.0) {
    throw ConfigError("ObservationModel: bad config");
  }
  Rng rng(derive_seed(seed, {streams::kObservations, streams::kInit}));
  ObservationModel m;
  m.arity_x = arity_x;
  m.arity_y = arity_y;
  m.cfg = cfg;
  m.g = Mlp::init({arity_x + arity_y + cfg.noise_dim, cfg.width, cfg.out_dim}, rng);
  return m;
}

Matrix ObservationModel::map(const std::vector<LabelPair>& labels, const Matrix& eps) const {
  const auto n = static_cast<Index>(labels.size());
  if (eps.rows() != n || eps.cols() != cfg.noise_dim) throw DimensionError("ObservationModel::map: noise shape");
  Matrix in = Matrix::Zero(n, arity_x + arity_y + cfg.noise_dim);
  for (Index i = 0; i < n; ++i) {
    const auto [ax, ay] = labels[static_cast<std::size_t>(i)];
    if (ax < 0 || ax >= arity_x || ay < 0 || ay >= arity_y) throw UsageError("ObservationModel::map: label out of range");
    in(i, ax) = cfg.signal_scale;
    in(i, arity_x + ay) = cfg.signal_scale;
  }
  in.rightCols(cfg.noise_dim) = eps;
  return g.forward(Tensor::constant(std::move(in))).value();
}

Matrix generate_observations(const std::vector<LabelPair>& labels, const ObservationModel& model, Rng& rng) {
  if (labels.size() < 2) throw UsageError("generate_observations: need at least two label pairs");
  Matrix eps(static_cast<Index>(labels.size()), model.cfg.noise_dim);
  for (Index i = 0; i < eps.rows(); ++i)
    for (Index j = 0; j < eps.cols(); ++j) eps(i, j) = model.cfg.noise_sd * rng.normal();
  return standardize_columns_lenient(model.map(labels, eps));
}

namespace {

double split_accuracy(const Mlp& net, const Matrix& obs, const std::vector<int>& labels) {
  const Matrix logits = net.forward(Tensor::constant(obs)).value();
  std::size_t hit = 0;
  for (Index i = 0; i < logits.rows(); ++i) hit += argmax_label(logits.row(i)) == labels[static_cast<std::size_t>(i)];
  return static_cast<double>(hit) / static_cast<double>(logits.rows());
}

}  // namespace

PredictorRun train_attribute_predictor(const Matrix& observations, const std::vector<int>& labels, int arity,
                                       const PredictorConfig& cfg) {
  const Index n = observations.rows();
  if (static_cast<Index>(labels.size()) != n) throw DimensionError("train_attribute_predictor: label count");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.rep_dim < 1) throw ConfigError("PredictorConfig: bad sizes");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) throw ConfigError("PredictorConfig: bad split");
  const auto n_train = static_cast<Index>(std::floor(cfg.train_fraction * static_cast<double>(n)));
  if (n_train < 1 || n_train >= n) throw UsageError("train_attribute_predictor: too few observations");

  const Matrix train_obs = observations.topRows(n_train);
  const Matrix val_obs = observations.bottomRows(n - n_train);
  const std::vector<int> train_lab(labels.begin(), labels.begin() + n_train);
  const std::vector<int> val_lab(labels.begin() + n_train, labels.end());

  Rng rng(derive_seed(cfg.seed, {streams::kInit}));
  PredictorRun run;
  run.net = Mlp::init({observations.cols(), cfg.rep_dim, arity}, rng);
  AdamW opt(run.net.parameters(), cfg.adamw);
  std::vector<Index> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), Index{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (Index at = 0; at < n_train; at += cfg.batch_size) {
      const Index len = std::min<Index>(cfg.batch_size, n_train - at);
      Matrix xb(len, observations.cols());
      std::vector<int> yb(static_cast<std::size_t>(len));
      for (Index i = 0; i < len; ++i) {
        const Index r = order[static_cast<std::size_t>(at + i)];
        xb.row(i) = train_obs.row(r);
        yb[static_cast<std::size_t>(i)] = train_lab[static_cast<std::size_t>(r)];
      }
      Tape tape;
      Tensor loss;
      {
        TapeScope scope(tape);
        loss = softmax_cross_entropy(run.net.forward(Tensor::constant(std::move(xb))), yb);
      }
      if (!std::isfinite(loss.item())) throw TrainingDiverged("train_attribute_predictor: non-finite loss");
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
    }
    EpochSnapshot snap;
    snap.epoch = epoch + 1;
    snap.train_accuracy = split_accuracy(run.net, train_obs, train_lab);
    snap.val_accuracy = split_accuracy(run.net, val_obs, val_lab);
    snap.train_reps = run.net.features(Tensor::constant(train_obs)).value();
    snap.val_reps = run.net.features(Tensor::constant(val_obs)).value();
    run.snapshots.push_back(std::move(snap));
  }
  return run;
}

PredictorPair train_attribute_predictors(const Matrix& observations, const std::vector<LabelPair>& labels,
                                         int arity_x, int arity_y, const PredictorConfig& cfg) {
  std::vector<int> ax;
  std::vector<int> ay;
  for (const auto& [x, y] : labels) {
    ax.push_back(x);
    ay.push_back(y);
  }
  PredictorConfig cx = cfg;
  PredictorConfig cy = cfg;
  cx.seed = derive_seed(cfg.seed, {1});
  cy.seed = derive_seed(cfg.seed, {2});
  return {train_attribute_predictor(observations, ax, arity_x, cx),
          train_attribute_predictor(observations, ay, arity_y, cy)};
}

ConsistencyReport causal_consistency(const std::vector<Matrix>& reps_x, const std::vector<Matrix>& reps_y,
                                     int true_label, const SubsetClassifier& method, Index subset_size, int k) {
  if (reps_x.size() != reps_y.size() || reps_x.empty()) throw UsageError("causal_consistency: snapshot counts differ");
  if (subset_size < 2 || k < 1) throw UsageError("causal_consistency: bad subset size or window");
  ConsistencyReport rep;
  rep.subset_size = subset_size;
  for (std::size_t e = 0; e < reps_x.size(); ++e) {
    const Matrix& rx = reps_x[e];
    const Matrix& ry = reps_y[e];
    if (rx.rows() != ry.rows()) throw UsageError("causal_consistency: representation sets differ in length");
    const Index subsets = rx.rows() / subset_size;
    if (subsets < 2) throw UsageError("causal_consistency: fewer than two subsets");
    rep.subsets = subsets;
    Index hit = 0;
    for (Index s = 0; s < subsets; ++s) {
      Sample smp;
      smp.x = standardize_columns_lenient(rx.middleRows(s * subset_size, subset_size));
      smp.y = standardize_columns_lenient(ry.middleRows(s * subset_size, subset_size));
      hit += method(smp) == true_label ? 1 : 0;
    }
    rep.per_epoch.push_back(static_cast<double>(hit) / static_cast<double>(subsets));
  }
  const auto w = std::min<std::size_t>(static_cast<std::size_t>(k), rep.per_epoch.size());
  rep.window = static_cast<int>(w);
  const auto first = rep.per_epoch.end() - static_cast<std::ptrdiff_t>(w);
  rep.mean = std::accumulate(first, rep.per_epoch.end(), 0.0) / static_cast<double>(w);
  if (w > 1) {
    double ss = 0.0;
    for (auto it = first; it != rep.per_epoch.end(); ++it) ss += (*it - rep.mean) * (*it - rep.mean);
    rep.std = std::sqrt(ss / static_cast<double>(w - 1));
  }
  return rep;
}

int converged_epoch(const std::vector<EpochSnapshot>& snaps) {
  if (snaps.empty()) return 0;
  double best = 0.0;
  for (const auto& s : snaps) best = std::max(best, s.val_accuracy);
  for (const auto& s : snaps)
    if (s.val_accuracy >= best - 0.01) return s.epoch;
  return snaps.back().epoch;
}

void write_consistency_csv(const std::filesystem::path& path, const std::vector<ConsistencyReport>& reports) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_consistency_csv: cannot open " + path.string());
  out << "graph,method,epoch,consistency\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& r : reports)
    for (std::size_t e = 0; e < r.per_epoch.size(); ++e)
      out << r.graph << ',' << r.method << ',' << e + 1 << ',' << r.per_epoch[e] << '\n';
}

}  // namespace nci
