#include <nci/baselines.hpp>
#include <nci/linalg.hpp>
#include <nci/model.hpp>
#include <nci/regress.hpp>

#include <algorithm>
#include <array>

namespace nci {

std::string_view method_name(ScoreMethod m) {
  switch (m) {
    case ScoreMethod::ANM: return "ANM";
    case ScoreMethod::BFit: return "BFit";
    case ScoreMethod::RECI: return "RECI";
  }
  return "?";
}

namespace {

void check_pair(const Sample& s, const char* who) {
  if (s.x.rows() != s.y.rows() || s.x.rows() < 2) throw DimensionError(std::string(who) + ": bad sample shape");
}

double mean_r2(const Matrix& target, const Matrix& pred) {
  const Matrix centered = target.rowwise() - target.colwise().mean();
  double total = 0.0;
  for (Index j = 0; j < target.cols(); ++j) {
    const double ss_tot = centered.col(j).squaredNorm();
    const double ss_res = (target.col(j) - pred.col(j)).squaredNorm();
    total += ss_tot > 1e-12 ? 1.0 - ss_res / ss_tot : 0.0;
  }
  return total / static_cast<double>(target.cols());
}

}  // namespace

double reci_score(const Sample& s, double lambda_ridge) {
  check_pair(s, "reci_score");
  const double xy = ridge_mse_value(quadratic_lift(s.x), s.y, lambda_ridge);
  const double yx = ridge_mse_value(quadratic_lift(s.y), s.x, lambda_ridge);
  constexpr double kFloor = 1e-300;
  return std::log(std::max(yx, kFloor)) - std::log(std::max(xy, kFloor));
}

double hsic(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.rows() < 2) throw DimensionError("hsic: row mismatch");
  const Index m = a.rows();
  const Matrix k = rbf_kernel(a, median_pairwise_distance(a, 1.0));
  const Matrix l = rbf_kernel(b, median_pairwise_distance(b, 1.0));
  // tr(K H L H) with H = I - 11^T/m, via double-centering K.
  Matrix kc = k.rowwise() - k.colwise().mean();
  kc = kc.colwise() - kc.rowwise().mean();
  return kc.cwiseProduct(l).sum() / static_cast<double>(m * m);
}

double anm_score(const Sample& s, double lambda_ridge) {
  check_pair(s, "anm_score");
  const Matrix res_xy = s.y - ridge_predict(separable_cubic_lift(s.x), s.y, lambda_ridge);
  const Matrix res_yx = s.x - ridge_predict(separable_cubic_lift(s.y), s.x, lambda_ridge);
  return hsic(res_yx, s.y) - hsic(res_xy, s.x);
}

double bfit_score(const Sample& s, double lambda_ridge) {
  check_pair(s, "bfit_score");
  const double xy = mean_r2(s.y, ridge_predict(separable_cubic_lift(s.x), s.y, lambda_ridge));
  const double yx = mean_r2(s.x, ridge_predict(separable_cubic_lift(s.y), s.x, lambda_ridge));
  return xy - yx;
}

double score(ScoreMethod method, const Sample& s, double lambda_ridge) {
  switch (method) {
    case ScoreMethod::ANM: return anm_score(s, lambda_ridge);
    case ScoreMethod::BFit: return bfit_score(s, lambda_ridge);
    case ScoreMethod::RECI: return reci_score(s, lambda_ridge);
  }
  return 0.0;
}

int classify_score(double s, double tau) {
  if (std::abs(s) < tau) return 0;
  return s > 0.0 ? 1 : 2;
}

double threshold_accuracy(std::span<const double> scores, std::span<const int> labels, double tau) {
  if (scores.size() != labels.size() || scores.empty()) throw UsageError("threshold_accuracy: size mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) hit += classify_score(scores[i], tau) == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(scores.size());
}

double calibrate_threshold(std::span<const double> scores, std::span<const int> labels, int grid) {
  if (scores.size() != labels.size() || scores.empty()) throw UsageError("calibrate_threshold: size mismatch");
  if (grid < 2) throw UsageError("calibrate_threshold: grid must have >= 2 points");
  std::array<bool, 3> seen{};
  for (int l : labels) {
    if (l < 0 || l > 2) throw UsageError("calibrate_threshold: label out of range");
    seen[static_cast<std::size_t>(l)] = true;
  }
  if (!(seen[0] && seen[1] && seen[2])) throw UsageError("calibrate_threshold: validation set lacks a label");

  std::vector<double> mag;
  mag.reserve(scores.size());
  for (double s : scores) mag.push_back(std::abs(s));
  std::sort(mag.begin(), mag.end());
  const double pos = 0.99 * static_cast<double>(mag.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, mag.size() - 1);
  const double top = mag[lo] + (pos - static_cast<double>(lo)) * (mag[hi] - mag[lo]);

  double best_tau = 0.0;
  double best_acc = -1.0;
  for (int k = 0; k < grid; ++k) {
    const double tau = top * static_cast<double>(k) / static_cast<double>(grid - 1);
    const double acc = threshold_accuracy(scores, labels, tau);
    if (acc > best_acc) {
      best_acc = acc;
      best_tau = tau;
    }
  }
  return best_tau;
}

double& ThresholdTable::at(ScoreMethod m) {
  switch (m) {
    case ScoreMethod::ANM: return anm;
    case ScoreMethod::BFit: return bfit;
    default: return reci;
  }
}

double ThresholdTable::at(ScoreMethod m) const { return const_cast<ThresholdTable*>(this)->at(m); }

ThresholdTable calibrate_all(std::span<const Sample> validation, double lambda_ridge) {
  std::vector<int> labels;
  for (const auto& s : validation) labels.push_back(s.label);
  ThresholdTable t;
  for (auto m : {ScoreMethod::ANM, ScoreMethod::BFit, ScoreMethod::RECI}) {
    std::vector<double> sc;
    sc.reserve(validation.size());
    for (const auto& s : validation) sc.push_back(score(m, s, lambda_ridge));
    t.at(m) = calibrate_threshold(sc, labels);
  }
  return t;
}

// --- NCC ------------------------------------------------------------------------

NCCParams NCCParams::init(Index dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {streams::kInit}));
  NCCParams p;
  p.dim = dim;
  p.embed = Mlp::init({2 * dim, 32, 32}, rng);
  p.head = Mlp::init({32, 32, 3}, rng);
  return p;
}

std::vector<Tensor> NCCParams::parameters() const {
  auto out = embed.parameters();
  auto h = head.parameters();
  out.insert(out.end(), h.begin(), h.end());
  return out;
}

Tensor ncc_logits(const NCCParams& p, std::span<const Sample> batch) {
  if (batch.empty()) throw UsageError("ncc_logits: empty batch");
  const Index m = batch.front().x.rows();
  const auto n = static_cast<Index>(batch.size());
  Matrix pairs(n * m, 2 * p.dim);
  for (Index i = 0; i < n; ++i) {
    const Sample& s = batch[static_cast<std::size_t>(i)];
    if (s.x.rows() != m || s.y.rows() != m || s.x.cols() != p.dim || s.y.cols() != p.dim) {
      throw DimensionError("ncc_logits: sample shape mismatch");
    }
    pairs.block(i * m, 0, m, p.dim) = s.x;
    pairs.block(i * m, p.dim, m, p.dim) = s.y;
  }
  const Tensor pooled = row_mean_pool(tanh(p.embed.forward(Tensor::constant(std::move(pairs)))), m);
  return p.head.forward(pooled);
}

NCCTrainResult ncc_train(const GenConfig& gen, const NCCTrainConfig& cfg, std::optional<FunctionClass> exclude) {
  gen.validate();
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.samples_per_epoch < 1) throw ConfigError("NCCTrainConfig: bad sizes");
  NCCTrainResult result{NCCParams::init(gen.dim, cfg.seed), {}, {}};
  AdamW opt(result.params.parameters(), cfg.adamw);
  const std::uint64_t stream = derive_seed(cfg.seed, {streams::kTrain});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto first = static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(cfg.samples_per_epoch);
    const auto data = generate_epoch(gen, stream, static_cast<std::size_t>(cfg.samples_per_epoch), exclude, first);
    for (const auto& s : data) ++result.class_counts[static_cast<std::size_t>(s.func)];
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t at = 0; at < data.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t len = std::min(static_cast<std::size_t>(cfg.batch_size), data.size() - at);
      const auto batch = std::span(data).subspan(at, len);
      std::vector<int> labels;
      for (const auto& s : batch) labels.push_back(s.label);
      Tape tape;
      Tensor loss;
      {
        TapeScope scope(tape);
        loss = softmax_cross_entropy(ncc_logits(result.params, batch), labels);
      }
      if (!std::isfinite(loss.item())) {
        throw TrainingDiverged("ncc_train: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      total += loss.item();
      ++steps;
    }
    result.epoch_loss.push_back(total / static_cast<double>(steps));
  }
  return result;
}

int ncc_predict(const NCCParams& p, const Sample& s) {
  return argmax_label(ncc_logits(p, std::span(&s, 1)).value().row(0));
}

std::vector<int> ncc_predict_labels(const NCCParams& p, std::span<const Sample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (std::size_t at = 0; at < samples.size(); at += 64) {
    const std::size_t len = std::min<std::size_t>(64, samples.size() - at);
    const Tensor logits = ncc_logits(p, samples.subspan(at, len));
    for (Index i = 0; i < logits.rows(); ++i) out.push_back(argmax_label(logits.value().row(i)));
  }
  return out;
}

}  // namespace nci
