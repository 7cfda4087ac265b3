#include <nci/dataset_io.hpp>
#include <nci/model.hpp>

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace nci {

void Architecture::validate() const {
  if (dim < 1 || hidden < 1 || shared_width < 1 || sup_width < 1 || z_dim < 1 || cls_width < 1) {
    throw ConfigError("Architecture: all widths must be >= 1");
  }
}

NCINetParams NCINetParams::init(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(derive_seed(seed, {streams::kInit}));
  NCINetParams p;
  p.arch = arch;
  p.shared = Mlp::init({arch.dim, arch.shared_width, arch.hidden}, rng);
  p.supervised = Mlp::init({2 * arch.hidden, arch.sup_width, arch.z_dim}, rng);
  p.classifier = Mlp::init({arch.z_dim + 3, arch.cls_width, 3}, rng);
  return p;
}

std::vector<Tensor> NCINetParams::parameters() const {
  std::vector<Tensor> out;
  for (const Mlp* m : {&shared, &supervised, &classifier}) {
    auto ps = m->parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

NCINetParams NCINetParams::clone() const {
  NCINetParams c;
  c.arch = arch;
  c.shared = shared.clone();
  c.supervised = supervised.clone();
  c.classifier = classifier.clone();
  return c;
}

void TrainConfig::validate() const {
  if (!(lambda_ridge > 0.0)) throw ConfigError("TrainConfig: lambda_ridge must be > 0");
  if (!(beta_adv > 0.0)) throw ConfigError("TrainConfig: beta_adv must be > 0");
  if (!(lambda_adv >= 0.0)) throw ConfigError("TrainConfig: lambda_adv must be >= 0");
  if (!(adamw.lr > 0.0) || adamw.weight_decay < 0.0) throw ConfigError("TrainConfig: bad optimizer settings");
  if (epochs < 1 || batch_size < 2 || samples_per_epoch < 2 || validation_size < 1) {
    throw ConfigError("TrainConfig: epochs >= 1, batch_size >= 2, samples_per_epoch >= 2 required");
  }
  if (samples_per_epoch % batch_size == 1) {
    throw ConfigError("TrainConfig: samples_per_epoch leaves a final batch of one sample");
  }
}

namespace {

void check_sample(const NCINetParams& p, const Sample& s) {
  if (s.x.cols() != p.arch.dim || s.y.cols() != p.arch.dim || s.x.rows() != s.y.rows() || s.x.rows() < 1) {
    throw DimensionError("NCINet: sample shape " + shape_str(s.x.rows(), s.x.cols()) + "/" +
                         shape_str(s.y.rows(), s.y.cols()) + " does not match dim " + std::to_string(p.arch.dim));
  }
}

}  // namespace

Encoding encode(const NCINetParams& p, const Sample& s) {
  check_sample(p, s);
  Encoding e;
  e.zx = p.shared.forward(Tensor::constant(s.x));
  e.zy = p.shared.forward(Tensor::constant(s.y));
  e.z = mean_rows(p.supervised.forward(concat_cols(e.zx, e.zy)));
  return e;
}

ForwardResult forward(const NCINetParams& p, const Sample& s, double lambda_ridge) {
  const Encoding e = encode(p, s);
  ForwardResult r;
  r.z = e.z;
  r.mse_xy = ridge_mse(e.zx, Tensor::constant(s.y), lambda_ridge);
  r.mse_yx = ridge_mse(e.zy, Tensor::constant(s.x), lambda_ridge);
  r.fusion = fusion_features(r.mse_xy, r.mse_yx);
  r.logits = p.classifier.forward(concat_cols(r.z, r.fusion));
  return r;
}

BatchForward forward_batch(const NCINetParams& p, std::span<const Sample> batch, double lambda_ridge) {
  if (batch.empty()) throw UsageError("forward_batch: empty batch");
  const Index m = batch.front().x.rows();
  const Index d = p.arch.dim;
  const auto n = static_cast<Index>(batch.size());
  Matrix xs(n * m, d);
  Matrix ys(n * m, d);
  for (Index i = 0; i < n; ++i) {
    const Sample& s = batch[static_cast<std::size_t>(i)];
    check_sample(p, s);
    if (s.x.rows() != m) throw DimensionError("forward_batch: samples differ in pair count");
    xs.middleRows(i * m, m) = s.x;
    ys.middleRows(i * m, m) = s.y;
  }
  const Tensor zx = p.shared.forward(Tensor::constant(std::move(xs)));
  const Tensor zy = p.shared.forward(Tensor::constant(std::move(ys)));

  BatchForward out;
  out.z = row_mean_pool(p.supervised.forward(concat_cols(zx, zy)), m);

  std::vector<Tensor> fusions;
  std::vector<Tensor> mses;
  fusions.reserve(batch.size());
  mses.reserve(2 * batch.size());
  for (Index i = 0; i < n; ++i) {
    const Sample& s = batch[static_cast<std::size_t>(i)];
    const Tensor mxy = ridge_mse(slice_rows(zx, i * m, m), Tensor::constant(s.y), lambda_ridge);
    const Tensor myx = ridge_mse(slice_rows(zy, i * m, m), Tensor::constant(s.x), lambda_ridge);
    fusions.push_back(fusion_features(mxy, myx));
    mses.push_back(mxy);
    mses.push_back(myx);
  }
  out.fusion = concat_rows(fusions);
  out.regression = scale(sum(concat_rows(mses)), 1.0 / static_cast<double>(n));
  out.logits = p.classifier.forward(concat_cols(out.z, out.fusion));
  return out;
}

Losses losses(const NCINetParams& p, std::span<const Sample> batch, const TrainConfig& cfg) {
  if (batch.size() < 2) throw UsageError("losses: batch needs at least two samples");
  const BatchForward f = forward_batch(p, batch, cfg.lambda_ridge);
  const auto n = static_cast<Index>(batch.size());

  std::vector<int> labels;
  Matrix yf(n, kNumFunctionClasses);
  for (Index i = 0; i < n; ++i) {
    const Sample& s = batch[static_cast<std::size_t>(i)];
    labels.push_back(s.label);
    yf.row(i) = function_one_hot(s.func).transpose();
  }
  Losses l;
  l.classification = softmax_cross_entropy(f.logits, labels);
  l.regression = f.regression;
  const Tensor target = Tensor::constant(std::move(yf));
  KernelConfig kc;
  kc.beta = cfg.beta_adv;
  const Tensor pred = kernel_ridge_predict(f.z, target, kc);
  l.adversarial = scale(frobenius_sq(sub(target, pred)), -1.0 / static_cast<double>(n));
  l.total = add(l.classification, l.regression);
  if (cfg.lambda_adv != 0.0) l.total = add(l.total, scale(l.adversarial, cfg.lambda_adv));
  return l;
}

int argmax_label(const RowVector& logits) {
  int best = 0;
  for (Index k = 1; k < logits.size(); ++k)
    if (logits(k) > logits(best)) best = static_cast<int>(k);
  return best;
}

Prediction predict(const NCINetParams& p, const Sample& s, double lambda_ridge) {
  const ForwardResult f = forward(p, s, lambda_ridge);
  Prediction out;
  out.logits = f.logits.value().row(0);
  out.label = argmax_label(out.logits);
  return out;
}

std::vector<int> predict_labels(const NCINetParams& p, std::span<const Sample> samples, double lambda_ridge) {
  std::vector<int> out;
  out.reserve(samples.size());
  constexpr std::size_t kChunk = 64;
  for (std::size_t at = 0; at < samples.size();) {
    std::size_t len = std::min(kChunk, samples.size() - at);
    // Chunks only group samples with a common pair count.
    const Index m = samples[at].x.rows();
    std::size_t k = 1;
    while (k < len && samples[at + k].x.rows() == m) ++k;
    len = k;
    const BatchForward f = forward_batch(p, samples.subspan(at, len), lambda_ridge);
    for (Index i = 0; i < f.logits.rows(); ++i) out.push_back(argmax_label(f.logits.value().row(i)));
    at += len;
  }
  return out;
}

double accuracy(const NCINetParams& p, std::span<const Sample> samples, double lambda_ridge) {
  if (samples.empty()) return 0.0;
  const auto pred = predict_labels(p, samples, lambda_ridge);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) hit += pred[i] == samples[i].label ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(samples.size());
}

TrainResult train(const GenConfig& gen, const TrainConfig& cfg, std::optional<FunctionClass> exclude,
                  const EpochCallback& on_epoch) {
  gen.validate();
  cfg.validate();
  Architecture arch;
  arch.dim = gen.dim;
  TrainResult result{NCINetParams::init(arch, cfg.seed), {}, {}};
  AdamW opt(result.params.parameters(), cfg.adamw);

  const std::uint64_t train_stream = derive_seed(cfg.seed, {streams::kTrain});
  const auto validation = generate_epoch(gen, derive_seed(cfg.seed, {streams::kValidation}),
                                         static_cast<std::size_t>(cfg.validation_size), exclude);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto first = static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(cfg.samples_per_epoch);
    const auto data = generate_epoch(gen, train_stream, static_cast<std::size_t>(cfg.samples_per_epoch), exclude, first);
    for (const auto& s : data) ++result.class_counts[static_cast<std::size_t>(s.func)];

    EpochMetrics em;
    em.epoch = epoch + 1;
    std::size_t steps = 0;
    for (std::size_t at = 0; at < data.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t len = std::min(static_cast<std::size_t>(cfg.batch_size), data.size() - at);
      Tape tape;
      Losses l;
      {
        TapeScope scope(tape);
        l = losses(result.params, std::span(data).subspan(at, len), cfg);
      }
      const double total = l.total.item();
      if (!std::isfinite(total)) {
        throw TrainingDiverged("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                               std::to_string(steps));
      }
      opt.zero_grad();
      tape.backward(l.total);
      opt.step();
      em.loss_c += l.classification.item();
      em.loss_r += l.regression.item();
      em.loss_a += l.adversarial.item();
      em.total += total;
      ++steps;
    }
    const auto inv = 1.0 / static_cast<double>(steps);
    em.loss_c *= inv;
    em.loss_r *= inv;
    em.loss_a *= inv;
    em.total *= inv;

    const auto pred = predict_labels(result.params, validation, cfg.lambda_ridge);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < validation.size(); ++i) hit += pred[i] == validation[i].label ? 1 : 0;
    em.val_accuracy = static_cast<double>(hit) / static_cast<double>(validation.size());
    if (validation.size() >= 2) em.val_total = losses(result.params, validation, cfg).total.item();
    result.history.push_back(em);
    if (on_epoch) on_epoch(em);
  }
  return result;
}

// --- checkpoints ----------------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'N', 'C', 'I', 'N', 'E', 'T', '0', '1'};

nlohmann::json arch_json(const Architecture& a) {
  return {{"dim", a.dim},         {"hidden", a.hidden}, {"shared_width", a.shared_width},
          {"sup_width", a.sup_width}, {"z_dim", a.z_dim},   {"cls_width", a.cls_width}};
}

nlohmann::json train_json(const TrainConfig& c) {
  return {{"lambda_ridge", c.lambda_ridge},
          {"beta_adv", c.beta_adv},
          {"lambda_adv", c.lambda_adv},
          {"lr", c.adamw.lr},
          {"weight_decay", c.adamw.weight_decay},
          {"beta1", c.adamw.beta1},
          {"beta2", c.adamw.beta2},
          {"eps", c.adamw.eps},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"samples_per_epoch", c.samples_per_epoch},
          {"validation_size", c.validation_size},
          {"seed", c.seed}};
}

void put_f64(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((bits >> (8 * k)) & 0xff);
  out.write(b, 8);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError("checkpoint: truncated weights");
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NCINetParams& p, const TrainConfig& cfg) {
  nlohmann::json header;
  header["arch"] = arch_json(p.arch);
  header["train"] = train_json(cfg);
  auto shapes = nlohmann::json::array();
  const auto params = p.parameters();
  for (const auto& t : params) shapes.push_back({t.rows(), t.cols()});
  header["shapes"] = std::move(shapes);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
  out.write(kCkptMagic, 8);
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int k = 0; k < 4; ++k) out.put(static_cast<char>((len >> (8 * k)) & 0xff));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : params) {
    const Matrix& v = t.value();
    for (Index i = 0; i < v.rows(); ++i)
      for (Index j = 0; j < v.cols(); ++j) put_f64(out, v(i, j));
  }
  if (!out) throw IoError("save_checkpoint: write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCkptMagic, 8) != 0) throw IoError("checkpoint: bad magic");
  unsigned char lb[4];
  if (!in.read(reinterpret_cast<char*>(lb), 4)) throw IoError("checkpoint: truncated header");
  const std::uint32_t len = lb[0] | (lb[1] << 8) | (lb[2] << 16) | (static_cast<std::uint32_t>(lb[3]) << 24);
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw IoError("checkpoint: truncated header");

  Checkpoint ck;
  try {
    const auto h = nlohmann::json::parse(text);
    const auto& a = h.at("arch");
    Architecture arch;
    arch.dim = a.at("dim").get<Index>();
    arch.hidden = a.at("hidden").get<Index>();
    arch.shared_width = a.at("shared_width").get<Index>();
    arch.sup_width = a.at("sup_width").get<Index>();
    arch.z_dim = a.at("z_dim").get<Index>();
    arch.cls_width = a.at("cls_width").get<Index>();
    const auto& t = h.at("train");
    ck.train.lambda_ridge = t.at("lambda_ridge").get<double>();
    ck.train.beta_adv = t.at("beta_adv").get<double>();
    ck.train.lambda_adv = t.at("lambda_adv").get<double>();
    ck.train.adamw.lr = t.at("lr").get<double>();
    ck.train.adamw.weight_decay = t.at("weight_decay").get<double>();
    ck.train.adamw.beta1 = t.at("beta1").get<double>();
    ck.train.adamw.beta2 = t.at("beta2").get<double>();
    ck.train.adamw.eps = t.at("eps").get<double>();
    ck.train.epochs = t.at("epochs").get<int>();
    ck.train.batch_size = t.at("batch_size").get<int>();
    ck.train.samples_per_epoch = t.at("samples_per_epoch").get<int>();
    ck.train.validation_size = t.at("validation_size").get<int>();
    ck.train.seed = t.at("seed").get<std::uint64_t>();

    ck.params = NCINetParams::init(arch, 0);
    auto params = ck.params.parameters();
    const auto& shapes = h.at("shapes");
    if (shapes.size() != params.size()) throw IoError("checkpoint: parameter count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (shapes[k][0].get<Index>() != params[k].rows() || shapes[k][1].get<Index>() != params[k].cols()) {
        throw IoError("checkpoint: parameter shape mismatch");
      }
      Matrix& v = params[k].mutable_value();
      for (Index i = 0; i < v.rows(); ++i)
        for (Index j = 0; j < v.cols(); ++j) v(i, j) = get_f64(in);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: malformed header: ") + e.what());
  }
  return ck;
}

}  // namespace nci
