#include "capsroute/train.hpp"

#include <chrono>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "capsroute/config.hpp"
#include "capsroute/errors.hpp"
#include "capsroute/optim.hpp"
#include "capsroute/rng.hpp"

namespace capsroute {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const Model& model) {
  Snapshot s;
  for (const auto& p : model.parameters()) s.emplace_back(p.value.data().begin(), p.value.data().end());
  return s;
}

void restore(Model& model, const Snapshot& s) {
  auto& params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto d = params[k].value.data();
    std::copy(s[k].begin(), s[k].end(), d.begin());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (max_epochs == 0) throw ConfigError("train.max_epochs must be positive");
  if (patience > max_epochs) throw ConfigError("train.patience must not exceed train.max_epochs");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
}

bool EarlyStopping::update(std::size_t epoch, double loss) {
  if (loss < best_loss_) {
    best_loss_ = loss;
    best_epoch_ = epoch;
    since_best_ = 0;
    return false;
  }
  ++since_best_;
  return since_best_ >= patience_;
}

const MetricsReport* ExperimentRecord::find_metrics(const std::string& split) const {
  for (const auto& [name, report] : metrics) {
    if (name == split) return &report;
  }
  return nullptr;
}

std::string ExperimentRecord::to_text() const {
  std::ostringstream os;
  os << "[config]\n" << config << "[run]\n";
  os << "seed=" << seed << '\n';
  os << "epochs_run=" << epochs.size() << '\n';
  os << "best_epoch=" << best_epoch << '\n';
  os << "best_val_loss=" << fmt(best_val_loss) << '\n';
  os << "early_stopped=" << (early_stopped ? "true" : "false") << '\n';
  os << "[epochs]\n";
  os << "epoch,train_loss,train_classification,train_regression,train_reconstruction,train_accuracy,val_loss\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.train_classification) << ','
       << fmt(e.train_regression) << ',' << fmt(e.train_reconstruction) << ',' << fmt(e.train_accuracy) << ','
       << fmt(e.val_loss) << '\n';
  }
  for (const auto& [name, report] : metrics) os << "[metrics." << name << "]\n" << report.to_key_value();
  return os.str();
}

std::string ExperimentRecord::timings_text() const {
  return "train_seconds=" + fmt(train_seconds) + "\neval_seconds=" + fmt(eval_seconds) + '\n';
}

Evaluation evaluate(const Model& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw ConfigError("cannot evaluate an empty split");
  if (batch_size == 0) throw ConfigError("evaluation batch size must be positive");
  Evaluation ev;
  double loss_sum = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.resize(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = make_batch(data, idx);
    const ModelOutput out = model.forward(batch.images, true);
    loss_sum += model.loss(out, batch).total.item() * static_cast<double>(idx.size());
    for (const auto& p : model.predict(out)) {
      ev.preds.push_back(p.label);
      ev.scores.push_back(p.score);
    }
    ev.labels.insert(ev.labels.end(), batch.labels.begin(), batch.labels.end());
  }
  ev.loss = loss_sum / static_cast<double>(data.size());
  ev.report = compute_report(ev.preds, ev.labels, ev.scores);
  return ev;
}

ExperimentRecord train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config) {
  config.validate();
  if (train_set.size() == 0) throw ConfigError("training split is empty");
  if (val_set.size() == 0) throw ConfigError("validation split is empty");
  const Shape& in = model.input_shape();
  if (train_set.channels != in[0] || train_set.height != in[1] || train_set.width != in[2]) {
    throw ConfigError("dataset images " + std::to_string(train_set.channels) + "x" + std::to_string(train_set.height) +
                      "x" + std::to_string(train_set.width) + " do not match model input " + shape_str(in));
  }

  model.config().loss.class_proportions = class_proportions(train_set.labels, model.config().num_classes);
  model.config().loss.validate();

  ExperimentRecord record;
  record.config = to_config_text(model.config(), config);
  record.seed = config.seed;

  const auto start = std::chrono::steady_clock::now();
  const AdamConfig adam{config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps};
  AdamState state;
  Rng shuffle_rng(stream_key(config.seed, 0x62617463));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Snapshot best = snapshot(model);
  EarlyStopping stopper(config.patience);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    EpochLog log;
    log.epoch = epoch;
    std::size_t correct = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - pos);
      const Batch batch = make_batch(train_set, std::span<const std::size_t>(order).subspan(pos, n));
      Tape tape;
      LossTerms terms;
      {
        TapeScope scope(tape);
        const ModelOutput out = model.forward(batch.images, true);
        terms = model.loss(out, batch);
        const auto preds = model.predict(out);
        for (std::size_t b = 0; b < n; ++b) correct += static_cast<int>(preds[b].label) == batch.labels[b];
      }
      model.zero_grad();
      tape.backward(terms.total);
      adam_step(model.parameters(), state, adam);
      const double w = static_cast<double>(n);
      log.train_loss += terms.total.item() * w;
      log.train_classification += terms.classification * w;
      log.train_regression += terms.regression * w;
      log.train_reconstruction += terms.reconstruction * w;
    }
    const double total = static_cast<double>(order.size());
    log.train_loss /= total;
    log.train_classification /= total;
    log.train_regression /= total;
    log.train_reconstruction /= total;
    log.train_accuracy = static_cast<double>(correct) / total;
    log.val_loss = evaluate(model, val_set).loss;
    record.epochs.push_back(log);

    const bool stop = stopper.update(epoch, log.val_loss);
    if (stopper.improved()) best = snapshot(model);
    if (stop) {
      record.early_stopped = epoch < config.max_epochs;
      break;
    }
  }
  record.best_epoch = stopper.best_epoch();
  record.best_val_loss = stopper.best_loss();
  if (record.best_epoch > 0) restore(model, best);
  record.train_seconds = seconds_since(start);

  const auto eval_start = std::chrono::steady_clock::now();
  record.metrics.emplace_back("train", evaluate(model, train_set).report);
  record.metrics.emplace_back("val", evaluate(model, val_set).report);
  record.eval_seconds = seconds_since(eval_start);
  return record;
}

std::vector<SweepRow> sweep_lambda(std::span<const double> grid, const ModelConfig& model_config,
                                   const TrainConfig& config, const DatasetSplits& splits, std::uint64_t model_seed) {
  std::vector<SweepRow> rows;
  const Shape input{splits.train.channels, splits.train.height, splits.train.width};
  for (double lambda : grid) {
    if (!(lambda == 0.0 || (lambda >= 1e-4 && lambda < 1.0))) {
      throw ConfigError("lambda_reg grid values must be 0 or lie in [1e-4, 1), got " + fmt(lambda));
    }
    ModelConfig mc = model_config;
    mc.loss.lambda_reg = lambda;
    Model model(mc, input, model_seed);
    SweepRow row;
    row.lambda_reg = lambda;
    row.record = train(model, splits.train, splits.val, config);
    row.test = evaluate(model, splits.test).report;
    row.record.metrics.emplace_back("test", row.test);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_table_csv(const std::vector<SweepRow>& rows) {
  const auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("undefined"); };
  std::ostringstream os;
  os << "lambda_reg,accuracy,f1,roc_auc,pr_auc,best_epoch,best_val_loss\n";
  for (const auto& r : rows) {
    os << fmt(r.lambda_reg) << ',' << fmt(r.test.accuracy) << ',' << fmt(r.test.f1) << ',' << opt(r.test.roc_auc)
       << ',' << opt(r.test.pr_auc) << ',' << r.record.best_epoch << ',' << fmt(r.record.best_val_loss) << '\n';
  }
  return os.str();
}

}  // namespace capsroute
