#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "capsroute/metrics.hpp"
#include "capsroute/model.hpp"
#include "capsroute/synth.hpp"

namespace capsroute {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 8;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::uint64_t seed = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

// Stops once the monitored loss has failed to improve on its best value for
// `patience` consecutive epochs.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Returns true when training should stop after this epoch.
  bool update(std::size_t epoch, double loss);
  bool improved() const { return since_best_ == 0; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t since_best_ = 0;
  std::size_t best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_classification = 0.0;
  double train_regression = 0.0;
  double train_reconstruction = 0.0;
  double train_accuracy = 0.0;  // running, from each batch's pre-update forward pass
  double val_loss = 0.0;
};

struct ExperimentRecord {
  std::string config;  // key=value snapshot sufficient to re-run
  std::uint64_t seed = 0;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool early_stopped = false;
  std::vector<std::pair<std::string, MetricsReport>> metrics;  // split name -> report
  double train_seconds = 0.0;
  double eval_seconds = 0.0;

  const MetricsReport* find_metrics(const std::string& split) const;
  // Deterministic part of the record; wall-clock timings are left out.
  std::string to_text() const;
  std::string timings_text() const;
};

struct Evaluation {
  MetricsReport report;
  double loss = 0.0;  // batch-size-weighted mean total loss
  std::vector<int> labels;
  std::vector<int> preds;
  std::vector<double> scores;
};

// Forward-only pass over `data` in fixed order.
Evaluation evaluate(const Model& model, const Dataset& data, std::size_t batch_size = 32);

// Adam training with fixed-seed batch shuffling and early stopping on the
// total validation loss; the best-validation parameters are restored before
// returning. Class proportions for the weighted loss are taken from `train`.
ExperimentRecord train(Model& model, const Dataset& train, const Dataset& val, const TrainConfig& config);

struct SweepRow {
  double lambda_reg = 0.0;
  ExperimentRecord record;
  MetricsReport test;
};

// One model per lambda_reg on identical data and seed.
std::vector<SweepRow> sweep_lambda(std::span<const double> grid, const ModelConfig& model, const TrainConfig& config,
                                   const DatasetSplits& splits, std::uint64_t model_seed);
// "lambda_reg,accuracy,f1,roc_auc,pr_auc,best_epoch,best_val_loss" with a header row.
std::string sweep_table_csv(const std::vector<SweepRow>& rows);

}  // namespace capsroute
