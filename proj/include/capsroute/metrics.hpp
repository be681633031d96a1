#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace capsroute {

// Binary confusion counts; class 1 is the positive (patient) class.
struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const Confusion&) const = default;
};

Confusion confusion(std::span<const int> preds, std::span<const int> labels);

double accuracy(const Confusion& c);
// 2TP / (2TP + FP + FN), 0 when the denominator is 0.
double f1(const Confusion& c);
double f1(std::span<const int> preds, std::span<const int> labels);

// Mann-Whitney statistic: fraction of (positive, negative) pairs ranked
// correctly, ties counting one half.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Average precision over descending score thresholds; tied scores form one
// threshold: sum of (recall increment) * (precision at that threshold).
double pr_auc(std::span<const double> scores, std::span<const int> labels);

struct MetricsReport {
  double accuracy = 0.0;
  double f1 = 0.0;
  std::optional<double> roc_auc;  // empty when the split has a single class
  std::optional<double> pr_auc;   // empty when the split has no positives
  Confusion confusion;
  std::size_t n_samples = 0;

  // Flat "key=value" lines; undefined AUCs print as "undefined".
  std::string to_key_value() const;
  // "metric,value,seed" rows without a header.
  std::string to_csv_rows(std::uint64_t seed) const;
  // 2x2 table, rows = actual class, columns = predicted class.
  std::string confusion_table() const;
};

MetricsReport compute_report(std::span<const int> preds, std::span<const int> labels, std::span<const double> scores);

}  // namespace capsroute
