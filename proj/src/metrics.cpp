#include "capsroute/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <vector>

#include "capsroute/errors.hpp"

namespace capsroute {

namespace {

void check_binary(std::span<const int> values, const char* what) {
  for (int v : values) {
    if (v != 0 && v != 1) throw ContractError(std::string(what) + " must be binary (0/1)");
  }
}

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw ContractError("metric inputs differ in length: " + std::to_string(a) + " vs " + std::to_string(b));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Confusion confusion(std::span<const int> preds, std::span<const int> labels) {
  check_sizes(preds.size(), labels.size());
  check_binary(preds, "predictions");
  check_binary(labels, "labels");
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] == 1) {
      (preds[i] == 1 ? c.tp : c.fn) += 1;
    } else {
      (preds[i] == 1 ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

double accuracy(const Confusion& c) {
  if (c.total() == 0) return 0.0;
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double f1(const Confusion& c) {
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 0.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

double f1(std::span<const int> preds, std::span<const int> labels) { return f1(confusion(preds, labels)); }

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores.size(), labels.size());
  check_binary(labels, "labels");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw UndefinedMetricError("ROC AUC needs both classes present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the concordant-pair count, so ties stay integral.
  std::uint64_t twice_concordant = 0;
  std::uint64_t negatives_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos : neg) += 1;
      ++j;
    }
    twice_concordant += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    i = j;
  }
  return static_cast<double>(twice_concordant) /
         (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores.size(), labels.size());
  check_binary(labels, "labels");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0) throw UndefinedMetricError("PR AUC needs at least one positive");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t tp = 0, fp = 0;
  double ap = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1) {
        ++pos;
      } else {
        ++fp;
      }
      ++j;
    }
    tp += pos;
    if (pos > 0) {
      ap += (static_cast<double>(pos) / static_cast<double>(positives)) *
            (static_cast<double>(tp) / static_cast<double>(tp + fp));
    }
    i = j;
  }
  return ap;
}

std::string MetricsReport::to_key_value() const {
  std::ostringstream os;
  os << "n_samples=" << n_samples << '\n'
     << "accuracy=" << fmt(accuracy) << '\n'
     << "f1=" << fmt(f1) << '\n'
     << "roc_auc=" << (roc_auc ? fmt(*roc_auc) : "undefined") << '\n'
     << "pr_auc=" << (pr_auc ? fmt(*pr_auc) : "undefined") << '\n'
     << "tp=" << confusion.tp << '\n'
     << "fp=" << confusion.fp << '\n'
     << "tn=" << confusion.tn << '\n'
     << "fn=" << confusion.fn << '\n';
  return os.str();
}

std::string MetricsReport::to_csv_rows(std::uint64_t seed) const {
  std::ostringstream os;
  auto row = [&](const char* name, const std::string& value) { os << name << ',' << value << ',' << seed << '\n'; };
  row("accuracy", fmt(accuracy));
  row("f1", fmt(f1));
  row("roc_auc", roc_auc ? fmt(*roc_auc) : "undefined");
  row("pr_auc", pr_auc ? fmt(*pr_auc) : "undefined");
  row("tp", std::to_string(confusion.tp));
  row("fp", std::to_string(confusion.fp));
  row("tn", std::to_string(confusion.tn));
  row("fn", std::to_string(confusion.fn));
  return os.str();
}

std::string MetricsReport::confusion_table() const {
  std::ostringstream os;
  os << "actual\\predicted,0,1\n"
     << "0," << confusion.tn << ',' << confusion.fp << '\n'
     << "1," << confusion.fn << ',' << confusion.tp << '\n';
  return os.str();
}

MetricsReport compute_report(std::span<const int> preds, std::span<const int> labels, std::span<const double> scores) {
  check_sizes(preds.size(), scores.size());
  MetricsReport r;
  r.confusion = confusion(preds, labels);
  r.n_samples = labels.size();
  r.accuracy = accuracy(r.confusion);
  r.f1 = f1(r.confusion);
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  const auto negatives = static_cast<std::ptrdiff_t>(labels.size()) - positives;
  if (positives > 0 && negatives > 0) r.roc_auc = roc_auc(scores, labels);
  if (positives > 0) r.pr_auc = pr_auc(scores, labels);
  return r;
}

}  // namespace capsroute
