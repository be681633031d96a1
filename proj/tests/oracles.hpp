#pragma once

// Scalar-loop reference implementations used by the unit tests and the
// acceptance binary. They deliberately share no code with the library.

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

namespace oracle {

// votes[b][i][j][k] flattened row-major.
struct Votes {
  std::size_t batch, n_in, n_out, d_out;
  std::vector<double> data;

  double at(std::size_t b, std::size_t i, std::size_t j, std::size_t k) const {
    return data[((b * n_in + i) * n_out + j) * d_out + k];
  }
};

inline std::vector<double> squash(const std::vector<double>& s) {
  double sq = 0.0;
  for (double x : s) sq += x * x;
  const double n = std::sqrt(sq + 1e-12);
  std::vector<double> v(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) v[k] = sq / (1.0 + sq) * s[k] / n;
  return v;
}

struct RoutingResult {
  std::vector<double> v;                   // [batch, n_out, d_out]
  std::vector<std::vector<double>> c_per_iteration;  // each [batch, n_in, n_out]
};

inline RoutingResult dynamic_routing(const Votes& u, int r) {
  RoutingResult out;
  out.v.assign(u.batch * u.n_out * u.d_out, 0.0);
  for (std::size_t b = 0; b < u.batch; ++b) {
    std::vector<std::vector<double>> logit(u.n_in, std::vector<double>(u.n_out, 0.0));
    for (int it = 0; it < r; ++it) {
      std::vector<std::vector<double>> c(u.n_in, std::vector<double>(u.n_out));
      for (std::size_t i = 0; i < u.n_in; ++i) {
        double mx = logit[i][0];
        for (std::size_t j = 1; j < u.n_out; ++j) mx = std::max(mx, logit[i][j]);
        double z = 0.0;
        for (std::size_t j = 0; j < u.n_out; ++j) z += std::exp(logit[i][j] - mx);
        for (std::size_t j = 0; j < u.n_out; ++j) c[i][j] = std::exp(logit[i][j] - mx) / z;
      }
      if (out.c_per_iteration.size() <= static_cast<std::size_t>(it)) {
        out.c_per_iteration.emplace_back(u.batch * u.n_in * u.n_out);
      }
      for (std::size_t i = 0; i < u.n_in; ++i)
        for (std::size_t j = 0; j < u.n_out; ++j) out.c_per_iteration[it][(b * u.n_in + i) * u.n_out + j] = c[i][j];
      for (std::size_t j = 0; j < u.n_out; ++j) {
        std::vector<double> s(u.d_out, 0.0);
        for (std::size_t i = 0; i < u.n_in; ++i)
          for (std::size_t k = 0; k < u.d_out; ++k) s[k] += c[i][j] * u.at(b, i, j, k);
        const auto v = squash(s);
        for (std::size_t k = 0; k < u.d_out; ++k) out.v[(b * u.n_out + j) * u.d_out + k] = v[k];
      }
      for (std::size_t i = 0; i < u.n_in; ++i)
        for (std::size_t j = 0; j < u.n_out; ++j) {
          double agree = 0.0;
          for (std::size_t k = 0; k < u.d_out; ++k) agree += u.at(b, i, j, k) * out.v[(b * u.n_out + j) * u.d_out + k];
          logit[i][j] += agree;
        }
    }
  }
  return out;
}

// Attention over input capsules (axis i) unless `over_outputs`.
inline RoutingResult attention_routing(const Votes& u, const std::vector<double>& w, double bias, bool over_outputs,
                                       bool scaled) {
  RoutingResult out;
  out.v.assign(u.batch * u.n_out * u.d_out, 0.0);
  out.c_per_iteration.emplace_back(u.batch * u.n_in * u.n_out);
  auto& a = out.c_per_iteration[0];
  const double scale = scaled ? 1.0 / std::sqrt(static_cast<double>(u.d_out)) : 1.0;
  for (std::size_t b = 0; b < u.batch; ++b) {
    std::vector<std::vector<double>> logit(u.n_in, std::vector<double>(u.n_out));
    for (std::size_t i = 0; i < u.n_in; ++i)
      for (std::size_t j = 0; j < u.n_out; ++j) {
        double z = bias;
        for (std::size_t k = 0; k < u.d_out; ++k) z += w[k] * u.at(b, i, j, k);
        logit[i][j] = z * scale;
      }
    if (!over_outputs) {
      for (std::size_t j = 0; j < u.n_out; ++j) {
        double mx = -INFINITY, z = 0.0;
        for (std::size_t i = 0; i < u.n_in; ++i) mx = std::max(mx, logit[i][j]);
        for (std::size_t i = 0; i < u.n_in; ++i) z += std::exp(logit[i][j] - mx);
        for (std::size_t i = 0; i < u.n_in; ++i) a[(b * u.n_in + i) * u.n_out + j] = std::exp(logit[i][j] - mx) / z;
      }
    } else {
      for (std::size_t i = 0; i < u.n_in; ++i) {
        double mx = -INFINITY, z = 0.0;
        for (std::size_t j = 0; j < u.n_out; ++j) mx = std::max(mx, logit[i][j]);
        for (std::size_t j = 0; j < u.n_out; ++j) z += std::exp(logit[i][j] - mx);
        for (std::size_t j = 0; j < u.n_out; ++j) a[(b * u.n_in + i) * u.n_out + j] = std::exp(logit[i][j] - mx) / z;
      }
    }
    for (std::size_t j = 0; j < u.n_out; ++j) {
      std::vector<double> s(u.d_out, 0.0);
      for (std::size_t i = 0; i < u.n_in; ++i)
        for (std::size_t k = 0; k < u.d_out; ++k) s[k] += a[(b * u.n_in + i) * u.n_out + j] * u.at(b, i, j, k);
      const auto v = squash(s);
      for (std::size_t k = 0; k < u.d_out; ++k) out.v[(b * u.n_out + j) * u.d_out + k] = v[k];
    }
  }
  return out;
}

// Pair counting over every (positive, negative) pair.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double credit = 0.0, pairs = 0.0;
  for (std::size_t p = 0; p < scores.size(); ++p) {
    if (labels[p] != 1) continue;
    for (std::size_t n = 0; n < scores.size(); ++n) {
      if (labels[n] != 0) continue;
      pairs += 1.0;
      if (scores[p] > scores[n]) credit += 1.0;
      else if (scores[p] == scores[n]) credit += 0.5;
    }
  }
  return credit / pairs;
}

// Every distinct score as a threshold, counting predictions >= threshold.
inline double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  double positives = 0.0;
  for (int l : labels) positives += l;
  double ap = 0.0, prev_tp = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t k = 0; k < scores.size(); ++k) {
      if (scores[k] >= t) (labels[k] == 1 ? tp : fp) += 1.0;
    }
    ap += (tp - prev_tp) / positives * (tp / (tp + fp));
    prev_tp = tp;
  }
  return ap;
}

}  // namespace oracle
