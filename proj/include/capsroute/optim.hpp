#pragma once

#include <cstddef>
#include <vector>

#include "capsroute/model.hpp"

namespace capsroute {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t t = 0;  // steps taken
};

// One bias-corrected Adam update from the parameters' accumulated gradients.
// Throws TrainingError naming the first parameter with a non-finite gradient;
// no parameter is modified in that case.
void adam_step(std::vector<NamedParameter>& params, AdamState& state, const AdamConfig& config);

}  // namespace capsroute
